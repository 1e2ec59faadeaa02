// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// carat: data generation, training, evaluation, gradient checks and the
// comparison experiments.

#include <omp.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carat/checkpoint_file.hpp"
#include "carat/commands.hpp"
#include "carat/error.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string precision;
  std::string preset;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_out) {
  cmd->add_option("--config", f.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "random seed (overrides the config)");
  auto* out = cmd->add_option("--out", f.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--precision", f.precision, "standard (float) or verify (long double)")
      ->check(CLI::IsMember({"standard", "verify"}));
  cmd->add_option("--preset", f.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--set", f.overrides, "extra key=value override, repeatable");
}

carat::RunConfig build_config(const CommonFlags& f, carat::RunConfig base) {
  carat::RunConfig cfg = !f.config.empty() ? carat::load_run_config(f.config, f.preset)
                         : !f.preset.empty() ? carat::RunConfig::from_preset(f.preset)
                                             : std::move(base);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw carat::ConfigError("--set", "expected key=value, got '" + kv + "'");
    cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (!f.precision.empty()) cfg.apply("precision", f.precision);
  return cfg;
}

carat::CommandOptions options(const CommonFlags& f, carat::RunConfig cfg) {
  carat::CommandOptions opt;
  opt.config = std::move(cfg);
  opt.out = f.out;
  opt.log = &std::cerr;
  return opt;
}

bool verify(const carat::RunConfig& cfg) { return cfg.precision == carat::Precision::verify; }

int threads_from_env() {
  const char* env = std::getenv("CARAT_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw carat::ConfigError("CARAT_THREADS", "expected a positive integer");
  return static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carat: multi-modal multi-label emotion recognition"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, grad_f, ablate_f, fusion_f;
  std::string resume;
  std::uint64_t max_steps = 0;
  int repeats = 1;
  std::string ckpt, data, eval_out;

  auto* gen = app.add_subcommand("gen-data", "write synthetic train/val/test datasets");
  add_common(gen, gen_f, true);

  auto* train = app.add_subcommand("train", "train and write checkpoints, metric logs and a test report");
  add_common(train, train_f, false);
  train->add_option("--resume", resume, "continue from a last.ckpt")->check(CLI::ExistingFile);
  train->add_option("--max-steps", max_steps, "stop after this many optimizer steps (checkpointed)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset file");
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "dataset .jsonl file")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "directory for the report files");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss component");
  add_common(grad, grad_f, false);

  auto* ablate = app.add_subcommand("ablate", "train every ablation variant and tabulate test metrics");
  add_common(ablate, ablate_f, false);
  ablate->add_option("--repeats", repeats, "seeds per variant")->check(CLI::PositiveNumber);

  auto* fusion = app.add_subcommand("fusion-bench", "train the three fusion baselines and tabulate test metrics");
  add_common(fusion, fusion_f, false);
  fusion->add_option("--repeats", repeats, "seeds per baseline")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    omp_set_num_threads(threads_from_env());
    const carat::RunConfig desk = carat::RunConfig::from_preset("desk");

    if (*gen) {
      const carat::RunConfig cfg = build_config(gen_f, desk);
      carat::SynthSpec spec = cfg.synth;
      if (gen_f.seed) spec.seed = *gen_f.seed;
      spec.validate();
      carat::gen_data(spec, gen_f.out);
      std::cerr << "wrote " << gen_f.out << "/{train,val,test}.jsonl\n";
      return 0;
    }
    if (*train) {
      carat::CommandOptions opt = options(train_f, build_config(train_f, desk));
      opt.resume = resume;
      opt.max_steps = max_steps;
      const carat::TrainOutcome r = verify(opt.config) ? carat::cmd_f80::train(opt) : carat::cmd_f32::train(opt);
      std::cout << "test micro-F1 " << r.test.micro_f1 << "  acc " << r.test.acc << "  (prior baseline "
                << r.prior_baseline_f1 << ")\n";
      return 0;
    }
    if (*eval) {
      const auto header = carat::read_checkpoint_header(ckpt);
      const bool extended = header.value("dtype", std::string()) == "float80";
      const carat::MetricsReport m = extended ? carat::cmd_f80::eval(ckpt, data, eval_out, nullptr)
                                         : carat::cmd_f32::eval(ckpt, data, eval_out, nullptr);
      std::cout << m.to_text();
      return 0;
    }
    if (*grad) {
      carat::RunConfig base = carat::tiny_gradcheck_config();
      carat::CommandOptions opt = options(grad_f, build_config(grad_f, base));
      if (!opt.config.seed) opt.config.seed = base.seed;
      const carat::GradcheckOutcome r = carat::cmd_f80::gradcheck(opt);
      std::cout << r.to_text();
      return r.passed() ? 0 : 3;
    }
    if (*ablate || *fusion) {
      const CommonFlags& f = *ablate ? ablate_f : fusion_f;
      carat::CommandOptions opt = options(f, build_config(f, desk));
      opt.repeats = repeats;
      const bool extended = verify(opt.config);
      const carat::ComparisonTable t = *ablate ? (extended ? carat::cmd_f80::ablate(opt) : carat::cmd_f32::ablate(opt))
                                               : (extended ? carat::cmd_f80::fusion_bench(opt)
                                                      : carat::cmd_f32::fusion_bench(opt));
      std::cout << t.to_text();
      return 0;
    }
  } catch (const carat::ConfigError& e) {
    std::cerr << "config error [" << e.field() << "]: " << e.what() << '\n';
    return 2;
  } catch (const carat::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
