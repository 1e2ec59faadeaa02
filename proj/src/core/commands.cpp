// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ostream>

#include "carat/baselines.hpp"
#include "carat/error.hpp"
#include "carat/fileio.hpp"
#include "carat/gradcheck.hpp"
#include "carat/trainer.hpp"

#define CARAT_CMD_CAT2(a, b) a##b
#define CARAT_CMD_CAT(a, b) CARAT_CMD_CAT2(a, b)
#define CARAT_CMD_NS CARAT_CMD_CAT(cmd_, CARAT_PRECISION_NS)

namespace carat::CARAT_CMD_NS {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

void write_report(const std::filesystem::path& dir, const std::string& stem, const MetricsReport& m,
                  const nlohmann::json& extra) {
  nlohmann::json j = extra;
  j["metrics"] = m.to_json();
  write_atomic(dir / (stem + ".json"), j.dump(2) + "\n");
  write_atomic(dir / (stem + ".txt"), m.to_text());
  if (!m.modality_label_freq.empty()) {
    write_atomic(dir / (stem + "_correlation.csv"),
                 correlation_csv(m.modality_label_freq, m.modality_label_freq.size() / kNumModalities));
  }
}

/// Trains one learner on prepared splits. Writes artifacts when `out` is set.
TrainOutcome train_on(const RunConfig& cfg, const SplitDatasets& data, bool baseline, const CommandOptions& opt,
                      const std::filesystem::path& out) {
  const auto t0 = Clock::now();
  const std::uint64_t seed = cfg.require_seed();
  std::unique_ptr<Learner> learner = make_learner(cfg, data.train.header, seed, baseline);
  Trainer trainer(*learner, cfg, data.train, data.val, seed);

  TrainOutcome result;
  result.seed = seed;
  nlohmann::json header = {{"type", "config"}, {"learner", learner->kind()}, {"config", cfg.to_json()},
                           {"dtype", dtype_name()}, {"steps_per_epoch", trainer.steps_per_epoch()}};
  result.log_lines.push_back(header.dump());

  if (!opt.resume.empty()) {
    trainer.restore(load_checkpoint(opt.resume));
    for (const auto& rec : trainer.history()) result.log_lines.push_back(rec.to_json().dump());
    say(opt.log, "resumed at step " + std::to_string(trainer.state().step));
  }

  trainer.on_epoch = [&](const EpochRecord& rec) {
    result.log_lines.push_back(rec.to_json().dump());
    char buf[160];
    std::snprintf(buf, sizeof buf, "[%s] epoch %d/%d  step %llu  loss %.4f  val micro-F1 %.4f  (%.1f s)",
                  learner->kind().c_str(), rec.epoch, cfg.train.epochs, static_cast<unsigned long long>(rec.step),
                  rec.train_loss, rec.val.micro_f1, seconds_since(t0));
    say(opt.log, buf);
    if (!out.empty()) {
      write_atomic(out / "metrics.jsonl", join_lines(result.log_lines));
      save_checkpoint(trainer.checkpoint(), out / "last.ckpt");
      if (trainer.state().best_epoch == rec.epoch) save_checkpoint(trainer.best_checkpoint(), out / "best.ckpt");
    }
  };

  trainer.run(opt.max_steps ? opt.max_steps : std::numeric_limits<std::uint64_t>::max());
  result.steps = trainer.state().step;
  if (!trainer.finished()) {
    if (!out.empty()) save_checkpoint(trainer.checkpoint(), out / "last.ckpt");
    say(opt.log, "stopped at step " + std::to_string(result.steps));
    result.seconds = seconds_since(t0);
    return result;
  }

  trainer.restore_best();
  result.best_epoch = trainer.state().best_epoch;
  result.best_val_f1 = trainer.state().best_f1;
  const EvalResult test = evaluate(*learner, data.test, static_cast<std::size_t>(cfg.train.batch));
  result.test = test.metrics;
  result.prior_baseline_f1 = prior_baseline_f1(label_frequencies(data.train), label_matrix(data.test));
  result.seconds = seconds_since(t0);

  if (!out.empty()) {
    write_atomic(out / "config.txt", cfg.to_text());
    write_report(out, "test_report", result.test,
                 {{"config", cfg.to_json()},
                  {"learner", learner->kind()},
                  {"best_epoch", result.best_epoch},
                  {"best_val_micro_f1", result.best_val_f1},
                  {"prior_baseline_micro_f1", result.prior_baseline_f1}});
    if (auto* model = dynamic_cast<CaratModel*>(learner.get()); model && cfg.ablation.contrastive_active()) {
      TaggedEmbeddings all;
      for (const auto& idx : sequential_batches(data.test.size(), static_cast<std::size_t>(cfg.train.batch))) {
        TaggedEmbeddings e;
        model->predict(make_batch(data.test, idx), &e);
        all.dim = e.dim;
        all.values.insert(all.values.end(), e.values.begin(), e.values.end());
        all.tags.insert(all.tags.end(), e.tags.begin(), e.tags.end());
        all.sample_ids.insert(all.sample_ids.end(), e.sample_ids.begin(), e.sample_ids.end());
        all.stages.insert(all.stages.end(), e.stages.begin(), e.stages.end());
      }
      write_atomic(out / "test_embeddings.tsv", embeddings_tsv(all, data.test.header.num_labels));
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "[%s] best epoch %d (val %.4f)  test micro-F1 %.4f  acc %.4f  prior baseline %.4f  %.1f s",
                learner->kind().c_str(), result.best_epoch, result.best_val_f1, result.test.micro_f1,
                result.test.acc, result.prior_baseline_f1, result.seconds);
  say(opt.log, buf);
  return result;
}

RunConfig prepared(const CommandOptions& opt) {
  RunConfig cfg = opt.config;
  cfg.ablation.validate();
  cfg.validate();
  cfg.require_seed();
  return cfg;
}

}  // namespace

TrainOutcome train(const CommandOptions& opt) {
  const RunConfig cfg = prepared(opt);
  return train_on(cfg, load_splits(cfg), false, opt, opt.out);
}

MetricsReport eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                   const std::filesystem::path& out, std::ostream* log) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (!ck.meta.contains("config")) throw CheckpointError("checkpoint has no config echo");
  const RunConfig cfg = RunConfig::from_json(ck.meta.at("config"));
  const Dataset ds = load_dataset(dataset);
  const std::string kind = ck.meta.value("learner", std::string());
  std::unique_ptr<Learner> learner = make_learner(cfg, ds.header, 0, kind.rfind("fusion:", 0) == 0);
  load_model_state(*learner, ck);
  const EvalResult r = evaluate(*learner, ds, static_cast<std::size_t>(cfg.train.batch));
  if (!out.empty()) {
    write_report(out, "eval_report", r.metrics,
                 {{"config", cfg.to_json()},
                  {"learner", kind},
                  {"checkpoint", checkpoint.string()},
                  {"dataset", dataset.string()},
                  {"split", ds.header.split}});
  }
  say(log, r.metrics.to_text());
  return r.metrics;
}

GradcheckOutcome gradcheck(const CommandOptions& opt) {
  if constexpr (sizeof(Real) == sizeof(float)) {
    throw ConfigError("precision", "gradient checks run in verify precision");
  }
  const auto t0 = Clock::now();
  RunConfig cfg = opt.config;
  cfg.validate();
  const std::uint64_t seed = cfg.require_seed();
  const SplitDatasets data = load_splits(cfg);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min<std::size_t>(data.train.size(), static_cast<std::size_t>(cfg.train.batch)); ++i) {
    idx.push_back(i);
  }
  const Batch batch = make_batch(data.train, idx);
  CaratModel model(cfg, data.train.header, seed);
  // One committed step so the queue and prototypes are in a non-initial state.
  model.forward_train(batch, seed);
  model.after_step();

  GradcheckOutcome result;
  result.rel_tol = 1e-4;
  const std::vector<std::pair<std::string, Tensor LossTerms::*>> components = {
      {"agg", &LossTerms::agg}, {"lsr", &LossTerms::lsr}, {"scl", &LossTerms::scl},
      {"rec", &LossTerms::rec}, {"total", &LossTerms::total}};
  const std::uint64_t step_seed = mix_seed(seed, 1);
  for (const auto& [name, member] : components) {
    if (!(model.forward_train(batch, step_seed).*member).defined()) continue;
    auto f = [&, member = member] { return model.forward_train(batch, step_seed).*member; };
    const GradCheckReport rep = grad_check(f, model.parameters().tensors(), result.rel_tol);
    GradcheckRow row;
    row.component = name;
    row.max_rel_error = rep.max_rel_error;
    row.checked = rep.checked;
    row.passed = rep.passed();
    row.detail = rep.describe(model.parameters().names());
    result.rows.push_back(row);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s max rel err %.3e over %zu entries: %s", name.c_str(), rep.max_rel_error,
                  rep.checked, rep.passed() ? "pass" : "FAIL");
    say(opt.log, buf);
  }
  result.seconds = seconds_since(t0);
  if (!opt.out.empty()) write_atomic(opt.out / "gradcheck.txt", "config\n" + cfg.to_text() + "\n" + result.to_text());
  return result;
}

ComparisonTable ablate(const CommandOptions& opt) {
  const RunConfig base = prepared(opt);
  const SplitDatasets data = load_splits(base);
  ComparisonTable table;
  table.title = "Ablation (mean test metrics over " + std::to_string(opt.repeats) + " seed(s))";
  for (const auto& [label, flags] : ablation_variants()) {
    ComparisonRow row;
    row.label = label;
    for (int r = 0; r < opt.repeats; ++r) {
      RunConfig cfg = base;
      cfg.ablation = flags;
      cfg.ablation.whole_block_shuffle = base.ablation.whole_block_shuffle;
      cfg.seed = *base.seed + static_cast<std::uint64_t>(r);
      row.runs.push_back(train_on(cfg, data, false, opt, {}).test);
    }
    table.rows.push_back(std::move(row));
  }
  if (!opt.out.empty()) {
    write_atomic(opt.out / "ablation.txt", table.to_text());
    write_atomic(opt.out / "ablation.csv", table.to_csv());
    nlohmann::json j = table.to_json();
    j["config"] = base.to_json();
    write_atomic(opt.out / "ablation.json", j.dump(2) + "\n");
  }
  return table;
}

ComparisonTable fusion_bench(const CommandOptions& opt) {
  const RunConfig base = prepared(opt);
  const SplitDatasets data = load_splits(base);
  ComparisonTable table;
  table.title = "Fusion comparison (mean test metrics over " + std::to_string(opt.repeats) + " seed(s))";
  for (FusionKind kind : {FusionKind::alignment, FusionKind::aggregation, FusionKind::reconstruction_simplified}) {
    ComparisonRow row;
    row.label = std::string(to_string(kind));
    for (int r = 0; r < opt.repeats; ++r) {
      RunConfig cfg = base;
      cfg.fusion = kind;
      cfg.seed = *base.seed + static_cast<std::uint64_t>(r);
      row.runs.push_back(train_on(cfg, data, true, opt, {}).test);
    }
    table.rows.push_back(std::move(row));
  }
  if (!opt.out.empty()) {
    write_atomic(opt.out / "fusion_bench.txt", table.to_text());
    write_atomic(opt.out / "fusion_bench.csv", table.to_csv());
    nlohmann::json j = table.to_json();
    j["config"] = base.to_json();
    write_atomic(opt.out / "fusion_bench.json", j.dump(2) + "\n");
  }
  return table;
}

}  // namespace carat::CARAT_CMD_NS
