// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// carat_acceptance: runs the acceptance criteria and prints one PASS/FAIL
// line per criterion. Exit status is 0 only when every selected one passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carat/batch.hpp"
#include "carat/checkpoint.hpp"
#include "carat/commands.hpp"
#include "carat/kernels.hpp"
#include "carat/metrics.hpp"
#include "carat/model.hpp"
#include "carat/ops.hpp"
#include "carat/optim.hpp"
#include "carat/shuffle.hpp"
#include "carat/trainer.hpp"

namespace fs = std::filesystem;
using namespace carat;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

RunConfig desk(std::uint64_t seed, int epochs) {
  RunConfig cfg = RunConfig::from_preset("desk");
  cfg.seed = seed;
  if (epochs > 0) cfg.train.epochs = epochs;
  return cfg;
}

TrainOutcome train(const RunConfig& cfg, const fs::path& out = {}, std::uint64_t max_steps = 0,
                   const fs::path& resume = {}) {
  CommandOptions opt;
  opt.config = cfg;
  opt.out = out;
  opt.max_steps = max_steps;
  opt.resume = resume;
  return cmd_f32::train(opt);
}

// 1. Finite-difference check of every loss component in verify precision.
Outcome gradient_suite() {
  CommandOptions opt;
  opt.config = tiny_gradcheck_config();
  const GradcheckOutcome r = cmd_f80::gradcheck(opt);
  double worst = 0;
  for (const auto& row : r.rows) worst = std::max(worst, row.max_rel_error);
  const bool pass = r.passed() && r.rows.size() >= 5 && r.seconds < 60.0;
  return {pass, fmt("%.0f components, worst rel err %.2e (tol %.0e), %.1f s (limit 60 s)",
                    static_cast<double>(r.rows.size()), worst, r.rel_tol, r.seconds)};
}

// 2. The desk preset learns well past the prior baseline within ten epochs.
Outcome learning_sanity() {
  const RunConfig cfg = desk(1, 0);
  const TrainOutcome r = train(cfg);
  const double margin = r.test.micro_f1 - r.prior_baseline_f1;
  const bool pass = cfg.train.epochs <= 10 && r.test.micro_f1 >= 0.80 && margin >= 0.15 && r.seconds < 300.0;
  return {pass, fmt("test micro-F1 %.4f (need >= 0.80), prior baseline %.4f, margin %.4f (need >= 0.15), %.0f s",
                    r.test.micro_f1, r.prior_baseline_f1, margin, r.seconds)};
}

// 3. Structural invariants, each checked on randomized inputs.
Outcome invariant_suite() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const std::string& name) {
    if (!ok) failed.push_back(name);
  };
  Rng rng(2026);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto randn = [&](std::size_t n) {
    std::normal_distribution<double> g;
    std::vector<Real> v(n);
    for (auto& x : v) x = static_cast<Real>(g(rng));
    return v;
  };

  // Shuffles preserve each group's multiset of rows; Q-hat equals Q without them.
  bool multiset_ok = true, identity_ok = true;
  for (int s = 0; s < 200; ++s) {
    const std::size_t batch = pick(1, 8), c = pick(1, 6), d = pick(1, 4);
    ModalityTriple u;
    for (auto& x : u) x = Tensor({batch * c, d}, randn(batch * c * d));
    std::vector<std::uint8_t> labels(batch * c);
    for (auto& y : labels) y = static_cast<std::uint8_t>(pick(0, 1));
    const StackedFeatures v = stack_features(u, batch);
    const StackedFeatures sw = sample_wise_shuffle(v, rng);
    const StackedFeatures mw = modality_wise_shuffle(sw, rng);
    auto rows_of = [&](const StackedFeatures& f, auto&& index, std::size_t outer, std::size_t inner) {
      std::vector<std::vector<std::vector<Real>>> groups(outer);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t r = index(o, i);
          groups[o].emplace_back(f.values.values().begin() + static_cast<std::ptrdiff_t>(r * d),
                                 f.values.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
        }
        std::sort(groups[o].begin(), groups[o].end());
      }
      return groups;
    };
    // Sample-wise: per (modality, label), across samples.
    auto by_slot = [&](const StackedFeatures& f) {
      return rows_of(f, [&](std::size_t o, std::size_t i) { return f.row(i, o / c, o % c); }, 3 * c, batch);
    };
    // Modality-wise: per (sample, label), across modalities.
    auto by_sample = [&](const StackedFeatures& f) {
      return rows_of(f, [&](std::size_t o, std::size_t i) { return f.row(o / c, i, o % c); }, batch * c, 3);
    };
    multiset_ok = multiset_ok && by_slot(v) == by_slot(sw) && by_sample(sw) == by_sample(mw);
    const Aggregated q = aggregate(v, labels), qhat = aggregate(StackedFeatures(v), labels);
    identity_ok = identity_ok && std::equal(q.q.values().begin(), q.q.values().end(), qhat.q.values().begin()) &&
                  q.targets == qhat.targets;
  }
  check(multiset_ok, "shuffle multisets");
  check(identity_ok, "Q-hat == Q without shuffles");

  // Prototype and latent-embedding norms after every training step.
  {
    RunConfig cfg = desk(5, 2);
    cfg.synth.n_train = 128;
    cfg.synth.n_val = 32;
    cfg.synth.n_test = 32;
    const SplitDatasets data = generate_dataset(cfg.synth);
    CaratModel model(cfg, data.train.header, 5);
    OptimizerState opt;
    opt.peak_lr = cfg.optim.lr;
    opt.total_steps = 8;
    opt.warmup_steps = 1;
    opt.init(model.parameters().tensors());
    double worst = 0;
    auto track = [&](std::span<const Real> v, std::size_t dim) {
      for (std::size_t r = 0; r * dim < v.size(); ++r) {
        double s = 0;
        for (std::size_t k = 0; k < dim; ++k) s += static_cast<double>(v[r * dim + k]) * static_cast<double>(v[r * dim + k]);
        worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
      }
    };
    std::size_t step = 0;
    bool predict_ok = true;
    for (const auto& idx : batch_iter(data.train.size(), static_cast<std::size_t>(cfg.train.batch), 5)) {
      const Batch b = make_batch(data.train, idx);
      model.parameters().zero_grad();
      const LossTerms t = model.forward_train(b, step++);
      track(model.pending().values, model.pending().dim);
      t.total.backward();
      adam_step(opt, model.parameters().tensors());
      model.after_step();
      track(model.bank().data(), model.bank().dim());
      track(model.queue().values(), model.queue().dim());
      const Prediction p = model.predict(make_batch(data.val, std::vector<std::size_t>{0, 1, 2, 3}));
      for (Real y : p.probs) predict_ok = predict_ok && y >= 0 && y <= 1;
    }
    check(worst <= 1e-6, fmt("unit norms (worst deviation %.2e)", worst));
    check(predict_ok, "predict in [0,1]");
  }

  // Queue length and FIFO eviction against a reference deque.
  {
    bool ok = true;
    EmbeddingQueue q(7, 2);
    std::deque<std::pair<std::vector<Real>, int>> ref;
    for (int s = 0; s < 500; ++s) {
      const std::vector<Real> e = randn(2);
      const int tag = static_cast<int>(pick(0, 35));
      q.push(e, tag);
      ref.emplace_back(e, tag);
      if (ref.size() > 7) ref.pop_front();
      std::vector<Real> vals;
      std::vector<int> tags;
      for (const auto& [v, t] : ref) {
        vals.insert(vals.end(), v.begin(), v.end());
        tags.push_back(t);
      }
      ok = ok && q.size() <= q.capacity() && q.values() == vals && q.tags() == tags;
    }
    check(ok, "queue FIFO");
  }

  // Max-pool equals the brute-force column max.
  {
    bool ok = true;
    for (int s = 0; s < 1000; ++s) {
      const std::size_t m = pick(1, 5), c = pick(1, 10);
      std::vector<Real> v(m * c);
      for (auto& x : v) x = static_cast<Real>(static_cast<int>(pick(0, 8)) - 4);
      const MaxPoolResult r = maxpool_stack(Tensor({m, c}, v));
      for (std::size_t j = 0; j < c; ++j) {
        Real best = v[j];
        for (std::size_t i = 1; i < m; ++i) best = std::max(best, v[i * c + j]);
        ok = ok && r.values[j] == best && v[static_cast<std::size_t>(r.argmax[j]) * c + j] == best;
      }
    }
    check(ok, "maxpool brute force");
  }

  // compute_metrics against a brute-force counter.
  {
    bool ok = true;
    std::bernoulli_distribution bit(0.4);
    for (int s = 0; s < 1000; ++s) {
      const std::size_t n = pick(1, 12), c = pick(1, 7);
      LabelMatrix y(n, c), p(n, c);
      for (auto& x : y.cells) x = bit(rng);
      for (auto& x : p.cells) x = bit(rng);
      double tp = 0, fp = 0, fn = 0, acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        double inter = 0, uni = 0;
        for (std::size_t j = 0; j < c; ++j) {
          const bool a = y.at(i, j), b = p.at(i, j);
          tp += a && b;
          fp += !a && b;
          fn += a && !b;
          inter += a && b;
          uni += a || b;
        }
        acc += uni > 0 ? inter / uni : 1.0;
      }
      const double pr = tp + fp > 0 ? tp / (tp + fp) : 0, rc = tp + fn > 0 ? tp / (tp + fn) : 0;
      const double f1 = pr + rc > 0 ? 2 * pr * rc / (pr + rc) : 0;
      const MetricsReport r = compute_metrics(y, p);
      auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
      ok = ok && near(r.acc, acc / static_cast<double>(n)) && near(r.precision, pr) && near(r.recall, rc) &&
           near(r.micro_f1, f1);
    }
    check(ok, "metrics brute force");
  }

  std::string detail = "8 invariant groups";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " [" + f + "]";
  }
  return {failed.empty(), detail};
}

// 4. Full model versus the no-shuffle variant, plus the ablation table shape.
Outcome ablation_direction(int epochs) {
  double full = 0, noshf = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig cfg = desk(seed, epochs);
    full += train(cfg).test.micro_f1 / 3;
    cfg.ablation.disable_sws = cfg.ablation.disable_mws = true;
    noshf += train(cfg).test.micro_f1 / 3;
  }
  CommandOptions opt;
  opt.config = desk(1, 1);
  const ComparisonTable table = cmd_f32::ablate(opt);
  const bool pass = full >= noshf - 0.01 && table.rows.size() == 13;
  return {pass, fmt("full %.4f vs w/o shf %.4f (3 seeds, %.0f epochs); ablation table has %.0f rows", full, noshf,
                    static_cast<double>(epochs), static_cast<double>(table.rows.size()))};
}

// 5. Fusion baselines: reconstruction versus alignment.
Outcome fusion_bench(int epochs) {
  CommandOptions opt;
  opt.config = desk(1, epochs);
  opt.repeats = 3;
  const ComparisonTable t = cmd_f32::fusion_bench(opt);
  const double recon = t.row("reconstruction-simplified").mean_f1();
  const double align = t.row("alignment").mean_f1();
  const double agg = t.row("aggregation").mean_f1();
  const bool pass = t.rows.size() == 3 && recon >= align - 0.01;
  return {pass, fmt("reconstruction %.4f vs alignment %.4f (aggregation %.4f), 3 seeds, %.0f epochs", recon, align, agg,
                    static_cast<double>(epochs))};
}

// 6. Same seed gives the same logs; resuming mid-run equals an uninterrupted run.
Outcome determinism() {
  kernels::set_num_threads(1);
  RunConfig cfg = desk(7, 2);
  cfg.synth.n_train = 160;
  cfg.synth.n_val = 50;
  cfg.synth.n_test = 50;
  const TrainOutcome a = train(cfg), b = train(cfg);
  const bool logs_equal = a.log_lines == b.log_lines;

  const fs::path root = fs::temp_directory_path() / "carat_acceptance";
  fs::remove_all(root);
  const TrainOutcome whole = train(cfg, root / "whole");
  train(cfg, root / "first", 7);
  const TrainOutcome resumed = train(cfg, root / "second", 0, root / "first" / "last.ckpt");
  const Checkpoint x = load_checkpoint(root / "whole" / "last.ckpt");
  const Checkpoint y = load_checkpoint(root / "second" / "last.ckpt");
  bool same = x.arrays.size() == y.arrays.size() && resumed.log_lines == whole.log_lines &&
              resumed.test.micro_f1 == whole.test.micro_f1;
  for (std::size_t k = 0; same && k < x.arrays.size(); ++k) {
    same = x.arrays[k].name == y.arrays[k].name && x.arrays[k].values == y.arrays[k].values;
  }
  fs::remove_all(root);
  return {logs_equal && same, std::string("identical logs: ") + (logs_equal ? "yes" : "no") +
                                  "; resume at step 7 of " + std::to_string(whole.steps) +
                                  " bitwise equal: " + (same ? "yes" : "no")};
}

// 7. The correlation export recovers each label's preferred modality.
Outcome correlation(int epochs) {
  double hits = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig cfg = desk(seed, epochs);
    cfg.synth.signal = 3.0;
    cfg.synth.seed = seed;
    const TrainOutcome r = train(cfg);
    const auto& f = r.test.modality_label_freq;
    const auto pref = cfg.synth.resolved_preference();
    int n = 0;
    for (std::size_t j = 0; j < pref.size(); ++j) {
      const auto row = f.begin() + static_cast<std::ptrdiff_t>(j * kNumModalities);
      n += std::max_element(row, row + kNumModalities) - row == pref[j];
    }
    hits += n / 3.0;
    per_seed += (per_seed.empty() ? "" : ", ") + std::to_string(n);
  }
  return {hits >= 5.0, fmt("mean %.2f of 6 labels peak at their preferred modality", hits) + " (per seed " + per_seed + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carat acceptance criteria"};
  std::vector<int> only;
  int epochs = 5;
  app.add_option("--only", only, "run just these criteria (1-7)")->check(CLI::Range(1, 7));
  app.add_option("--epochs", epochs, "epochs for the multi-seed comparisons (criteria 4, 5, 7)")
      ->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  kernels::set_num_threads(1);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"learning sanity", learning_sanity},
      {"invariant suite", invariant_suite},
      {"ablation direction", [&] { return ablation_direction(epochs); }},
      {"fusion bench", [&] { return fusion_bench(epochs); }},
      {"determinism and persistence", determinism},
      {"correlation export", [&] { return correlation(epochs); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int passed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    ++run;
    passed += o.pass;
    std::printf("criterion %d %-28s %s  %s  [%.0f s]\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%d passed\n", passed, run);
  return passed == run ? 0 : 1;
}
