// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Command implementations behind the `carat` executable. Every command exists
// once per numeric precision (cmd_f32, cmd_f80); this header does not depend
// on the precision macros, so one translation unit can call both.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "carat/config.hpp"
#include "carat/metrics.hpp"
#include "carat/synth.hpp"

namespace carat {

struct CommandOptions {
  RunConfig config;
  /// Output directory; empty means nothing is written.
  std::filesystem::path out;
  /// Progress messages; null silences them.
  std::ostream* log = nullptr;
  /// Seeds used by ablate / fusion-bench are seed, seed+1, ...
  int repeats = 1;
  /// Resume training from this checkpoint (train only).
  std::filesystem::path resume;
  /// Stop (and checkpoint) once the global step reaches this; 0 = no limit.
  std::uint64_t max_steps = 0;
};

/// Loaded from files when the config names them, otherwise synthesized.
SplitDatasets load_splits(const RunConfig& cfg);

struct TrainOutcome {
  std::uint64_t seed = 0;
  int best_epoch = 0;
  double best_val_f1 = 0.0;
  MetricsReport test;
  double prior_baseline_f1 = 0.0;
  std::uint64_t steps = 0;
  double seconds = 0.0;
  /// One JSON line per record: the config header, then one per epoch.
  std::vector<std::string> log_lines;
};

struct GradcheckRow {
  std::string component;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
  std::string detail;
};

struct GradcheckOutcome {
  double rel_tol = 0.0;
  std::vector<GradcheckRow> rows;
  double seconds = 0.0;
  bool passed() const;
  std::string to_text() const;
};

struct ComparisonRow {
  std::string label;
  std::vector<MetricsReport> runs;  // one per seed
  double mean_acc() const;
  double mean_precision() const;
  double mean_recall() const;
  double mean_f1() const;
};

struct ComparisonTable {
  std::string title;
  std::vector<ComparisonRow> rows;
  std::string to_text() const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
  const ComparisonRow& row(std::string_view label) const;
};

/// The thirteen ablation variants in table order: label and flags.
std::vector<std::pair<std::string, AblationConfig>> ablation_variants();

/// Writes train/val/test JSON-lines files for the spec.
void gen_data(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// The small configuration used for finite-difference checks.
RunConfig tiny_gradcheck_config();

}  // namespace carat

#define CARAT_DECLARE_COMMANDS(ns)                                                                  \
  namespace carat::ns {                                                                             \
  TrainOutcome train(const CommandOptions& opt);                                                    \
  /** Evaluates a checkpoint on a dataset; writes report files when out is set. */                 \
  MetricsReport eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset, \
                     const std::filesystem::path& out, std::ostream* log);                         \
  GradcheckOutcome gradcheck(const CommandOptions& opt);                                            \
  ComparisonTable ablate(const CommandOptions& opt);                                                \
  ComparisonTable fusion_bench(const CommandOptions& opt);                                          \
  }

CARAT_DECLARE_COMMANDS(cmd_f32)
CARAT_DECLARE_COMMANDS(cmd_f80)
