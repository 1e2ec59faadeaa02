// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "carat/synth.hpp"

namespace carat {

enum class Precision { standard, verify };

enum class FusionKind { alignment, aggregation, reconstruction_simplified };

std::string_view to_string(Precision p);
std::string_view to_string(FusionKind k);
FusionKind parse_fusion_kind(std::string_view s);

struct ModelConfig {
  int d = 32;
  int d_z = 8;
  int heads = 4;
  int ffn_mult = 4;
  std::array<int, kNumModalities> layers{1, 1, 1};
  /// Hidden layers in the aggregation classifier h_c (0 = single linear map).
  int agg_hidden_layers = 0;
};

struct LossWeights {
  double gamma_o = 0.01;
  double gamma_alpha = 0.1;
  double gamma_beta = 1.0;
  double gamma_sf = 0.1;
  double gamma_s = 1.0;
  double gamma_r = 1.0;
  /// Non-paper comparison toggle: squared Frobenius norms in the reconstruction loss.
  bool rec_squared = false;
};

struct ContrastiveConfig {
  double tau = 0.1;
  int queue_capacity = 8192;
  double phi = 0.99;
};

struct OptimConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_frac = 0.1;
};

struct TrainConfig {
  int epochs = 20;
  int batch = 64;
};

/// Table-3 style switches. The three *_only modes are mutually exclusive.
struct AblationConfig {
  bool use_mrm_agg_only = false;
  bool use_mrm_only = false;
  bool use_agg_only = false;
  bool disable_scl = false;
  bool disable_en_de = false;
  bool disable_rec_loss = false;
  bool disable_alpha_recon = false;
  bool disable_beta_recon = false;
  bool disable_sws = false;
  bool disable_mws = false;
  /// Non-paper: one permutation per whole block instead of per label slot.
  bool whole_block_shuffle = false;

  bool extraction_only() const { return use_mrm_agg_only || use_mrm_only || use_agg_only; }
  bool contrastive_active() const { return !extraction_only() && !disable_en_de; }
  void validate() const;
};

struct DataConfig {
  /// Directory holding train.jsonl / val.jsonl / test.jsonl.
  std::string dir;
  std::string train;
  std::string val;
  std::string test;
};

struct RunConfig {
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  Precision precision = Precision::standard;
  ModelConfig model;
  LossWeights loss;
  ContrastiveConfig contrastive;
  OptimConfig optim;
  TrainConfig train;
  AblationConfig ablation;
  DataConfig data;
  SynthSpec synth;
  FusionKind fusion = FusionKind::reconstruction_simplified;

  /// "desk" (CPU-minutes scale) or "paper" (published hyperparameters).
  static RunConfig from_preset(std::string_view name);

  /// Applies `key = value` pairs; unknown keys and bad values raise ConfigError.
  void apply(const std::vector<std::pair<std::string, std::string>>& entries);
  void apply(std::string_view key, std::string_view value);

  /// Every key with its current value, in declaration order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  nlohmann::json to_json() const;
  /// Inverse of to_json().
  static RunConfig from_json(const nlohmann::json& j);
  std::string to_text() const;

  /// Structural checks plus path existence for referenced dataset files.
  void validate() const;
  std::uint64_t require_seed() const;

  bool uses_dataset_files() const { return !data.dir.empty() || !data.train.empty(); }
  std::filesystem::path split_path(std::string_view split) const;
};

/// Flat `key = value` text with optional `[section]` headers that prefix keys
/// with "section.". `#` and `;` start comments.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text);

/// Starts from the preset named in the file (default "desk"), or from
/// `preset_override` when non-empty, then applies the file's keys.
RunConfig load_run_config(const std::filesystem::path& path, std::string_view preset_override = {});

}  // namespace carat
