// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "carat/modality.hpp"

namespace carat {

/// Dense N x C matrix of 0/1 entries.
struct LabelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  LabelMatrix() = default;
  LabelMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), cells(r * c, 0) {}

  std::uint8_t at(std::size_t i, std::size_t j) const { return cells[i * cols + j]; }
  std::uint8_t& at(std::size_t i, std::size_t j) { return cells[i * cols + j]; }
};

struct LabelCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct MetricsReport {
  double acc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double micro_f1 = 0.0;
  std::vector<LabelCounts> per_label;
  /// C x M, row-stochastic; empty when no argmax records were supplied.
  std::vector<double> modality_label_freq;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  /// Aligned-column text table for humans.
  std::string to_text() const;
};

/// Jaccard accuracy (0/0 sample counts as 1) plus micro-averaged P/R/F1.
MetricsReport compute_metrics(const LabelMatrix& truth, const LabelMatrix& predicted);

/// `argmax` holds one modality index per (sample, label) cell, N x C row-major.
/// Returns C x M selection frequencies.
std::vector<double> correlation_matrix(const std::vector<int>& argmax, std::size_t num_labels);

std::string correlation_csv(const std::vector<double>& freq, std::size_t num_labels);

/// Micro-F1 of the stronger of two label-agnostic predictors built from training
/// priors: always-positive, and the expected score of Bernoulli(prior) guessing.
double prior_baseline_f1(const std::vector<double>& train_priors, const LabelMatrix& truth);

}  // namespace carat
