// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Stacked second-level features, sample-wise and modality-wise shuffles with
// provenance tracking, aggregation into per-(sample, modality) vectors and the
// aggregation classifier.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "carat/fusion.hpp"

CARAT_NS_BEGIN

struct SlotSource {
  std::uint32_t sample = 0;
  std::uint32_t modality = 0;

  bool operator==(const SlotSource&) const = default;
};

/// V: batch x M x C slots of width d. values is (batch*M*C) x d with rows in
/// (sample, modality, label) order; provenance is parallel to the rows.
struct StackedFeatures {
  std::size_t batch = 0;
  std::size_t modalities = kNumModalities;
  std::size_t labels = 0;
  Tensor values;
  std::vector<SlotSource> provenance;

  std::size_t row(std::size_t i, std::size_t m, std::size_t j) const { return (i * modalities + m) * labels + j; }
};

StackedFeatures stack_features(const ModalityTriple& u, std::size_t batch);

/// perms[m*C + j] is a permutation of [0, batch): new slot (i, m, j) takes old
/// slot (perms[m*C+j][i], m, j).
StackedFeatures sample_wise_shuffle(const StackedFeatures& v, const std::vector<std::vector<std::size_t>>& perms);
/// perms[i*C + j] is a permutation of [0, M): new slot (i, m, j) takes old
/// slot (i, perms[i*C+j][m], j).
StackedFeatures modality_wise_shuffle(const StackedFeatures& v, const std::vector<std::vector<std::size_t>>& perms);

/// Uniform random permutations, one per slot group. With `whole_block` one
/// permutation is shared by all labels of a group.
std::vector<std::vector<std::size_t>> sample_wise_perms(const StackedFeatures& v, Rng& rng, bool whole_block = false);
std::vector<std::vector<std::size_t>> modality_wise_perms(const StackedFeatures& v, Rng& rng,
                                                          bool whole_block = false);

StackedFeatures sample_wise_shuffle(const StackedFeatures& v, Rng& rng, bool whole_block = false);
StackedFeatures modality_wise_shuffle(const StackedFeatures& v, Rng& rng, bool whole_block = false);

/// q^m_i = [v_{i,m,1}; ...; v_{i,m,C}] as rows of a (batch*M) x (C*d) matrix,
/// with composed labels y_q[j] = labels[src(j)][j].
struct Aggregated {
  Tensor q;
  std::vector<Real> targets;  // (batch*M) x C
};

/// labels is batch x C (0/1).
Aggregated aggregate(const StackedFeatures& v, std::span<const std::uint8_t> labels);

/// h_c: C*d -> C with optional GELU hidden layers of width d.
struct AggregationClassifier {
  std::vector<Linear> layers;

  static AggregationClassifier create(ParameterSet& ps, const std::string& name, std::size_t num_labels,
                                      std::size_t d, std::size_t hidden_layers, Rng& rng);
  Tensor operator()(const Tensor& q) const;
};

/// BCE(h_c(Q)) + gamma_sf * BCE(h_c(Q^)), each averaged over all rows and labels.
Tensor agg_loss(const AggregationClassifier& h, const Aggregated& plain, const Aggregated& shuffled,
                double gamma_sf);

CARAT_NS_END
