// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/shuffle.hpp"

#include <algorithm>
#include <numeric>

#include "carat/error.hpp"

CARAT_NS_BEGIN

StackedFeatures stack_features(const ModalityTriple& u, std::size_t batch) {
  const std::size_t c = u[0].dim(0) / batch;
  for (const auto& x : u) {
    if (x.rank() != 2 || x.dim(0) != batch * c || x.dim(1) != u[0].dim(1)) {
      throw InputError("stack_features: modality blocks must be (batch*C) x d");
    }
  }
  StackedFeatures v;
  v.batch = batch;
  v.labels = c;
  std::vector<std::size_t> index(batch * kNumModalities * c);
  v.provenance.resize(index.size());
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t r = v.row(i, m, j);
        index[r] = m * batch * c + i * c + j;
        v.provenance[r] = {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(m)};
      }
    }
  }
  v.values = gather_rows(concat_rows({u[0], u[1], u[2]}), index);
  return v;
}

namespace {

void check_perm(const std::vector<std::size_t>& p, std::size_t n) {
  if (p.size() != n) throw InputError("shuffle: permutation has the wrong length");
  std::vector<bool> seen(n, false);
  for (std::size_t x : p) {
    if (x >= n || seen[x]) throw InputError("shuffle: not a permutation");
    seen[x] = true;
  }
}

StackedFeatures relocate(const StackedFeatures& v, const std::vector<std::size_t>& source) {
  StackedFeatures out = v;
  out.values = gather_rows(v.values, source);
  for (std::size_t r = 0; r < source.size(); ++r) out.provenance[r] = v.provenance[source[r]];
  return out;
}

std::vector<std::size_t> random_perm(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

std::vector<std::vector<std::size_t>> grouped_perms(std::size_t groups, std::size_t per_group, std::size_t n,
                                                    Rng& rng, bool whole_block) {
  std::vector<std::vector<std::size_t>> perms(groups * per_group);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < per_group; ++j) {
      perms[g * per_group + j] = (whole_block && j > 0) ? perms[g * per_group] : random_perm(n, rng);
    }
  }
  return perms;
}

}  // namespace

StackedFeatures sample_wise_shuffle(const StackedFeatures& v, const std::vector<std::vector<std::size_t>>& perms) {
  if (perms.size() != v.modalities * v.labels) throw InputError("sample_wise_shuffle: one permutation per (m, j)");
  std::vector<std::size_t> source(v.provenance.size());
  for (std::size_t m = 0; m < v.modalities; ++m) {
    for (std::size_t j = 0; j < v.labels; ++j) {
      const auto& p = perms[m * v.labels + j];
      check_perm(p, v.batch);
      for (std::size_t i = 0; i < v.batch; ++i) source[v.row(i, m, j)] = v.row(p[i], m, j);
    }
  }
  return relocate(v, source);
}

StackedFeatures modality_wise_shuffle(const StackedFeatures& v, const std::vector<std::vector<std::size_t>>& perms) {
  if (perms.size() != v.batch * v.labels) throw InputError("modality_wise_shuffle: one permutation per (i, j)");
  std::vector<std::size_t> source(v.provenance.size());
  for (std::size_t i = 0; i < v.batch; ++i) {
    for (std::size_t j = 0; j < v.labels; ++j) {
      const auto& p = perms[i * v.labels + j];
      check_perm(p, v.modalities);
      for (std::size_t m = 0; m < v.modalities; ++m) source[v.row(i, m, j)] = v.row(i, p[m], j);
    }
  }
  return relocate(v, source);
}

std::vector<std::vector<std::size_t>> sample_wise_perms(const StackedFeatures& v, Rng& rng, bool whole_block) {
  return grouped_perms(v.modalities, v.labels, v.batch, rng, whole_block);
}

std::vector<std::vector<std::size_t>> modality_wise_perms(const StackedFeatures& v, Rng& rng, bool whole_block) {
  return grouped_perms(v.batch, v.labels, v.modalities, rng, whole_block);
}

StackedFeatures sample_wise_shuffle(const StackedFeatures& v, Rng& rng, bool whole_block) {
  return sample_wise_shuffle(v, sample_wise_perms(v, rng, whole_block));
}

StackedFeatures modality_wise_shuffle(const StackedFeatures& v, Rng& rng, bool whole_block) {
  return modality_wise_shuffle(v, modality_wise_perms(v, rng, whole_block));
}

Aggregated aggregate(const StackedFeatures& v, std::span<const std::uint8_t> labels) {
  if (labels.size() != v.batch * v.labels) throw InputError("aggregate: label matrix must be batch x C");
  Aggregated a;
  const std::size_t d = v.values.dim(1);
  a.q = reshape(v.values, {v.batch * v.modalities, v.labels * d});
  a.targets.resize(v.provenance.size());
  for (std::size_t r = 0; r < v.provenance.size(); ++r) {
    const std::size_t j = r % v.labels;
    a.targets[r] = labels[v.provenance[r].sample * v.labels + j] ? Real(1) : Real(0);
  }
  return a;
}

AggregationClassifier AggregationClassifier::create(ParameterSet& ps, const std::string& name,
                                                    std::size_t num_labels, std::size_t d, std::size_t hidden_layers,
                                                    Rng& rng) {
  AggregationClassifier h;
  std::size_t width = num_labels * d;
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    h.layers.push_back(Linear::create(ps, name + "." + std::to_string(l), width, d, rng));
    width = d;
  }
  h.layers.push_back(Linear::create(ps, name + "." + std::to_string(hidden_layers), width, num_labels, rng));
  return h;
}

Tensor AggregationClassifier::operator()(const Tensor& q) const {
  Tensor x = q;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = layers[l](x);
    if (l + 1 < layers.size()) x = gelu(x);
  }
  return x;
}

Tensor agg_loss(const AggregationClassifier& h, const Aggregated& plain, const Aggregated& shuffled,
                double gamma_sf) {
  const Tensor base = bce_with_logits(h(plain.q), plain.targets);
  if (gamma_sf == 0.0) return base;
  return add(base, scale(bce_with_logits(h(shuffled.q), shuffled.targets), static_cast<Real>(gamma_sf)));
}

CARAT_NS_END
