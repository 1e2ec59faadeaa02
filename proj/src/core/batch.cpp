// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/batch.hpp"

#include "carat/error.hpp"

CARAT_NS_BEGIN

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("make_batch: empty batch");
  const auto& h = ds.header;
  Batch b;
  b.size = indices.size();
  b.num_labels = static_cast<std::size_t>(h.num_labels);
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const auto n = static_cast<std::size_t>(h.seq_len[m]);
    const auto d = static_cast<std::size_t>(h.dims[m]);
    b.seq_len[m] = n;
    std::vector<Real> values(b.size * n * d);
    b.mask[m].assign(b.size * n, 0);
    for (std::size_t r = 0; r < b.size; ++r) {
      const Sample& s = ds.samples.at(indices[r]);
      if (s.features[m].size() != n * d) throw InputError("make_batch: sample feature shape disagrees with header");
      std::copy(s.features[m].begin(), s.features[m].end(), values.begin() + static_cast<std::ptrdiff_t>(r * n * d));
      for (std::size_t p = 0; p < static_cast<std::size_t>(s.lengths[m]) && p < n; ++p) b.mask[m][r * n + p] = 1;
    }
    b.x[m] = Tensor({b.size * n, d}, std::move(values));
  }
  b.labels.reserve(b.size * b.num_labels);
  for (std::size_t idx : indices) {
    const Sample& s = ds.samples[idx];
    if (s.labels.size() != b.num_labels) throw InputError("make_batch: label vector length disagrees with header");
    b.labels.insert(b.labels.end(), s.labels.begin(), s.labels.end());
    b.ids.push_back(s.id);
  }
  b.targets.assign(b.labels.begin(), b.labels.end());
  return b;
}

std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw InputError("sequential_batches: batch size must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
    out.push_back(std::move(idx));
  }
  return out;
}

CARAT_NS_END
