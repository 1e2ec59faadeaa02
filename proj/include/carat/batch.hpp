// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "carat/dataset.hpp"
#include "carat/tensor.hpp"

CARAT_NS_BEGIN

/// Model-ready view of a group of samples.
struct Batch {
  std::size_t size = 0;
  std::size_t num_labels = 0;
  std::array<std::size_t, kNumModalities> seq_len{};
  /// x[m] is (size*seq_len[m]) x dims[m].
  std::array<Tensor, kNumModalities> x;
  std::array<std::vector<std::uint8_t>, kNumModalities> mask;
  std::vector<std::uint8_t> labels;  // size x C
  std::vector<Real> targets;         // labels as Real
  std::vector<std::int64_t> ids;
};

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices);

/// Consecutive batches in dataset order.
std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size);

CARAT_NS_END
