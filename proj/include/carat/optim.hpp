// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "carat/tensor.hpp"

CARAT_NS_BEGIN

/// Linear ramp 0 -> peak over `warmup_steps`, then linear decay to 0 at
/// `total_steps`. Steps past the end clamp to 0.
double lr_at(std::size_t step, double peak_lr, std::size_t warmup_steps, std::size_t total_steps);

struct OptimizerState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double peak_lr = 1e-3;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;

  /// Sizes moment buffers to match `params` (zero-filled).
  void init(const std::vector<Tensor>& params);
};

/// One bias-corrected Adam update. The step counter is incremented first and
/// the learning rate is lr_at(new step). Parameters without a gradient buffer
/// are treated as having zero gradient.
void adam_step(OptimizerState& state, std::vector<Tensor>& params);

/// Same, with gradients supplied explicitly (one span per parameter).
void adam_step(OptimizerState& state, std::vector<Tensor>& params, std::span<const std::span<const Real>> grads);

CARAT_NS_END
