// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/optim.hpp"

#include <cmath>

#include "carat/error.hpp"

CARAT_NS_BEGIN

double lr_at(std::size_t step, double peak_lr, std::size_t warmup_steps, std::size_t total_steps) {
  if (step >= total_steps) return 0.0;
  if (warmup_steps > 0 && step <= warmup_steps) {
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  return peak_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup_steps);
}

void OptimizerState::init(const std::vector<Tensor>& params) {
  first_moment.clear();
  second_moment.clear();
  for (const auto& p : params) {
    first_moment.emplace_back(p.numel(), Real(0));
    second_moment.emplace_back(p.numel(), Real(0));
  }
}

void adam_step(OptimizerState& state, std::vector<Tensor>& params, std::span<const std::span<const Real>> grads) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw InputError("adam_step: parameter / gradient / moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].numel();
    if ((!grads[i].empty() && grads[i].size() != n) || state.first_moment[i].size() != n ||
        state.second_moment[i].size() != n) {
      throw InputError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double lr = lr_at(state.step, state.peak_lr, state.warmup_steps, state.total_steps);
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const Real b1 = static_cast<Real>(state.beta1), b2 = static_cast<Real>(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_values();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const Real gk = g.empty() ? Real(0) : g[k];
      m[k] = b1 * m[k] + (Real(1) - b1) * gk;
      v[k] = b2 * v[k] + (Real(1) - b2) * gk * gk;
      const double mhat = static_cast<double>(m[k]) / bc1;
      const double vhat = static_cast<double>(v[k]) / bc2;
      w[k] = static_cast<Real>(w[k] - lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

void adam_step(OptimizerState& state, std::vector<Tensor>& params) {
  std::vector<std::span<const Real>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(state, params, grads);
}

CARAT_NS_END
