// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "carat/tensor.hpp"

CARAT_NS_BEGIN

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Worst coordinate: parameter index and flat offset inside it.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double rel_tol = 0.0;

  bool passed() const { return max_rel_error <= rel_tol; }
  std::string describe(const std::vector<std::string>& names = {}) const;
  /// Throws GradCheckFailure naming the worst coordinate when !passed().
  void enforce(const std::vector<std::string>& names = {}) const;
};

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences with step `h` for every entry of every parameter. `f` must be
/// deterministic. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double rel_tol,
                           double h = 1e-5);

CARAT_NS_END
