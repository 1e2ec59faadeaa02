// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "carat/error.hpp"

CARAT_NS_BEGIN

std::string GradCheckReport::describe(const std::vector<std::string>& names) const {
  char buf[256];
  const std::string who = worst_param < names.size() ? names[worst_param] : "param#" + std::to_string(worst_param);
  std::snprintf(buf, sizeof buf, "max rel error %.3e over %zu entries (tol %.1e); worst %s[%zu]: analytic %.9e numeric %.9e",
                max_rel_error, checked, rel_tol, who.c_str(), worst_index, worst_analytic, worst_numeric);
  return buf;
}

void GradCheckReport::enforce(const std::vector<std::string>& names) const {
  if (!passed()) throw GradCheckFailure("gradient check failed: " + describe(names));
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double rel_tol, double h) {
  for (auto& p : params) p.zero_grad();
  {
    const Tensor loss = f();
    loss.backward();
  }
  GradCheckReport rep;
  rep.rel_tol = rel_tol;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const std::vector<Real> analytic = p.has_grad() ? std::vector<Real>(p.grad().begin(), p.grad().end())
                                                    : std::vector<Real>(p.numel(), Real(0));
    auto vals = p.mutable_values();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const Real orig = vals[k];
      const Real hi = static_cast<Real>(orig + h), lo = static_cast<Real>(orig - h);
      vals[k] = hi;
      const Real up = f().item();
      vals[k] = lo;
      const Real down = f().item();
      vals[k] = orig;
      // Difference in Real so the extended build keeps its extra digits.
      const double numeric = static_cast<double>((up - down) / (hi - lo));
      const double a = static_cast<double>(analytic[k]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_error || rep.checked == 1) {
        rep.max_rel_error = rel;
        rep.worst_param = pi;
        rep.worst_index = k;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

CARAT_NS_END
