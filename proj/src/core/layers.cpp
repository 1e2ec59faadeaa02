// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/layers.hpp"

#include <cmath>

CARAT_NS_BEGIN

Tensor ParameterSet::add(std::string name, Tensor t) {
  names_.push_back(std::move(name));
  tensors_.push_back(t);
  return t;
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

Tensor uniform_tensor(Shape shape, double limit, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Linear Linear::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Linear l;
  l.w = ps.add(name + ".w", uniform_tensor({in, out}, limit, rng));
  if (with_bias) l.b = ps.add(name + ".b", Tensor({out}, true));
  return l;
}

Mlp2 Mlp2::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                  Rng& rng) {
  Mlp2 m;
  m.first = Linear::create(ps, name + ".0", in, hidden, rng);
  m.second = Linear::create(ps, name + ".1", hidden, out, rng);
  return m;
}

LayerNorm LayerNorm::create(ParameterSet& ps, const std::string& name, std::size_t width) {
  LayerNorm ln;
  ln.gamma = ps.add(name + ".gamma", Tensor({width}, std::vector<Real>(width, Real(1)), true));
  ln.beta = ps.add(name + ".beta", Tensor({width}, true));
  return ln;
}

CARAT_NS_END
