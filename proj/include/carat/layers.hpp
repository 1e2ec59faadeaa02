// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "carat/ops.hpp"

CARAT_NS_BEGIN

/// Ordered, named collection of learnable tensors. The order is the
/// checkpoint order and the optimizer order.
class ParameterSet {
 public:
  Tensor add(std::string name, Tensor t);
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t numel() const;
  void zero_grad();

 private:
  std::vector<Tensor> tensors_;
  std::vector<std::string> names_;
};

using Rng = std::mt19937_64;

/// Xavier-uniform weight (in x out) and zero bias. Without a bias, b is undefined.
struct Linear {
  Tensor w;
  Tensor b;

  static Linear create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return b.defined() ? linear(x, w, b) : matmul(x, w); }
};

/// Two linear maps with a GELU between them.
struct Mlp2 {
  Linear first;
  Linear second;

  static Mlp2 create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                     Rng& rng);
  Tensor operator()(const Tensor& x) const { return second(gelu(first(x))); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParameterSet& ps, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

/// Uniform(-limit, limit) fill.
Tensor uniform_tensor(Shape shape, double limit, Rng& rng, bool requires_grad = true);

CARAT_NS_END
