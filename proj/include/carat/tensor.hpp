// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "carat/precision.hpp"

CARAT_NS_BEGIN

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node&)>;

/// Storage plus tape entry. `backward` reads `grad` and accumulates into the
/// parents' grads; it never captures the node itself, so graphs are acyclic.
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  std::vector<Real>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array with optional participation in reverse-mode
/// differentiation. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor scalar(Real v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const Real> values() const { return node_->value; }
  std::span<Real> mutable_values() { return node_->value; }
  Real operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Empty span until a backward pass has reached this tensor.
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  Real item() const;

  /// Seeds d(this)/d(this) = 1 for a scalar and runs the tape in reverse.
  void backward() const;

  /// Same values, cut from the tape.
  Tensor detach() const;
  Tensor clone() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<Real>, const std::vector<Tensor>&, detail::BackwardFn);
};

/// Builds an op output. The backward function is only attached when gradient
/// recording is on and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<Real> values, const std::vector<Tensor>& parents,
                   detail::BackwardFn backward);

bool grad_enabled();

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

CARAT_NS_END
