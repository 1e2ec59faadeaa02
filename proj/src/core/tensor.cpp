// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "carat/error.hpp"

CARAT_NS_BEGIN

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value.assign(shape_numel(shape), Real(0));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw InputError("Tensor: shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(Real v, bool requires_grad) { return Tensor(Shape{}, {v}, requires_grad); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

Real Tensor::item() const {
  if (numel() != 1) throw InputError("item(): tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

void Tensor::backward() const {
  if (numel() != 1) throw InputError("backward(): root must be a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(std::move(n));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

Tensor make_result(Shape shape, std::vector<Real> values, const std::vector<Tensor>& parents,
                   detail::BackwardFn backward) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (const auto& p : parents) n->parents.push_back(p.node_ptr());
      n->backward = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

CARAT_NS_END
