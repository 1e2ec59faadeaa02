// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Hot loops of the library. The default versions split work across OpenMP
// threads by output row; every output element is produced by one thread in a
// fixed order, so results are bit-identical for any thread count. The
// `serial` namespace holds plain reference loops used by tests and the
// benchmark.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "carat/precision.hpp"

CARAT_NS_BEGIN
namespace kernels {

void set_num_threads(int n);
int num_threads();

/// C (m x n) = op(A) * op(B), or C += ... when `accumulate`.
/// op(A) is m x k; A is stored k x m when trans_a. op(B) is k x n; B is stored n x k when trans_b.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b,
          Real* c, bool accumulate);

/// Per-anchor state of the supervised contrastive loss.
struct ContrastiveRows {
  std::vector<Real> loss;          // per anchor, 0 when no positives
  std::vector<Real> log_partition; // log sum_{p != a} exp(s_ap)
  std::vector<std::size_t> positives;
};

/// `pool` is n_pool x dim; its first n_anchor rows are the anchors. Similarity
/// is the dot product divided by `tau`; the anchor itself is excluded.
ContrastiveRows contrastive_forward(std::span<const Real> pool, std::span<const int> tags, std::size_t n_anchor,
                                    std::size_t dim, Real tau);

/// Adds d(upstream * sum_a loss_a)/d(anchor rows) into grad_anchors (n_anchor x dim).
/// Non-anchor pool rows are constants.
void contrastive_backward(std::span<const Real> pool, std::span<const int> tags, std::size_t n_anchor, std::size_t dim,
                          Real tau, const ContrastiveRows& rows, Real upstream, std::span<Real> grad_anchors);

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b,
          Real* c, bool accumulate);

ContrastiveRows contrastive_forward(std::span<const Real> pool, std::span<const int> tags, std::size_t n_anchor,
                                    std::size_t dim, Real tau);

void contrastive_backward(std::span<const Real> pool, std::span<const int> tags, std::size_t n_anchor, std::size_t dim,
                          Real tau, const ContrastiveRows& rows, Real upstream, std::span<Real> grad_anchors);

}  // namespace serial
}  // namespace kernels
CARAT_NS_END
