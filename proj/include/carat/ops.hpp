// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Differentiable operations on Tensor. Matrices are rank-2 row-major; "rows"
// ops treat every leading index as a row and act along the last axis.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "carat/tensor.hpp"

CARAT_NS_BEGIN

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
/// Adds a constant (non-differentiable) buffer of the same size.
Tensor add_const(const Tensor& a, std::span<const Real> c);

/// a (m x k) * b (k x n), or a * b^T when trans_b (b is n x k).
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_b = false);
/// x (r x in) * w (in x out) + bias (out).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
/// Tanh-approximated GELU.
Tensor gelu(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = Real(1e-5));

/// Max-subtracted softmax along the last axis. Throws NumericError on non-finite input.
Tensor softmax(const Tensor& x);

inline constexpr double kNormEpsilon = 1e-12;
/// Rows scaled to unit L2 norm. Throws DegenerateVectorError when a row norm <= 1e-12.
Tensor l2_normalize(const Tensor& x);

struct MaxPoolResult {
  Tensor values;
  /// Winning leading index per output element; ties go to the lowest index.
  std::vector<int> argmax;
};
/// Elementwise max over the leading axis of an (M, ...) tensor.
MaxPoolResult maxpool_stack(const Tensor& stack);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over elements of the numerically stable binary cross entropy.
/// Targets must be 0 or 1 (InputError otherwise).
Tensor bce_with_logits(const Tensor& logits, std::span<const Real> targets);

/// Splits the rows of x into `groups` equal blocks and returns each block's
/// Frobenius norm (or squared norm). The gradient at a zero block is zero.
Tensor group_frobenius(const Tensor& x, std::size_t groups, bool squared = false);

/// Mean squared difference.
Tensor mse(const Tensor& a, const Tensor& b);

/// Scaled dot-product self attention over `batch` sequences of length `seq`,
/// split into `heads` heads. q, k, v are (batch*seq) x d. Invalid positions
/// (mask 0) neither attend nor are attended to; their output rows are zero.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::uint8_t> mask,
                            std::size_t batch, std::size_t seq, std::size_t heads);

CARAT_NS_END
