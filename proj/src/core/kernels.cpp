// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <omp.h>

CARAT_NS_BEGIN
namespace kernels {

namespace {

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

inline Real dot(const Real* x, const Real* y, std::size_t n) {
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

// One output row of C = op(A) * B with B stored k x n.
inline void gemm_row(bool trans_a, std::size_t i, std::size_t m, std::size_t n, std::size_t k, const Real* a,
                     const Real* b, Real* c, bool accumulate) {
  Real* crow = c + i * n;
  if (!accumulate) std::fill(crow, crow + n, Real(0));
  for (std::size_t p = 0; p < k; ++p) {
    const Real aip = trans_a ? a[p * m + i] : a[i * k + p];
    if (aip == Real(0)) continue;
    const Real* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
  }
}

}  // namespace

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }
int num_threads() { return omp_get_max_threads(); }

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b,
          Real* c, bool accumulate) {
  std::vector<Real> bt;
  if (trans_b) {
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    }
    b = bt.data();
  }
  const bool parallel = m > 1 && m * n * k >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t i = 0; i < m; ++i) gemm_row(trans_a, i, m, n, k, a, b, c, accumulate);
}

namespace {

struct AnchorStats {
  Real loss = 0;
  Real log_partition = 0;
  std::size_t positives = 0;
};

AnchorStats anchor_forward(std::span<const Real> pool, std::span<const int> tags, std::size_t a, std::size_t n_pool,
                           std::size_t dim, Real inv_tau, std::vector<Real>& scratch) {
  const Real* ea = pool.data() + a * dim;
  Real mx = -std::numeric_limits<Real>::infinity();
  for (std::size_t p = 0; p < n_pool; ++p) {
    const Real s = p == a ? Real(0) : dot(ea, pool.data() + p * dim, dim) * inv_tau;
    scratch[p] = s;
    if (p != a) mx = std::max(mx, s);
  }
  AnchorStats st;
  if (n_pool < 2) return st;
  Real total = 0, pos_sum = 0;
  for (std::size_t p = 0; p < n_pool; ++p) {
    if (p == a) continue;
    total += std::exp(scratch[p] - mx);
    if (tags[p] == tags[a]) {
      pos_sum += scratch[p];
      ++st.positives;
    }
  }
  st.log_partition = mx + std::log(total);
  if (st.positives > 0) st.loss = st.log_partition - pos_sum / static_cast<Real>(st.positives);
  return st;
}

// dL/ds_ap for anchor a against pool row p.
inline Real pair_weight(Real s, Real log_partition, bool positive, Real inv_positives) {
  return std::exp(s - log_partition) - (positive ? inv_positives : Real(0));
}

}  // namespace

ContrastiveRows contrastive_forward(std::span<const Real> pool, std::span<const int> tags, std::size_t n_anchor,
                                    std::size_t dim, Real tau) {
  const std::size_t n_pool = tags.size();
  const Real inv_tau = Real(1) / tau;
  ContrastiveRows rows;
  rows.loss.assign(n_anchor, 0);
  rows.log_partition.assign(n_anchor, 0);
  rows.positives.assign(n_anchor, 0);
  const bool parallel = n_anchor * n_pool * dim >= kParallelWork;
#pragma omp parallel if (parallel)
  {
    std::vector<Real> scratch(n_pool);
#pragma omp for schedule(static)
    for (std::size_t a = 0; a < n_anchor; ++a) {
      const auto st = anchor_forward(pool, tags, a, n_pool, dim, inv_tau, scratch);
      rows.loss[a] = st.loss;
      rows.log_partition[a] = st.log_partition;
      rows.positives[a] = st.positives;
    }
  }
  return rows;
}

void contrastive_backward(std::span<const Real> pool, std::span<const int> tags, std::size_t n_anchor, std::size_t dim,
                          Real tau, const ContrastiveRows& rows, Real upstream, std::span<Real> grad_anchors) {
  const std::size_t n_pool = tags.size();
  const Real inv_tau = Real(1) / tau;
  const Real scale = upstream * inv_tau;
  const bool parallel = n_anchor * n_pool * dim >= kParallelWork;

  // Pass 1: anchor a as the query side, sum over pool rows p.
  // Pass 2: batch row p as the key side, sum over anchors a.
  // Each pass writes disjoint rows, so both parallelize without races.
#pragma omp parallel if (parallel)
  {
    std::vector<Real> acc(dim);
#pragma omp for schedule(static)
    for (std::size_t a = 0; a < n_anchor; ++a) {
      if (rows.positives[a] == 0) continue;
      const Real inv_pos = Real(1) / static_cast<Real>(rows.positives[a]);
      const Real* ea = pool.data() + a * dim;
      std::fill(acc.begin(), acc.end(), Real(0));
      for (std::size_t p = 0; p < n_pool; ++p) {
        if (p == a) continue;
        const Real* ep = pool.data() + p * dim;
        const Real w = pair_weight(dot(ea, ep, dim) * inv_tau, rows.log_partition[a], tags[p] == tags[a], inv_pos);
        for (std::size_t c = 0; c < dim; ++c) acc[c] += w * ep[c];
      }
      Real* g = grad_anchors.data() + a * dim;
      for (std::size_t c = 0; c < dim; ++c) g[c] += scale * acc[c];
    }
  }
#pragma omp parallel if (parallel)
  {
    std::vector<Real> acc(dim);
#pragma omp for schedule(static)
    for (std::size_t p = 0; p < n_anchor; ++p) {
      const Real* ep = pool.data() + p * dim;
      std::fill(acc.begin(), acc.end(), Real(0));
      for (std::size_t a = 0; a < n_anchor; ++a) {
        if (a == p || rows.positives[a] == 0) continue;
        const Real inv_pos = Real(1) / static_cast<Real>(rows.positives[a]);
        const Real* ea = pool.data() + a * dim;
        const Real w = pair_weight(dot(ea, ep, dim) * inv_tau, rows.log_partition[a], tags[p] == tags[a], inv_pos);
        for (std::size_t c = 0; c < dim; ++c) acc[c] += w * ea[c];
      }
      Real* g = grad_anchors.data() + p * dim;
      for (std::size_t c = 0; c < dim; ++c) g[c] += scale * acc[c];
    }
  }
}

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b,
          Real* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = trans_a ? a[p * m + i] : a[i * k + p];
        const Real bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

ContrastiveRows contrastive_forward(std::span<const Real> pool, std::span<const int> tags, std::size_t n_anchor,
                                    std::size_t dim, Real tau) {
  const std::size_t n_pool = tags.size();
  ContrastiveRows rows;
  rows.loss.assign(n_anchor, 0);
  rows.log_partition.assign(n_anchor, 0);
  rows.positives.assign(n_anchor, 0);
  for (std::size_t a = 0; a < n_anchor; ++a) {
    // log-sum-exp over E \ {a}, then minus the positive mean.
    std::vector<Real> sims;
    std::vector<Real> pos;
    for (std::size_t p = 0; p < n_pool; ++p) {
      if (p == a) continue;
      Real s = 0;
      for (std::size_t c = 0; c < dim; ++c) s += pool[a * dim + c] * pool[p * dim + c];
      s /= tau;
      sims.push_back(s);
      if (tags[p] == tags[a]) pos.push_back(s);
    }
    if (sims.empty()) continue;
    const Real mx = *std::max_element(sims.begin(), sims.end());
    Real z = 0;
    for (Real s : sims) z += std::exp(s - mx);
    rows.log_partition[a] = mx + std::log(z);
    rows.positives[a] = pos.size();
    if (pos.empty()) continue;
    Real l = 0;
    for (Real s : pos) l += rows.log_partition[a] - s;
    rows.loss[a] = l / static_cast<Real>(pos.size());
  }
  return rows;
}

void contrastive_backward(std::span<const Real> pool, std::span<const int> tags, std::size_t n_anchor, std::size_t dim,
                          Real tau, const ContrastiveRows& rows, Real upstream, std::span<Real> grad_anchors) {
  const std::size_t n_pool = tags.size();
  for (std::size_t a = 0; a < n_anchor; ++a) {
    if (rows.positives[a] == 0) continue;
    for (std::size_t p = 0; p < n_pool; ++p) {
      if (p == a) continue;
      Real s = 0;
      for (std::size_t c = 0; c < dim; ++c) s += pool[a * dim + c] * pool[p * dim + c];
      s /= tau;
      Real w = std::exp(s - rows.log_partition[a]);
      if (tags[p] == tags[a]) w -= Real(1) / static_cast<Real>(rows.positives[a]);
      w *= upstream / tau;
      for (std::size_t c = 0; c < dim; ++c) {
        grad_anchors[a * dim + c] += w * pool[p * dim + c];
        if (p < n_anchor) grad_anchors[p * dim + c] += w * pool[a * dim + c];
      }
    }
  }
}

}  // namespace serial
}  // namespace kernels
CARAT_NS_END
