// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include <random>

#include "carat/kernels.hpp"
#include "test_util.hpp"

using namespace carat;
using carat::testing::random_values;
using carat::testing::uniform_size;

namespace {

struct ThreadScope {
  int saved = kernels::num_threads();
  explicit ThreadScope(int n) { kernels::set_num_threads(n); }
  ~ThreadScope() { kernels::set_num_threads(saved); }
};

/// Unit rows, so similarities stay in a realistic range.
std::vector<Real> unit_rows(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<Real> v = random_values(n * dim, rng);
  for (std::size_t r = 0; r < n; ++r) {
    Real s = 0;
    for (std::size_t k = 0; k < dim; ++k) s += v[r * dim + k] * v[r * dim + k];
    s = std::sqrt(s);
    for (std::size_t k = 0; k < dim; ++k) v[r * dim + k] /= s;
  }
  return v;
}

}  // namespace

TEST_CASE("gemm: bitwise identical across thread counts and close to the serial reference") {
  Rng rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    // Sizes straddle the parallel threshold.
    const std::size_t m = uniform_size(rng, 2, 70), n = uniform_size(rng, 1, 70), k = uniform_size(rng, 1, 70);
    const bool ta = uniform_size(rng, 0, 1), tb = uniform_size(rng, 0, 1), acc = uniform_size(rng, 0, 1);
    const auto a = random_values(m * k, rng), b = random_values(k * n, rng), c0 = random_values(m * n, rng);
    std::vector<Real> one = c0;
    {
      ThreadScope scope(1);
      kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), one.data(), acc);
    }
    for (int threads : {2, 4}) {
      ThreadScope scope(threads);
      std::vector<Real> many = c0;
      kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), many.data(), acc);
      REQUIRE(many == one);
    }
    std::vector<Real> ref = c0;
    kernels::serial::gemm(ta, tb, m, n, k, a.data(), b.data(), ref.data(), acc);
    for (std::size_t x = 0; x < ref.size(); ++x) REQUIRE(std::abs(one[x] - ref[x]) <= Real(1e-4) * (1 + std::abs(ref[x])));
  }
}

TEST_CASE("gemm: serial reference matches the textbook triple loop") {
  Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = uniform_size(rng, 1, 9), n = uniform_size(rng, 1, 9), k = uniform_size(rng, 1, 9);
    const bool ta = uniform_size(rng, 0, 1), tb = uniform_size(rng, 0, 1);
    const auto a = random_values(m * k, rng), b = random_values(k * n, rng);
    std::vector<Real> c(m * n, Real(0));
    kernels::serial::gemm(ta, tb, m, n, k, a.data(), b.data(), c.data(), false);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < k; ++p) {
          const double x = ta ? a[p * m + i] : a[i * k + p];
          const double y = tb ? b[j * k + p] : b[p * n + j];
          s += x * y;
        }
        REQUIRE(static_cast<double>(c[i * n + j]) == doctest::Approx(s).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("contrastive kernels: bitwise identical across thread counts and close to the serial reference") {
  Rng rng(3);
  const Real tau = Real(0.1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t dim = uniform_size(rng, 2, 16), n_anchor = uniform_size(rng, 1, 120);
    const std::size_t n_pool = n_anchor + uniform_size(rng, 0, 200);
    const auto pool = unit_rows(n_pool, dim, rng);
    std::vector<int> tags(n_pool);
    for (auto& t : tags) t = static_cast<int>(uniform_size(rng, 0, 5));

    auto run = [&](int threads) {
      ThreadScope scope(threads);
      auto rows = kernels::contrastive_forward(pool, tags, n_anchor, dim, tau);
      std::vector<Real> g(n_anchor * dim, Real(0));
      kernels::contrastive_backward(pool, tags, n_anchor, dim, tau, rows, Real(0.5), g);
      return std::pair{rows, g};
    };
    const auto [rows, grad] = run(1);
    for (int threads : {2, 4}) {
      const auto [r, g] = run(threads);
      REQUIRE(r.loss == rows.loss);
      REQUIRE(r.log_partition == rows.log_partition);
      REQUIRE(r.positives == rows.positives);
      REQUIRE(g == grad);
    }

    const auto ref = kernels::serial::contrastive_forward(pool, tags, n_anchor, dim, tau);
    std::vector<Real> ref_grad(n_anchor * dim, Real(0));
    kernels::serial::contrastive_backward(pool, tags, n_anchor, dim, tau, ref, Real(0.5), ref_grad);
    REQUIRE(ref.positives == rows.positives);
    for (std::size_t a = 0; a < n_anchor; ++a) {
      REQUIRE(std::abs(rows.loss[a] - ref.loss[a]) <= Real(1e-4) * (1 + std::abs(ref.loss[a])));
      REQUIRE(std::abs(rows.log_partition[a] - ref.log_partition[a]) <= Real(1e-4) * (1 + std::abs(ref.log_partition[a])));
    }
    for (std::size_t x = 0; x < grad.size(); ++x) REQUIRE(std::abs(grad[x] - ref_grad[x]) <= Real(1e-3) * (1 + std::abs(ref_grad[x])));
  }
}
