// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// OpenMP kernels against their serial references. Thread count comes from
// CARAT_THREADS (default: all available).

#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "carat/kernels.hpp"

namespace {

using carat::Real;
namespace kernels = carat::kernels;

std::vector<Real> random_values(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> g(0.f, 1.f);
  std::vector<Real> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

void unit_rows(std::vector<Real>& v, std::size_t dim) {
  for (std::size_t r = 0; r < v.size() / dim; ++r) {
    Real s = 0;
    for (std::size_t k = 0; k < dim; ++k) s += v[r * dim + k] * v[r * dim + k];
    s = std::sqrt(s);
    for (std::size_t k = 0; k < dim; ++k) v[r * dim + k] /= s;
  }
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<Real> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    } else {
      kernels::serial::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

struct ContrastiveInput {
  std::vector<Real> pool;
  std::vector<int> tags;
  std::size_t anchors;
  std::size_t dim = 8;
};

ContrastiveInput contrastive_input(std::size_t anchors, std::size_t queue) {
  ContrastiveInput in;
  in.anchors = anchors;
  in.pool = random_values((anchors + queue) * in.dim, 3);
  unit_rows(in.pool, in.dim);
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> tag(0, 35);
  in.tags.resize(anchors + queue);
  for (auto& t : in.tags) t = tag(rng);
  return in;
}

template <bool Parallel>
void BM_ContrastiveForward(benchmark::State& state) {
  const auto in = contrastive_input(static_cast<std::size_t>(state.range(0)), 1024);
  for (auto _ : state) {
    auto rows = Parallel ? kernels::contrastive_forward(in.pool, in.tags, in.anchors, in.dim, Real(0.1))
                         : kernels::serial::contrastive_forward(in.pool, in.tags, in.anchors, in.dim, Real(0.1));
    benchmark::DoNotOptimize(rows.loss.data());
  }
}

template <bool Parallel>
void BM_ContrastiveBackward(benchmark::State& state) {
  const auto in = contrastive_input(static_cast<std::size_t>(state.range(0)), 1024);
  const auto rows = kernels::serial::contrastive_forward(in.pool, in.tags, in.anchors, in.dim, Real(0.1));
  std::vector<Real> grad(in.anchors * in.dim);
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), Real(0));
    if constexpr (Parallel) {
      kernels::contrastive_backward(in.pool, in.tags, in.anchors, in.dim, Real(0.1), rows, Real(1), grad);
    } else {
      kernels::serial::contrastive_backward(in.pool, in.tags, in.anchors, in.dim, Real(0.1), rows, Real(1), grad);
    }
    benchmark::DoNotOptimize(grad.data());
  }
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/openmp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_ContrastiveForward<false>)->Name("scl_forward/serial")->Arg(432)->Arg(1728);
BENCHMARK(BM_ContrastiveForward<true>)->Name("scl_forward/openmp")->Arg(432)->Arg(1728);
BENCHMARK(BM_ContrastiveBackward<false>)->Name("scl_backward/serial")->Arg(432)->Arg(1728);
BENCHMARK(BM_ContrastiveBackward<true>)->Name("scl_backward/openmp")->Arg(432)->Arg(1728);

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("CARAT_THREADS")) kernels::set_num_threads(std::atoi(env));
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
