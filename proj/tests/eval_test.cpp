// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "carat/error.hpp"
#include "carat/metrics.hpp"

using namespace carat;

namespace {

LabelMatrix matrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> cells) {
  LabelMatrix m(rows, cols);
  m.cells = std::move(cells);
  return m;
}

LabelMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double p) {
  std::bernoulli_distribution b(p);
  LabelMatrix m(rows, cols);
  for (auto& c : m.cells) c = b(rng) ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("compute_metrics: worked example") {
  const MetricsReport r = compute_metrics(matrix(1, 4, {1, 0, 1, 0}), matrix(1, 4, {1, 1, 0, 0}));
  CHECK(r.acc == doctest::Approx(1.0 / 3.0));
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(0.5));
  CHECK(r.micro_f1 == doctest::Approx(0.5));
  CHECK(r.per_label[0].tp == 1);
  CHECK(r.per_label[1].fp == 1);
  CHECK(r.per_label[2].fn == 1);
}

TEST_CASE("compute_metrics: perfect and empty predictions") {
  std::mt19937_64 rng(1);
  const LabelMatrix y = random_matrix(rng, 30, 6, 0.4);
  const MetricsReport perfect = compute_metrics(y, y);
  CHECK(perfect.acc == 1.0);
  CHECK(perfect.micro_f1 == 1.0);

  const MetricsReport none = compute_metrics(y, LabelMatrix(30, 6));
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.micro_f1 == 0.0);

  // A sample with no true and no predicted labels counts as fully correct.
  CHECK(compute_metrics(LabelMatrix(3, 4), LabelMatrix(3, 4)).acc == 1.0);
  CHECK_THROWS_AS(compute_metrics(LabelMatrix(3, 4), LabelMatrix(3, 5)), InputError);
}

TEST_CASE("compute_metrics: brute-force oracle and bounds on random pairs") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 12, c = 1 + rng() % 7;
    const LabelMatrix y = random_matrix(rng, n, c, 0.35), p = random_matrix(rng, n, c, 0.35);
    double tp = 0, fp = 0, fn = 0, acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double inter = 0, uni = 0;
      for (std::size_t j = 0; j < c; ++j) {
        tp += y.at(i, j) && p.at(i, j);
        fp += !y.at(i, j) && p.at(i, j);
        fn += y.at(i, j) && !p.at(i, j);
        inter += y.at(i, j) && p.at(i, j);
        uni += y.at(i, j) || p.at(i, j);
      }
      acc += uni > 0 ? inter / uni : 1.0;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;

    const MetricsReport r = compute_metrics(y, p);
    REQUIRE(r.acc == doctest::Approx(acc / static_cast<double>(n)));
    REQUIRE(r.precision == doctest::Approx(prec));
    REQUIRE(r.recall == doctest::Approx(rec));
    REQUIRE(r.micro_f1 == doctest::Approx(f1));
    for (double v : {r.acc, r.precision, r.recall, r.micro_f1}) REQUIRE((v >= 0.0 && v <= 1.0));
    if (r.precision + r.recall > 0) {
      REQUIRE(r.micro_f1 >= std::min(r.precision, r.recall) - 1e-12);
      REQUIRE(r.micro_f1 <= std::max(r.precision, r.recall) + 1e-12);
    }
  }
}

TEST_CASE("correlation_matrix: rows are selection frequencies") {
  // Two samples, two labels: label 0 picks t then t, label 1 picks v then a.
  const auto f = correlation_matrix({0, 1, 0, 2}, 2);
  REQUIRE(f.size() == 6);
  CHECK(f[0] == 1.0);
  CHECK(f[1] == 0.0);
  CHECK(f[3] == 0.0);
  CHECK(f[4] == 0.5);
  CHECK(f[5] == 0.5);

  std::mt19937_64 rng(3);
  std::vector<int> argmax(50 * 6);
  for (auto& m : argmax) m = static_cast<int>(rng() % 3);
  const auto g = correlation_matrix(argmax, 6);
  for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(g[j * 3] + g[j * 3 + 1] + g[j * 3 + 2] - 1.0) <= 1e-9);

  CHECK_THROWS_AS(correlation_matrix({0, 1, 3, 0}, 2), InputError);
  CHECK_THROWS_AS(correlation_matrix({0, 1, 2}, 2), InputError);
}

TEST_CASE("correlation_csv: header and fixed-precision rows") {
  CHECK(correlation_csv({1.0, 0.0, 0.0, 0.0, 0.5, 0.5}, 2) ==
        "label,t,v,a\n0,1.000000,0.000000,0.000000\n1,0.000000,0.500000,0.500000\n");
}

TEST_CASE("prior_baseline_f1: worked values") {
  // Four samples, one label, two positives.
  const LabelMatrix y = matrix(4, 1, {1, 0, 1, 0});
  // Always positive: P = 1/2, R = 1, F1 = 2/3; Bernoulli(0.5) guessing gives 1/2.
  CHECK(prior_baseline_f1({0.5}, y) == doctest::Approx(2.0 / 3.0));
  CHECK(prior_baseline_f1({0.5}, LabelMatrix(4, 1)) == 0.0);
  CHECK_THROWS_AS(prior_baseline_f1({0.5, 0.5}, y), InputError);
}

TEST_CASE("MetricsReport: JSON round trip and text table") {
  std::mt19937_64 rng(4);
  MetricsReport r = compute_metrics(random_matrix(rng, 20, 3, 0.4), random_matrix(rng, 20, 3, 0.4));
  r.modality_label_freq = {0.5, 0.25, 0.25, 1, 0, 0, 0, 0, 1};
  const MetricsReport back = MetricsReport::from_json(r.to_json());
  CHECK(back.acc == r.acc);
  CHECK(back.precision == r.precision);
  CHECK(back.recall == r.recall);
  CHECK(back.micro_f1 == r.micro_f1);
  CHECK(back.modality_label_freq == r.modality_label_freq);
  REQUIRE(back.per_label.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(back.per_label[j].tp == r.per_label[j].tp);
    CHECK(back.per_label[j].fp == r.per_label[j].fp);
    CHECK(back.per_label[j].fn == r.per_label[j].fn);
  }
  const std::string text = r.to_text();
  CHECK(text.find("Micro-F1") != std::string::npos);
  CHECK(text.find("label") != std::string::npos);
}
