// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include <cmath>
#include <deque>
#include <set>

#include "carat/error.hpp"
#include "carat/latent.hpp"
#include "test_util.hpp"

using namespace carat;
using carat::testing::check_gradient;
using carat::testing::random_tensor;
using carat::testing::random_values;
using carat::testing::uniform_size;

namespace {

std::vector<Real> unit_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Real> v(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    std::vector<double> row(dim);
    for (auto& x : row) {
      x = g(rng);
      sq += x * x;
    }
    for (std::size_t k = 0; k < dim; ++k) v[r * dim + k] = static_cast<Real>(row[k] / std::sqrt(sq));
  }
  return v;
}

/// Per-anchor loss written straight from the definition: mean over positives
/// of -log(exp(s_ap) / sum_{e' != a} exp(s_ae')).
std::vector<double> brute_force_scl(const std::vector<Real>& pool, const std::vector<int>& tags, std::size_t n_anchor,
                                    std::size_t dim, double tau) {
  const std::size_t n = tags.size();
  std::vector<double> out(n_anchor, 0.0);
  for (std::size_t a = 0; a < n_anchor; ++a) {
    std::vector<double> sim(n);
    for (std::size_t e = 0; e < n; ++e) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += static_cast<double>(pool[a * dim + k] * pool[e * dim + k]);
      sim[e] = dot / tau;
    }
    double denom = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      if (e != a) denom += std::exp(sim[e]);
    }
    double acc = 0.0;
    std::size_t npos = 0;
    for (std::size_t e = 0; e < n; ++e) {
      if (e == a || tags[e] != tags[a]) continue;
      acc += -std::log(std::exp(sim[e]) / denom);
      ++npos;
    }
    out[a] = npos ? acc / static_cast<double>(npos) : 0.0;
  }
  return out;
}

Mlp2 small_mlp(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
               Rng& rng) {
  return Mlp2::create(ps, name, in, hidden, out, rng);
}

}  // namespace

TEST_CASE("relabel: tags identify modality, label and polarity") {
  const int c = 6;
  CHECK(decode_tag(relabel(0, 2, 1, c), c) == ClassTag{0, 2, Polarity::pos});
  CHECK(decode_tag(relabel(1, 0, 0, c), c) == ClassTag{1, 0, Polarity::neg});
  CHECK(tag_name(decode_tag(relabel(0, 2, 1, c), c)) == "l^t_{2,pos}");
  CHECK(tag_name(decode_tag(relabel(1, 0, 0, c), c)) == "l^v_{0,neg}");
  std::set<int> seen;
  for (int m = 0; m < 3; ++m) {
    for (int j = 0; j < c; ++j) {
      for (int y = 0; y < 2; ++y) {
        const int t = relabel(m, j, y, c);
        CHECK(t >= 0);
        CHECK(t < 2 * 3 * c);
        seen.insert(t);
      }
    }
  }
  CHECK(seen.size() == 36);
}

TEST_CASE("encode_latent / decode_latent: shapes, unit rows and gradients") {
  for (int s = 0; s < 20; ++s) {
    CAPTURE(s);
    Rng rng(300 + s);
    ParameterSet ps;
    const std::size_t c = uniform_size(rng, 1, 4), d = uniform_size(rng, 2, 6), dz = uniform_size(rng, 2, 4);
    const Mlp2 enc = small_mlp(ps, "enc", d, d, dz, rng);
    const Mlp2 dec = small_mlp(ps, "dec", dz, d, d, rng);
    Tensor u = random_tensor({c, d}, rng);
    const Tensor z = encode_latent(enc, u);
    CHECK(z.shape() == Shape{c, dz});
    for (std::size_t r = 0; r < c; ++r) {
      double sq = 0.0;
      for (std::size_t k = 0; k < dz; ++k) sq += static_cast<double>(z[r * dz + k] * z[r * dz + k]);
      CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-6);
    }
    const Tensor back = decode_latent(dec, z);
    CHECK(back.shape() == Shape{c, d});
    CHECK(carat::testing::all_finite(back.values()));
    std::vector<Tensor> params = ps.tensors();
    params.push_back(u);
    check_gradient([&] { return decode_latent(dec, encode_latent(enc, u)); }, params, rng);
  }
}

TEST_CASE("scl_loss: worked values") {
  SUBCASE("a single positive partner gives zero") {
    const Tensor a({2, 2}, {1, 0, 0, 1});
    const int tags[] = {4, 4};
    CHECK(std::abs(static_cast<double>(scl_loss(a, tags, {}, {}, Real(0.5)).item())) <= 1e-12);
  }
  SUBCASE("identical embeddings give ln|E(e)| per anchor") {
    // Pool of 5 identical rows: every similarity is equal, so each positive
    // term is -log(1 / 4).
    const std::size_t dim = 3;
    std::vector<Real> row{Real(0.6), 0, Real(0.8)};
    std::vector<Real> av;
    for (int i = 0; i < 3; ++i) av.insert(av.end(), row.begin(), row.end());
    std::vector<Real> qv;
    for (int i = 0; i < 2; ++i) qv.insert(qv.end(), row.begin(), row.end());
    const int at[] = {1, 1, 2};
    const int qt[] = {2, 7};
    const Tensor anchors({3, dim}, av);
    // Anchors 0, 1 and 2 each have at least one positive.
    const double expect = 3 * std::log(4.0);
    CHECK(static_cast<double>(scl_loss(anchors, at, qv, qt, Real(0.1)).item()) ==
          doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("anchors without positives contribute zero") {
    const Tensor a({2, 2}, {1, 0, 0, 1});
    const int tags[] = {0, 1};
    CHECK(scl_loss(a, tags, {}, {}, Real(0.1)).item() == 0);
  }
  SUBCASE("non-positive temperature is a config error") {
    const Tensor a({1, 2}, {1, 0});
    const int tags[] = {0};
    CHECK_THROWS_AS(scl_loss(a, tags, {}, {}, Real(0)), ConfigError);
    CHECK_THROWS_AS(scl_loss(a, tags, {}, {}, Real(-1)), ConfigError);
  }
}

TEST_CASE("scl_loss: matches the brute-force definition on random pools") {
  for (int s = 0; s < 30; ++s) {
    CAPTURE(s);
    Rng rng(400 + s);
    const std::size_t dim = uniform_size(rng, 2, 5), na = uniform_size(rng, 1, 12), nq = uniform_size(rng, 0, 15);
    const int ntags = static_cast<int>(uniform_size(rng, 1, 5));
    const std::vector<Real> pool = unit_rows(na + nq, dim, rng);
    std::vector<int> tags(na + nq);
    for (auto& t : tags) t = static_cast<int>(uniform_size(rng, 0, static_cast<std::size_t>(ntags - 1)));
    const double tau = 0.1 + 0.4 * static_cast<double>(uniform_size(rng, 0, 3));

    const Tensor anchors({na, dim}, std::vector<Real>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(na * dim)));
    const std::vector<Real> qv(pool.begin() + static_cast<std::ptrdiff_t>(na * dim), pool.end());
    const std::vector<int> at(tags.begin(), tags.begin() + static_cast<std::ptrdiff_t>(na));
    const std::vector<int> qt(tags.begin() + static_cast<std::ptrdiff_t>(na), tags.end());

    const std::vector<double> expect = brute_force_scl(pool, tags, na, dim, tau);
    const kernels::ContrastiveRows rows = kernels::contrastive_forward(pool, tags, na, dim, static_cast<Real>(tau));
    double total = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      CHECK(rows.loss[a] >= 0);
      CHECK(static_cast<double>(rows.loss[a]) == doctest::Approx(expect[a]).epsilon(1e-10));
      // Positive set sizes against brute-force tag filtering.
      std::size_t npos = 0;
      for (std::size_t e = 0; e < na + nq; ++e) npos += (e != a && tags[e] == tags[a]) ? 1 : 0;
      CHECK(rows.positives[a] == npos);
      total += expect[a];
    }
    CHECK(static_cast<double>(scl_loss(anchors, at, qv, qt, static_cast<Real>(tau)).item()) ==
          doctest::Approx(total).epsilon(1e-10));
  }
}

TEST_CASE("scl_loss: anchor gradients match finite differences") {
  for (int s = 0; s < 20; ++s) {
    CAPTURE(s);
    Rng rng(500 + s);
    const std::size_t dim = uniform_size(rng, 2, 4), na = uniform_size(rng, 2, 8), nq = uniform_size(rng, 0, 8);
    std::vector<int> at(na), qt(nq);
    for (auto& t : at) t = static_cast<int>(uniform_size(rng, 0, 2));
    for (auto& t : qt) t = static_cast<int>(uniform_size(rng, 0, 2));
    const std::vector<Real> qv = unit_rows(nq, dim, rng);
    Tensor raw = random_tensor({na, dim}, rng);
    // Anchors are unit vectors in the model; normalizing inside f keeps that.
    const GradCheckReport rep = grad_check(
        [&] { return scl_loss(l2_normalize(raw), at, qv, qt, Real(0.5)); }, {raw}, 1e-5);
    INFO(rep.describe());
    CHECK(rep.passed());
  }
}

TEST_CASE("scl_loss: the queue is a constant") {
  Rng rng(9);
  const std::size_t dim = 3;
  Tensor a = Tensor({4, dim}, unit_rows(4, dim, rng), true);
  const std::vector<Real> qv = unit_rows(5, dim, rng);
  const int at[] = {0, 1, 0, 1};
  const int qt[] = {0, 0, 1, 1, 0};
  const Tensor loss = scl_loss(a, at, qv, qt, Real(0.2));
  CHECK(loss.node()->parents.size() == 1);
  CHECK(loss.node()->parents[0].get() == a.node());
}

TEST_CASE("EmbeddingQueue: FIFO eviction against a reference deque") {
  SUBCASE("capacity 4, push 6") {
    EmbeddingQueue q(4, 1);
    for (int i = 0; i < 6; ++i) {
      const Real v[] = {static_cast<Real>(i)};
      q.push(v, i);
    }
    CHECK(q.size() == 4);
    CHECK(q.values() == std::vector<Real>{2, 3, 4, 5});
    CHECK(q.tags() == std::vector<int>{2, 3, 4, 5});
  }
  SUBCASE("push nothing") {
    EmbeddingQueue q(3, 2);
    q.push_all({}, {});
    CHECK(q.size() == 0);
  }
  SUBCASE("random sequences") {
    Rng rng(21);
    for (int s = 0; s < 50; ++s) {
      const std::size_t cap = uniform_size(rng, 1, 10), dim = uniform_size(rng, 1, 3);
      EmbeddingQueue q(cap, dim);
      std::deque<std::pair<std::vector<Real>, int>> ref;
      for (int round = 0; round < 8; ++round) {
        const std::size_t n = uniform_size(rng, 0, 7);
        std::vector<Real> vals = random_values(n * dim, rng);
        std::vector<int> tags(n);
        for (auto& t : tags) t = static_cast<int>(uniform_size(rng, 0, 100));
        q.push_all(vals, tags);
        for (std::size_t i = 0; i < n; ++i) {
          ref.emplace_back(std::vector<Real>(vals.begin() + static_cast<std::ptrdiff_t>(i * dim),
                                             vals.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim)),
                           tags[i]);
          if (ref.size() > cap) ref.pop_front();
        }
        REQUIRE(q.size() <= cap);
        REQUIRE(q.size() == ref.size());
        std::vector<Real> rv;
        std::vector<int> rt;
        for (const auto& [v, t] : ref) {
          rv.insert(rv.end(), v.begin(), v.end());
          rt.push_back(t);
        }
        REQUIRE(q.values() == rv);
        REQUIRE(q.tags() == rt);
      }
    }
  }
}

TEST_CASE("PrototypeBank: momentum update") {
  SUBCASE("phi = 0.5 between orthogonal vectors") {
    PrototypeBank bank(1, 1, 2, 0.5);
    auto mu = bank.mutable_prototype(0);
    mu[0] = 1;
    mu[1] = 0;
    const Real e[] = {0, 1};
    bank.update(e, 0);
    CHECK(static_cast<double>(bank.prototype(0)[0]) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(static_cast<double>(bank.prototype(0)[1]) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("phi = 1 keeps the prototype and phi = 0 replaces it") {
    Rng rng(4);
    const std::vector<Real> e = unit_rows(1, 3, rng);
    PrototypeBank keep(1, 2, 3, 1.0);
    keep.init_random(rng);
    const std::vector<Real> before(keep.data().begin(), keep.data().end());
    keep.update(e, 1);
    CHECK(std::vector<Real>(keep.data().begin(), keep.data().end()) == before);
    PrototypeBank replace(1, 2, 3, 0.0);
    replace.init_random(rng);
    replace.update(e, 2);
    for (std::size_t k = 0; k < 3; ++k) CHECK(static_cast<double>(replace.prototype(2)[k]) == doctest::Approx(static_cast<double>(e[k])));
  }
  SUBCASE("opposite vectors at phi = 0.5 are degenerate") {
    PrototypeBank bank(1, 1, 2, 0.5);
    auto mu = bank.mutable_prototype(0);
    mu[0] = 1;
    mu[1] = 0;
    const Real e[] = {-1, 0};
    CHECK_THROWS_AS(bank.update(e, 0), DegenerateVectorError);
  }
  SUBCASE("every prototype stays unit norm") {
    Rng rng(6);
    PrototypeBank bank(3, 4, 5, 0.9);
    bank.init_random(rng);
    CHECK(bank.size() == 24);
    for (int round = 0; round < 200; ++round) {
      const std::vector<Real> e = unit_rows(1, 5, rng);
      bank.update(e, static_cast<int>(uniform_size(rng, 0, 23)));
    }
    for (std::size_t t = 0; t < bank.size(); ++t) {
      double sq = 0.0;
      for (Real x : bank.prototype(static_cast<int>(t))) sq += static_cast<double>(x * x);
      CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("intrinsic vectors: soft mixture and hard selection") {
  const std::size_t dim = 2;
  PrototypeBank bank(1, 1, dim, 0.9);
  auto neg = bank.mutable_prototype(relabel(0, 0, 0, 1));
  auto pos = bank.mutable_prototype(relabel(0, 0, 1, 1));
  neg[0] = 0;
  neg[1] = 1;
  pos[0] = 1;
  pos[1] = 0;

  SUBCASE("equal similarities average the pair") {
    const Tensor z({1, dim}, {Real(0.3), Real(0.3)});
    const Tensor d = intrinsic_soft(z, bank, 0);
    CHECK(static_cast<double>(d[0]) == doctest::Approx(0.5));
    CHECK(static_cast<double>(d[1]) == doctest::Approx(0.5));
    // Tie goes to the negative prototype.
    const Tensor h = intrinsic_hard(z, bank, 0);
    CHECK(h[0] == 0);
    CHECK(h[1] == 1);
  }
  SUBCASE("a gap of ln 2 weights the positive prototype by 2/3") {
    const Tensor z({1, dim}, {std::log(Real(2)), 0});
    const Tensor d = intrinsic_soft(z, bank, 0);
    CHECK(static_cast<double>(d[0]) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(static_cast<double>(d[1]) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("alpha_pos = 0.9 selects the positive prototype") {
    const Tensor z({1, dim}, {std::log(Real(9)), 0});
    const Tensor h = intrinsic_hard(z, bank, 0);
    CHECK(h[0] == 1);
    CHECK(h[1] == 0);
  }
  SUBCASE("soft approaches hard as the gap grows") {
    for (Real sign : {Real(1), Real(-1)}) {
      const Tensor z({1, dim}, {sign * 25, -sign * 25});
      CHECK(carat::testing::max_abs_diff(intrinsic_soft(z, bank, 0).values(), intrinsic_hard(z, bank, 0).values()) <=
            1e-6);
    }
  }
}

TEST_CASE("intrinsic_soft: gradients match finite differences") {
  for (int s = 0; s < 20; ++s) {
    CAPTURE(s);
    Rng rng(600 + s);
    const std::size_t c = uniform_size(rng, 1, 3), dz = uniform_size(rng, 2, 4), batch = uniform_size(rng, 1, 3);
    PrototypeBank bank(3, c, dz, 0.9);
    bank.init_random(rng);
    Tensor z = Tensor({batch * c, dz}, unit_rows(batch * c, dz, rng), true);
    const int m = static_cast<int>(uniform_size(rng, 0, 2));
    check_gradient([&] { return intrinsic_soft(z, bank, m); }, {z}, rng);
  }
}

TEST_CASE("embeddings_tsv: one line per embedding") {
  TaggedEmbeddings e;
  e.dim = 2;
  e.values = {Real(0.5), Real(-0.25), 1, 0};
  e.tags = {relabel(2, 1, 1, 3), relabel(0, 0, 0, 3)};
  e.sample_ids = {7, 8};
  e.stages = {2, 0};
  const std::string tsv = embeddings_tsv(e, 3);
  CHECK(tsv == "sample\tmodality\tlabel\tpolarity\tstage\tz0\tz1\n"
               "7\ta\t1\tpos\tbeta\t0.5\t-0.25\n"
               "8\tt\t0\tneg\to\t1\t0\n");
}
