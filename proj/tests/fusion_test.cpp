// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include <cmath>

#include "carat/error.hpp"
#include "carat/fusion.hpp"
#include "carat/latent.hpp"
#include "test_util.hpp"

using namespace carat;
using carat::testing::check_gradient;
using carat::testing::random_tensor;
using carat::testing::uniform_size;

namespace {

double gelu_ref(double x) {
  const double k = std::sqrt(2.0 / std::acos(-1.0));
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

/// Straight-line evaluation of a two-layer MLP on one row.
std::vector<double> mlp_ref(const Mlp2& f, const std::vector<double>& x) {
  auto layer = [](const Linear& l, const std::vector<double>& in) {
    const std::size_t n_in = l.w.dim(0), n_out = l.w.dim(1);
    std::vector<double> out(n_out, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      double acc = l.b.defined() ? static_cast<double>(l.b[o]) : 0.0;
      for (std::size_t i = 0; i < n_in; ++i) acc += in[i] * static_cast<double>(l.w[i * n_out + o]);
      out[o] = acc;
    }
    return out;
  };
  std::vector<double> h = layer(f.first, x);
  for (auto& v : h) v = gelu_ref(v);
  return layer(f.second, h);
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  const std::size_t d = t.dim(1);
  std::vector<double> out(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = static_cast<double>(t[r * d + k]);
  return out;
}

ModalityTriple random_triple(std::size_t rows, std::size_t d, Rng& rng, bool grad = true) {
  ModalityTriple t;
  for (auto& x : t) x = random_tensor({rows, d}, rng, -1, 1, grad);
  return t;
}

}  // namespace

TEST_CASE("reconstruct_first_level: matches a straight-line evaluation") {
  Rng rng(1);
  ParameterSet ps;
  const std::size_t rows = 6, d = 4;
  const ReconstructionNets nets = ReconstructionNets::create(ps, "recon", d, rng);
  const ModalityTriple ut = random_triple(rows, d, rng, false), dt = random_triple(rows, d, rng, false);
  const ModalityTriple ua = reconstruct_first_level(nets, ut, dt);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(ua[m].shape() == Shape{rows, d});
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> in;
      for (std::size_t slot = 0; slot < 3; ++slot) {
        const auto part = row_of(slot == m ? dt[slot] : ut[slot], r);
        in.insert(in.end(), part.begin(), part.end());
      }
      const std::vector<double> expect = mlp_ref(nets.f[m], in);
      const std::vector<double> got = row_of(ua[m], r);
      for (std::size_t k = 0; k < d; ++k) CHECK(got[k] == doctest::Approx(expect[k]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(reconstruct_first_level(nets, ut, random_triple(rows, d + 1, rng)), InputError);
}

TEST_CASE("reconstruct_first_level: a zeroed final layer emits its bias") {
  Rng rng(2);
  ParameterSet ps;
  const std::size_t rows = 4, d = 3;
  ReconstructionNets nets = ReconstructionNets::create(ps, "recon", d, rng);
  for (auto& f : nets.f) {
    for (auto& w : f.second.w.mutable_values()) w = 0;
    for (std::size_t k = 0; k < d; ++k) f.second.b.mutable_values()[k] = static_cast<Real>(k) + Real(0.5);
  }
  const ModalityTriple ua = reconstruct_first_level(nets, random_triple(rows, d, rng), random_triple(rows, d, rng));
  for (const auto& u : ua) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < d; ++k) CHECK(u[r * d + k] == static_cast<Real>(k) + Real(0.5));
    }
  }
}

TEST_CASE("reconstruct_second_level: shared input, per-target networks") {
  Rng rng(3);
  ParameterSet ps;
  const std::size_t rows = 3, d = 4;
  ReconstructionNets nets = ReconstructionNets::create(ps, "recon", d, rng);
  const Tensor same = random_tensor({rows, d}, rng, -1, 1, false);
  const ModalityTriple ua{same, same, same};
  ModalityTriple ub = reconstruct_second_level(nets, ua);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(ub[m].shape() == Shape{rows, d});
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> in;
      for (int slot = 0; slot < 3; ++slot) {
        const auto part = row_of(same, r);
        in.insert(in.end(), part.begin(), part.end());
      }
      const std::vector<double> expect = mlp_ref(nets.f[m], in);
      for (std::size_t k = 0; k < d; ++k) CHECK(static_cast<double>(ub[m][r * d + k]) == doctest::Approx(expect[k]).epsilon(1e-12));
    }
  }
  // With identical networks the three outputs coincide.
  for (std::size_t m = 1; m < 3; ++m) {
    for (auto [dst, src] : {std::pair{&nets.f[m].first, &nets.f[0].first}, std::pair{&nets.f[m].second, &nets.f[0].second}}) {
      std::copy(src->w.values().begin(), src->w.values().end(), dst->w.mutable_values().begin());
      std::copy(src->b.values().begin(), src->b.values().end(), dst->b.mutable_values().begin());
    }
  }
  ub = reconstruct_second_level(nets, ua);
  CHECK(carat::testing::max_abs_diff(ub[0].values(), ub[1].values()) == 0.0);
  CHECK(carat::testing::max_abs_diff(ub[0].values(), ub[2].values()) == 0.0);
}

TEST_CASE("reconstruction_loss: worked values") {
  const std::size_t d = 2;
  auto zeros = [&] { return Tensor({2, d}); };
  const ModalityTriple uo{zeros(), zeros(), zeros()};
  CHECK(reconstruction_loss(uo, uo, uo, 1).item() == 0);

  ModalityTriple ut = uo;
  ut[1] = Tensor({2, d}, {3, 4, 0, 0});
  CHECK(static_cast<double>(reconstruction_loss(uo, ut, uo, 1).item()) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(static_cast<double>(reconstruction_loss(uo, ut, uo, 1, true).item()) == doctest::Approx(25.0).epsilon(1e-12));

  Rng rng(4);
  const ModalityTriple a = random_triple(4, 3, rng, false), b = random_triple(4, 3, rng, false),
                       c = random_triple(4, 3, rng, false);
  const double base = static_cast<double>(reconstruction_loss(a, b, c, 2).item());
  ModalityTriple b2, c2;
  for (std::size_t m = 0; m < 3; ++m) {
    b2[m] = add(a[m], scale(sub(b[m], a[m]), Real(2.5)));
    c2[m] = add(a[m], scale(sub(c[m], a[m]), Real(2.5)));
  }
  CHECK(static_cast<double>(reconstruction_loss(a, b2, c2, 2).item()) == doctest::Approx(2.5 * base).epsilon(1e-12));
  CHECK(base > 0);

  // Without the decoded term only the first-level term remains.
  const double only_alpha = static_cast<double>(reconstruction_loss(a, ModalityTriple{}, c, 2).item());
  double manual = 0.0;
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t i = 0; i < 2; ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < 6; ++k) {
        const double diff = static_cast<double>(a[m][i * 6 + k] - c[m][i * 6 + k]);
        sq += diff * diff;
      }
      manual += std::sqrt(sq) / 2.0;
    }
  }
  CHECK(only_alpha == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("reconstruction_loss: gradients away from exact reconstruction") {
  for (int s = 0; s < 20; ++s) {
    CAPTURE(s);
    Rng rng(700 + s);
    const std::size_t batch = uniform_size(rng, 1, 3), c = uniform_size(rng, 1, 3), d = uniform_size(rng, 1, 4);
    ModalityTriple a = random_triple(batch * c, d, rng), b = random_triple(batch * c, d, rng),
                   e = random_triple(batch * c, d, rng);
    std::vector<Tensor> params(a.begin(), a.end());
    params.insert(params.end(), b.begin(), b.end());
    params.insert(params.end(), e.begin(), e.end());
    check_gradient([&] { return reconstruction_loss(a, b, e, batch); }, params, rng);
  }
}

TEST_CASE("modality_max_predict: worked values") {
  // Heads with unit weights on a one-dimensional representation: logit = u.
  ModalityHeads heads;
  for (std::size_t m = 0; m < 3; ++m) {
    heads.w[m] = Tensor({2, 1}, {1, 1});
    heads.b[m] = Tensor({2}, {0, 0});
  }
  const ModalityTriple u{Tensor({2, 1}, {1, -2}), Tensor({2, 1}, {0, 3}), Tensor({2, 1}, {-1, 0})};
  const MaxPrediction p = modality_max_predict(u, heads, 1);
  CHECK(p.scores[0] == 1);
  CHECK(p.scores[1] == 3);
  CHECK(p.argmax == std::vector<int>{0, 1});

  const ModalityTriple same{Tensor({2, 1}, {5, 5}), Tensor({2, 1}, {5, 5}), Tensor({2, 1}, {5, 5})};
  CHECK(modality_max_predict(same, heads, 1).argmax == std::vector<int>{0, 0});
}

TEST_CASE("modality_max_predict: argmax agrees with recomputed logits and is monotone") {
  Rng rng(5);
  for (int s = 0; s < 200; ++s) {
    ParameterSet ps;
    const std::size_t c = uniform_size(rng, 1, 4), d = uniform_size(rng, 1, 4), batch = uniform_size(rng, 1, 3);
    const ModalityHeads heads = ModalityHeads::create(ps, "heads", c, d, rng);
    for (auto& b : heads.b) {
      for (auto& x : const_cast<Tensor&>(b).mutable_values()) x = static_cast<Real>(std::uniform_real_distribution<double>(-1, 1)(rng));
    }
    const ModalityTriple u = random_triple(batch * c, d, rng, false);
    const MaxPrediction p = modality_max_predict(u, heads, batch);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        double best = -1e300;
        int arg = -1;
        for (std::size_t m = 0; m < 3; ++m) {
          double logit = static_cast<double>(heads.b[m][j]);
          for (std::size_t k = 0; k < d; ++k) {
            logit += static_cast<double>(heads.w[m][j * d + k] * u[m][(i * c + j) * d + k]);
          }
          if (logit > best) {
            best = logit;
            arg = static_cast<int>(m);
          }
        }
        REQUIRE(p.argmax[i * c + j] == arg);
        CHECK(static_cast<double>(p.scores[i * c + j]) == doctest::Approx(best).epsilon(1e-12));
      }
    }
    // Raising one modality's bias never lowers any score.
    const std::size_t m = uniform_size(rng, 0, 2), j = uniform_size(rng, 0, c - 1);
    const_cast<Tensor&>(heads.b[m]).mutable_values()[j] += Real(0.7);
    const MaxPrediction q = modality_max_predict(u, heads, batch);
    for (std::size_t k = 0; k < batch * c; ++k) CHECK(q.scores[k] >= p.scores[k]);
  }
}

TEST_CASE("label_linear: gradients") {
  for (int s = 0; s < 20; ++s) {
    CAPTURE(s);
    Rng rng(800 + s);
    const std::size_t c = uniform_size(rng, 1, 4), d = uniform_size(rng, 1, 4), batch = uniform_size(rng, 1, 3);
    Tensor u = random_tensor({batch * c, d}, rng), w = random_tensor({c, d}, rng), b = random_tensor({c}, rng);
    check_gradient([&] { return label_linear(u, w, b); }, {u, w, b}, rng);
  }
}

TEST_CASE("lsr_loss: weights") {
  const Tensor s({1, 2}, {Real(0.3), Real(-0.4)});
  const Real y[] = {1, 0};
  const double l = static_cast<double>(bce_with_logits(s, y).item());
  CHECK(static_cast<double>(lsr_loss(s, s, s, y, 0.01, 0.1, 1.0).item()) == doctest::Approx(1.11 * l).epsilon(1e-12));

  const Tensor sat({1, 2}, {40, -40});
  CHECK(static_cast<double>(lsr_loss(sat, sat, sat, y, 0.01, 0.1, 1.0).item()) <= 1e-8);

  Tensor so({1, 2}, {Real(0.1), Real(0.2)}, true), sa({1, 2}, {Real(0.3), Real(0.4)}, true),
      sb({1, 2}, {Real(0.5), Real(0.6)}, true);
  lsr_loss(so, sa, sb, y, 0.01, 0.1, 0.0).backward();
  for (Real g : sb.grad()) CHECK(g == 0);
  for (Real g : sa.grad()) CHECK(g != 0);
  for (Real g : so.grad()) CHECK(g != 0);
}

TEST_CASE("stage pipeline: encode, intrinsic, decode and both levels pass a gradient check") {
  // Tiny configuration: C = 3, d = 8, d_z = 4.
  for (int s = 0; s < 3; ++s) {
    CAPTURE(s);
    Rng rng(900 + s);
    const std::size_t c = 3, d = 8, dz = 4, batch = 2;
    ParameterSet ps;
    std::array<Mlp2, 3> enc, dec;
    for (std::size_t m = 0; m < 3; ++m) {
      enc[m] = Mlp2::create(ps, "enc" + std::to_string(m), d, d, dz, rng);
      dec[m] = Mlp2::create(ps, "dec" + std::to_string(m), dz, d, d, rng);
    }
    const ReconstructionNets nets = ReconstructionNets::create(ps, "recon", d, rng);
    PrototypeBank bank(3, c, dz, 0.9);
    bank.init_random(rng);
    ModalityTriple u = random_triple(batch * c, d, rng);
    auto f = [&] {
      ModalityTriple ut, dt;
      for (std::size_t m = 0; m < 3; ++m) {
        const Tensor z = encode_latent(enc[m], u[m]);
        ut[m] = decode_latent(dec[m], z);
        dt[m] = decode_latent(dec[m], intrinsic_soft(z, bank, static_cast<int>(m)));
      }
      const ModalityTriple ub = reconstruct_second_level(nets, reconstruct_first_level(nets, ut, dt));
      return concat_rows({ub[0], ub[1], ub[2]});
    };
    std::vector<Tensor> params = ps.tensors();
    params.insert(params.end(), u.begin(), u.end());
    check_gradient(f, params, rng, 1e-4);
  }
}
