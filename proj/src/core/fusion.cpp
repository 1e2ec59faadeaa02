// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/fusion.hpp"

#include <cmath>

#include "carat/error.hpp"

CARAT_NS_BEGIN

namespace {

void check_triple(const ModalityTriple& t, const Shape& shape, const char* what) {
  for (const auto& x : t) {
    if (!x.defined() || x.shape() != shape) {
      throw InputError(std::string(what) + ": modality inputs must all have shape " + shape_str(shape));
    }
  }
}

}  // namespace

ReconstructionNets ReconstructionNets::create(ParameterSet& ps, const std::string& name, std::size_t d, Rng& rng) {
  ReconstructionNets n;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    n.f[m] = Mlp2::create(ps, name + ".to_" + std::string(modality_key(m)), 3 * d, d, d, rng);
  }
  return n;
}

ModalityTriple reconstruct_first_level(const ReconstructionNets& nets, const ModalityTriple& u_tilde,
                                       const ModalityTriple& d_tilde) {
  check_triple(u_tilde, u_tilde[0].shape(), "reconstruct_first_level");
  check_triple(d_tilde, u_tilde[0].shape(), "reconstruct_first_level");
  ModalityTriple out;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    std::vector<Tensor> parts(u_tilde.begin(), u_tilde.end());
    parts[m] = d_tilde[m];
    out[m] = nets.f[m](concat_cols(parts));
  }
  return out;
}

ModalityTriple reconstruct_second_level(const ReconstructionNets& nets, const ModalityTriple& u_alpha) {
  check_triple(u_alpha, u_alpha[0].shape(), "reconstruct_second_level");
  const Tensor joined = concat_cols({u_alpha[0], u_alpha[1], u_alpha[2]});
  ModalityTriple out;
  for (std::size_t m = 0; m < kNumModalities; ++m) out[m] = nets.f[m](joined);
  return out;
}

Tensor reconstruction_loss(const ModalityTriple& u_o, const ModalityTriple& u_tilde, const ModalityTriple& u_alpha,
                           std::size_t batch, bool squared) {
  check_triple(u_o, u_o[0].shape(), "reconstruction_loss");
  check_triple(u_alpha, u_o[0].shape(), "reconstruction_loss");
  Tensor total;
  auto accumulate = [&](const Tensor& a, const Tensor& b) {
    const Tensor term = mean(group_frobenius(sub(a, b), batch, squared));
    total = total.defined() ? add(total, term) : term;
  };
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (u_tilde[m].defined()) {
      if (u_tilde[m].shape() != u_o[m].shape()) throw InputError("reconstruction_loss: shape mismatch");
      accumulate(u_o[m], u_tilde[m]);
    }
    accumulate(u_o[m], u_alpha[m]);
  }
  return total;
}

Tensor label_linear(const Tensor& u, const Tensor& w, const Tensor& bias) {
  if (u.rank() != 2 || w.rank() != 2 || u.dim(1) != w.dim(1) || u.dim(0) % w.dim(0) != 0 ||
      bias.numel() != w.dim(0)) {
    throw InputError("label_linear: incompatible shapes " + shape_str(u.shape()) + ", " + shape_str(w.shape()));
  }
  const std::size_t c = w.dim(0), d = w.dim(1), batch = u.dim(0) / c;
  std::vector<Real> out(batch * c);
  for (std::size_t r = 0; r < batch * c; ++r) {
    const std::size_t j = r % c;
    Real acc = bias[j];
    for (std::size_t k = 0; k < d; ++k) acc += u[r * d + k] * w[j * d + k];
    out[r] = acc;
  }
  return make_result({batch, c}, std::move(out), {u, w, bias}, [batch, c, d](detail::Node& self) {
    const auto& g = self.grad;
    auto& pu = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    if (pu.requires_grad) {
      auto& gu = pu.ensure_grad();
      for (std::size_t r = 0; r < batch * c; ++r) {
        const std::size_t j = r % c;
        for (std::size_t k = 0; k < d; ++k) gu[r * d + k] += g[r] * pw.value[j * d + k];
      }
    }
    if (pw.requires_grad) {
      auto& gw = pw.ensure_grad();
      for (std::size_t r = 0; r < batch * c; ++r) {
        const std::size_t j = r % c;
        for (std::size_t k = 0; k < d; ++k) gw[j * d + k] += g[r] * pu.value[r * d + k];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t r = 0; r < batch * c; ++r) gb[r % c] += g[r];
    }
  });
}

ModalityHeads ModalityHeads::create(ParameterSet& ps, const std::string& name, std::size_t num_labels, std::size_t d,
                                    Rng& rng) {
  ModalityHeads h;
  const double limit = std::sqrt(6.0 / static_cast<double>(d + 1));
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const std::string base = name + "." + std::string(modality_key(m));
    h.w[m] = ps.add(base + ".w", uniform_tensor({num_labels, d}, limit, rng));
    h.b[m] = ps.add(base + ".b", Tensor({num_labels}, true));
  }
  return h;
}

Tensor ModalityHeads::logits(std::size_t m, const Tensor& u) const { return label_linear(u, w[m], b[m]); }

MaxPrediction modality_max_predict(const ModalityTriple& u, const ModalityHeads& heads, std::size_t batch) {
  const std::size_t c = heads.w[0].dim(0);
  std::vector<Tensor> logits;
  for (std::size_t m = 0; m < kNumModalities; ++m) logits.push_back(heads.logits(m, u[m]));
  MaxPoolResult pooled = maxpool_stack(reshape(concat_rows(logits), {kNumModalities, batch * c}));
  return {reshape(pooled.values, {batch, c}), std::move(pooled.argmax)};
}

Tensor lsr_loss(const Tensor& s_o, const Tensor& s_alpha, const Tensor& s_beta, std::span<const Real> targets,
                double gamma_o, double gamma_alpha, double gamma_beta) {
  const Tensor lo = scale(bce_with_logits(s_o, targets), static_cast<Real>(gamma_o));
  const Tensor la = scale(bce_with_logits(s_alpha, targets), static_cast<Real>(gamma_alpha));
  const Tensor lb = scale(bce_with_logits(s_beta, targets), static_cast<Real>(gamma_beta));
  return add(add(lo, la), lb);
}

CARAT_NS_END
