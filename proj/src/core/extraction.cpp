// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "carat/error.hpp"

CARAT_NS_BEGIN

std::vector<Real> sinusoidal_positions(std::size_t seq_len, std::size_t width) {
  std::vector<Real> pe(seq_len * width);
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * freq;
      pe[pos * width + i] = static_cast<Real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

SequenceEncoder::SequenceEncoder(ParameterSet& ps, const std::string& name, const ModalityConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  const std::size_t d = cfg.hidden;
  input_ = Linear::create(ps, name + ".input", cfg.raw_dim, d, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    EncoderLayer layer;
    layer.query = Linear::create(ps, p + ".attn.q", d, d, rng);
    // A key bias only shifts each query's scores uniformly, so it is omitted.
    layer.key = Linear::create(ps, p + ".attn.k", d, d, rng, false);
    layer.value = Linear::create(ps, p + ".attn.v", d, d, rng);
    layer.out = Linear::create(ps, p + ".attn.o", d, d, rng);
    layer.attn_norm = LayerNorm::create(ps, p + ".attn_norm", d);
    layer.ffn_in = Linear::create(ps, p + ".ffn.0", d, cfg.ffn_dim, rng);
    layer.ffn_out = Linear::create(ps, p + ".ffn.1", cfg.ffn_dim, d, rng);
    layer.ffn_norm = LayerNorm::create(ps, p + ".ffn_norm", d);
    layers_.push_back(std::move(layer));
  }
  positions_ = sinusoidal_positions(cfg.seq_len, d);
}

Tensor SequenceEncoder::operator()(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t batch) const {
  const std::size_t n = cfg_.seq_len;
  if (x.rank() != 2 || x.dim(0) != batch * n || x.dim(1) != cfg_.raw_dim) {
    throw InputError("encode_sequence: expected " + std::to_string(batch * n) + " x " + std::to_string(cfg_.raw_dim) +
                     " input, got " + shape_str(x.shape()));
  }
  if (mask.size() != batch * n) throw InputError("encode_sequence: mask size mismatch");
  for (std::size_t b = 0; b < batch; ++b) {
    if (std::none_of(mask.begin() + b * n, mask.begin() + (b + 1) * n, [](std::uint8_t v) { return v != 0; })) {
      throw InputError("encode_sequence: all-false mask for sequence " + std::to_string(b));
    }
  }
  std::vector<Real> pe(batch * positions_.size());
  for (std::size_t b = 0; b < batch; ++b) std::copy(positions_.begin(), positions_.end(), pe.begin() + b * positions_.size());

  Tensor h = add_const(input_(x), pe);
  for (const auto& layer : layers_) {
    const Tensor attn = multi_head_attention(layer.query(h), layer.key(h), layer.value(h), mask, batch, n, cfg_.heads);
    h = layer.attn_norm(add(h, layer.out(attn)));
    h = layer.ffn_norm(add(h, layer.ffn_out(gelu(layer.ffn_in(h)))));
  }
  return h;
}

Tensor label_attention(const Tensor& h, const Tensor& queries, std::span<const std::uint8_t> mask, std::size_t batch,
                       std::size_t seq, std::vector<Real>* weights) {
  if (h.rank() != 2 || queries.rank() != 2 || h.dim(1) != queries.dim(1) || h.dim(0) != batch * seq) {
    throw InputError("label_attention: shape mismatch " + shape_str(h.shape()) + " vs " + shape_str(queries.shape()));
  }
  if (mask.size() != batch * seq) throw InputError("label_attention: mask size mismatch");
  const std::size_t d = h.dim(1), c = queries.dim(0);
  auto alpha = std::make_shared<std::vector<Real>>(batch * c * seq, Real(0));
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  std::vector<Real> out(batch * c * d, Real(0));
  const Real* hv = h.values().data();
  const Real* qv = queries.values().data();
  for (std::size_t b = 0; b < batch; ++b) {
    if (std::none_of(msk.begin() + b * seq, msk.begin() + (b + 1) * seq, [](std::uint8_t v) { return v != 0; })) {
      throw InputError("label_attention: all-false mask for sequence " + std::to_string(b));
    }
    for (std::size_t j = 0; j < c; ++j) {
      Real* a = alpha->data() + (b * c + j) * seq;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t i = 0; i < seq; ++i) {
        if (!msk[b * seq + i]) continue;
        Real s = 0;
        for (std::size_t k = 0; k < d; ++k) s += qv[j * d + k] * hv[(b * seq + i) * d + k];
        if (!std::isfinite(s)) throw NumericError("label_attention: non-finite score");
        a[i] = s;
        mx = std::max(mx, s);
      }
      Real total = 0;
      for (std::size_t i = 0; i < seq; ++i) {
        if (!msk[b * seq + i]) continue;
        a[i] = std::exp(a[i] - mx);
        total += a[i];
      }
      Real* u = out.data() + (b * c + j) * d;
      for (std::size_t i = 0; i < seq; ++i) {
        if (!msk[b * seq + i]) continue;
        a[i] /= total;
        for (std::size_t k = 0; k < d; ++k) u[k] += a[i] * hv[(b * seq + i) * d + k];
      }
    }
  }
  if (weights) *weights = *alpha;
  return make_result({batch * c, d}, std::move(out), {h, queries},
                     [batch, seq, c, d, alpha, msk = std::move(msk)](detail::Node& self) {
    const auto& hn = *self.parents[0];
    const auto& qn = *self.parents[1];
    Real* gh = hn.requires_grad ? self.parents[0]->ensure_grad().data() : nullptr;
    Real* gq = qn.requires_grad ? self.parents[1]->ensure_grad().data() : nullptr;
    const Real* hv = hn.value.data();
    const Real* qv = qn.value.data();
    std::vector<Real> da(seq);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < c; ++j) {
        const Real* a = alpha->data() + (b * c + j) * seq;
        const Real* gu = self.grad.data() + (b * c + j) * d;
        Real weighted = 0;
        for (std::size_t i = 0; i < seq; ++i) {
          da[i] = 0;
          if (!msk[b * seq + i]) continue;
          for (std::size_t k = 0; k < d; ++k) da[i] += gu[k] * hv[(b * seq + i) * d + k];
          weighted += a[i] * da[i];
        }
        for (std::size_t i = 0; i < seq; ++i) {
          if (!msk[b * seq + i]) continue;
          const Real ds = a[i] * (da[i] - weighted);
          const Real* hi = hv + (b * seq + i) * d;
          if (gq) {
            for (std::size_t k = 0; k < d; ++k) gq[j * d + k] += ds * hi[k];
          }
          if (gh) {
            Real* ghi = gh + (b * seq + i) * d;
            for (std::size_t k = 0; k < d; ++k) ghi[k] += a[i] * gu[k] + ds * qv[j * d + k];
          }
        }
      }
    }
  });
}

CARAT_NS_END
