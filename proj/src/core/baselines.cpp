// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/baselines.hpp"

#include <cmath>

#include "carat/error.hpp"

CARAT_NS_BEGIN

namespace {

/// (batch*C) x (batch*C) matrix averaging each label row over the batch.
Tensor batch_mean_operator(std::size_t batch, std::size_t c) {
  const std::size_t n = batch * c;
  std::vector<Real> a(n * n, Real(0));
  const Real w = Real(1) / static_cast<Real>(batch);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < batch; ++i) a[r * n + i * c + r % c] = w;
  }
  return Tensor({n, n}, std::move(a));
}

}  // namespace

FusionBaseline::FusionBaseline(const RunConfig& cfg, const DatasetHeader& header, std::uint64_t seed)
    : cfg_(cfg), kind_(cfg.fusion) {
  Rng rng(seed);
  extractor_ = LabelExtractor::create(params_, cfg.model, header, rng);
  num_labels_ = extractor_.num_labels;
  d_ = static_cast<std::size_t>(cfg.model.d);
  const double limit = std::sqrt(6.0 / static_cast<double>(d_ + 1));
  switch (kind_) {
    case FusionKind::alignment:
      head_w_ = params_.add("head.w", uniform_tensor({num_labels_, d_}, limit, rng));
      head_b_ = params_.add("head.b", Tensor({num_labels_}, true));
      break;
    case FusionKind::aggregation:
      fuse_ = Linear::create(params_, "fuse", 3 * d_, d_, rng);
      head_w_ = params_.add("head.w", uniform_tensor({num_labels_, d_}, limit, rng));
      head_b_ = params_.add("head.b", Tensor({num_labels_}, true));
      break;
    case FusionKind::reconstruction_simplified:
      nets_ = ReconstructionNets::create(params_, "recon", d_, rng);
      heads_ = ModalityHeads::create(params_, "heads", num_labels_, d_, rng);
      running_.assign(kNumModalities * num_labels_ * d_, Real(0));
      break;
  }
}

FusionBaseline::Output FusionBaseline::run(const Batch& b, bool training) const {
  const ModalityTriple u = extractor_(b);
  Output out;
  switch (kind_) {
    case FusionKind::alignment: {
      const Tensor pooled = scale(add(add(u[0], u[1]), u[2]), Real(1) / Real(3));
      out.logits = label_linear(pooled, head_w_, head_b_);
      out.terms.rec = add(add(mse(u[0], u[1]), mse(u[0], u[2])), mse(u[1], u[2]));
      break;
    }
    case FusionKind::aggregation: {
      out.logits = label_linear(gelu(fuse_(concat_cols({u[0], u[1], u[2]}))), head_w_, head_b_);
      break;
    }
    case FusionKind::reconstruction_simplified: {
      ModalityTriple means;
      if (training) {
        const Tensor avg = batch_mean_operator(b.size, num_labels_);
        for (std::size_t m = 0; m < kNumModalities; ++m) means[m] = matmul(avg, u[m]);
      } else {
        std::vector<std::size_t> tile(b.size * num_labels_);
        for (std::size_t r = 0; r < tile.size(); ++r) tile[r] = r % num_labels_;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
          const auto first = running_.begin() + static_cast<std::ptrdiff_t>(m * num_labels_ * d_);
          const Tensor table({num_labels_, d_}, std::vector<Real>(first, first + static_cast<std::ptrdiff_t>(num_labels_ * d_)));
          means[m] = gather_rows(table, tile);
        }
      }
      const ModalityTriple recon = reconstruct_first_level(nets_, u, means);
      MaxPrediction mp = modality_max_predict(recon, heads_, b.size);
      out.logits = mp.scores;
      out.argmax = std::move(mp.argmax);
      out.terms.rec = reconstruction_loss(u, ModalityTriple{}, recon, b.size, cfg_.loss.rec_squared);
      if (training) {
        // Rows 0..C-1 of each tiled mean already hold the per-label batch means.
        for (std::size_t m = 0; m < kNumModalities; ++m) {
          const auto v = means[m].values();
          out.batch_mean.insert(out.batch_mean.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(num_labels_ * d_));
        }
      }
      break;
    }
  }
  return out;
}

LossTerms FusionBaseline::forward_train(const Batch& b, std::uint64_t) {
  Output out = run(b, true);
  LossTerms t;
  t.lsr = bce_with_logits(out.logits, b.targets);
  t.rec = out.terms.rec;
  pending_mean_ = std::move(out.batch_mean);
  t.total = t.rec.defined() ? add(t.lsr, scale(t.rec, static_cast<Real>(cfg_.loss.gamma_r))) : t.lsr;
  return t;
}

void FusionBaseline::after_step() {
  if (pending_mean_.empty()) return;
  const auto mom = static_cast<Real>(running_seeded_ ? kRunningMomentum : 0.0);
  for (std::size_t k = 0; k < running_.size(); ++k) running_[k] = mom * running_[k] + (Real(1) - mom) * pending_mean_[k];
  running_seeded_ = true;
  pending_mean_.clear();
}

Prediction FusionBaseline::predict(const Batch& b) {
  NoGradGuard no_grad;
  Output out = run(b, false);
  std::vector<Real> probs(out.logits.numel());
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const Real x = out.logits[k];
    probs[k] = x >= 0 ? Real(1) / (Real(1) + std::exp(-x)) : std::exp(x) / (Real(1) + std::exp(x));
  }
  return make_prediction(std::move(probs), b.size, num_labels_, std::move(out.argmax));
}

StateMap FusionBaseline::export_state() const {
  StateMap st;
  if (kind_ == FusionKind::reconstruction_simplified) {
    st["running_mean"] = {{kNumModalities * num_labels_, d_}, running_};
    st["running_mean.seeded"] = {{1}, {running_seeded_ ? Real(1) : Real(0)}};
  }
  return st;
}

void FusionBaseline::import_state(const StateMap& state) {
  if (kind_ != FusionKind::reconstruction_simplified) return;
  const auto it = state.find("running_mean");
  const auto seeded = state.find("running_mean.seeded");
  if (it == state.end() || seeded == state.end() || it->second.values.size() != running_.size()) {
    throw CheckpointError("missing or mis-sized running mean");
  }
  running_ = it->second.values;
  running_seeded_ = seeded->second.values.at(0) != Real(0);
}

std::unique_ptr<Learner> make_fusion_baseline(const RunConfig& cfg, const DatasetHeader& header, std::uint64_t seed) {
  return std::make_unique<FusionBaseline>(cfg, header, seed);
}

CARAT_NS_END
