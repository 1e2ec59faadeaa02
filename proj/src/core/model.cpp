// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/model.hpp"

#include <cmath>

#include "carat/baselines.hpp"
#include "carat/error.hpp"

CARAT_NS_BEGIN

void Prediction::append(const Prediction& other) {
  if (rows == 0) labels = other.labels;
  if (other.labels != labels) throw InputError("Prediction::append: label counts differ");
  rows += other.rows;
  probs.insert(probs.end(), other.probs.begin(), other.probs.end());
  decisions.insert(decisions.end(), other.decisions.begin(), other.decisions.end());
  argmax.insert(argmax.end(), other.argmax.begin(), other.argmax.end());
}

Prediction make_prediction(std::vector<Real> probs, std::size_t rows, std::size_t labels, std::vector<int> argmax) {
  Prediction p;
  p.rows = rows;
  p.labels = labels;
  p.decisions.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) p.decisions[i] = probs[i] >= Real(0.5) ? 1 : 0;
  p.probs = std::move(probs);
  p.argmax = std::move(argmax);
  return p;
}

namespace {

Real sigmoid_value(Real x) {
  return x >= 0 ? Real(1) / (Real(1) + std::exp(-x)) : std::exp(x) / (Real(1) + std::exp(x));
}

/// Mean over modalities of sigma(h_c(q^m)) for (B*M) x C logits.
std::vector<Real> mean_agg_probs(std::span<const Real> agg_logits, std::size_t batch, std::size_t c) {
  std::vector<Real> out(batch * c, Real(0));
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] += sigmoid_value(agg_logits[(i * kNumModalities + m) * c + j]);
    }
  }
  for (auto& x : out) x /= static_cast<Real>(kNumModalities);
  return out;
}

std::vector<Real> sigmoid_all(std::span<const Real> x) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid_value(x[i]);
  return out;
}

Tensor weighted_sum(const LossTerms& t, const LossWeights& w) {
  Tensor total;
  auto add_term = [&](const Tensor& x, double weight) {
    if (!x.defined()) return;
    const Tensor term = weight == 1.0 ? x : scale(x, static_cast<Real>(weight));
    total = total.defined() ? add(total, term) : term;
  };
  add_term(t.agg, 1.0);
  add_term(t.lsr, 1.0);
  add_term(t.scl, w.gamma_s);
  add_term(t.rec, w.gamma_r);
  return total;
}

}  // namespace

std::vector<Real> combine_predictions(std::span<const Real> agg_logits, std::span<const Real> pooled_logits,
                                      std::size_t batch, std::size_t num_labels) {
  std::vector<Real> out = mean_agg_probs(agg_logits, batch, num_labels);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = Real(0.5) * (out[k] + sigmoid_value(pooled_logits[k]));
  return out;
}

void validate_model_shape(const ModelConfig& cfg, const DatasetHeader& header) {
  if (cfg.d <= 0) throw ConfigError("model.d", "must be positive");
  if (cfg.d_z <= 0) throw ConfigError("model.d_z", "must be positive");
  if (cfg.heads <= 0 || cfg.d % cfg.heads != 0) throw ConfigError("model.heads", "must divide model.d");
  if (cfg.ffn_mult <= 0) throw ConfigError("model.ffn_mult", "must be positive");
  if (header.num_labels <= 0) throw InputError("dataset has no labels");
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (header.seq_len[m] <= 0 || header.dims[m] <= 0) throw InputError("dataset has an empty modality");
  }
}

LabelExtractor LabelExtractor::create(ParameterSet& ps, const ModelConfig& cfg, const DatasetHeader& header,
                                      Rng& rng) {
  validate_model_shape(cfg, header);
  LabelExtractor e;
  e.num_labels = static_cast<std::size_t>(header.num_labels);
  const auto d = static_cast<std::size_t>(cfg.d);
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    ModalityConfig mc;
    mc.raw_dim = static_cast<std::size_t>(header.dims[m]);
    mc.seq_len = static_cast<std::size_t>(header.seq_len[m]);
    mc.layers = static_cast<std::size_t>(cfg.layers[m]);
    mc.heads = static_cast<std::size_t>(cfg.heads);
    mc.ffn_dim = d * static_cast<std::size_t>(cfg.ffn_mult);
    mc.hidden = d;
    const std::string key(modality_key(m));
    e.encoders[m] = SequenceEncoder(ps, "extract." + key, mc, rng);
    e.queries[m] = ps.add("extract." + key + ".label_queries",
                          uniform_tensor({e.num_labels, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  }
  return e;
}

ModalityTriple LabelExtractor::operator()(const Batch& b) const {
  if (b.num_labels != num_labels) throw InputError("batch label count does not match the model");
  ModalityTriple u;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const Tensor h = encoders[m](b.x[m], b.mask[m], b.size);
    u[m] = label_attention(h, queries[m], b.mask[m], b.size, b.seq_len[m]);
  }
  return u;
}

CaratModel::CaratModel(const RunConfig& cfg, const DatasetHeader& header, std::uint64_t seed) : cfg_(cfg) {
  cfg_.ablation.validate();
  Rng rng(seed);
  extractor_ = LabelExtractor::create(params_, cfg.model, header, rng);
  num_labels_ = extractor_.num_labels;
  const auto d = static_cast<std::size_t>(cfg.model.d);
  const auto dz = static_cast<std::size_t>(cfg.model.d_z);
  if (cfg_.ablation.contrastive_active()) {
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const std::string key(modality_key(m));
      encoders_[m] = Mlp2::create(params_, "latent.enc." + key, d, d, dz, rng);
      decoders_[m] = Mlp2::create(params_, "latent.dec." + key, dz, d, d, rng);
    }
  }
  if (!cfg_.ablation.extraction_only()) nets_ = ReconstructionNets::create(params_, "recon", d, rng);
  heads_ = ModalityHeads::create(params_, "heads", num_labels_, d, rng);
  agg_ = AggregationClassifier::create(params_, "agg", num_labels_, d,
                                       static_cast<std::size_t>(cfg.model.agg_hidden_layers), rng);
  bank_ = PrototypeBank(kNumModalities, num_labels_, dz, cfg.contrastive.phi);
  bank_.init_random(rng);
  queue_ = EmbeddingQueue(static_cast<std::size_t>(cfg.contrastive.queue_capacity), dz);
}

struct CaratModel::Stages {
  ModalityTriple u_o, u_tilde, u_alpha, u_beta;
  std::array<ModalityTriple, kNumStages> z;
  bool latent = false;
};

CaratModel::Stages CaratModel::run_stages(const Batch& b, bool training) const {
  const auto& ab = cfg_.ablation;
  Stages s;
  s.u_o = extractor_(b);
  s.latent = ab.contrastive_active();
  if (s.latent) {
    ModalityTriple d_tilde;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const int mi = static_cast<int>(m);
      s.z[0][m] = encode_latent(encoders_[m], s.u_o[m]);
      s.u_tilde[m] = decode_latent(decoders_[m], s.z[0][m]);
      if (!ab.disable_alpha_recon) {
        const Tensor intrinsic =
            training ? intrinsic_soft(s.z[0][m], bank_, mi) : intrinsic_hard(s.z[0][m], bank_, mi);
        d_tilde[m] = decode_latent(decoders_[m], intrinsic);
      }
    }
    s.u_alpha = ab.disable_alpha_recon ? s.u_tilde : reconstruct_first_level(nets_, s.u_tilde, d_tilde);
  } else {
    // Without En/De the first level maps the raw (t; v; a) triplet.
    s.u_alpha = ab.disable_alpha_recon ? s.u_o : reconstruct_second_level(nets_, s.u_o);
  }
  s.u_beta = ab.disable_beta_recon ? s.u_alpha : reconstruct_second_level(nets_, s.u_alpha);
  if (s.latent) {
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      s.z[1][m] = encode_latent(encoders_[m], s.u_alpha[m]);
      s.z[2][m] = encode_latent(encoders_[m], s.u_beta[m]);
    }
  }
  return s;
}

TaggedEmbeddings CaratModel::collect_embeddings(const Batch& b, const std::array<ModalityTriple, kNumStages>& z,
                                                Tensor* anchors) const {
  const std::size_t bsz = b.size, c = num_labels_, nm = kNumModalities, ns = kNumStages;
  const int nl = static_cast<int>(c);
  std::vector<Tensor> blocks;
  for (std::size_t st = 0; st < ns; ++st) {
    for (std::size_t m = 0; m < nm; ++m) blocks.push_back(z[st][m]);
  }
  // Rows in (sample, modality, stage, label) order.
  std::vector<std::size_t> index;
  TaggedEmbeddings e;
  e.dim = z[0][0].dim(1);
  index.reserve(bsz * nm * ns * c);
  for (std::size_t i = 0; i < bsz; ++i) {
    for (std::size_t m = 0; m < nm; ++m) {
      for (std::size_t st = 0; st < ns; ++st) {
        for (std::size_t j = 0; j < c; ++j) {
          index.push_back((st * nm + m) * bsz * c + i * c + j);
          e.tags.push_back(relabel(static_cast<int>(m), static_cast<int>(j), b.labels[i * c + j], nl));
          e.sample_ids.push_back(b.ids[i]);
          e.stages.push_back(static_cast<std::uint8_t>(st));
        }
      }
    }
  }
  const Tensor ordered = gather_rows(concat_rows(blocks), index);
  e.values.assign(ordered.values().begin(), ordered.values().end());
  if (anchors) *anchors = ordered;
  return e;
}

LossTerms CaratModel::forward_train(const Batch& b, std::uint64_t step_seed) {
  const auto& ab = cfg_.ablation;
  const auto& w = cfg_.loss;
  pending_valid_ = false;
  LossTerms t;
  if (ab.extraction_only()) {
    const ModalityTriple u_o = extractor_(b);
    if (ab.use_mrm_only || ab.use_mrm_agg_only) {
      t.lsr = bce_with_logits(modality_max_predict(u_o, heads_, b.size).scores, b.targets);
    }
    if (ab.use_agg_only || ab.use_mrm_agg_only) {
      const Aggregated q = aggregate(stack_features(u_o, b.size), b.labels);
      t.agg = bce_with_logits(agg_(q.q), q.targets);
    }
    t.total = weighted_sum(t, w);
    return t;
  }

  const Stages s = run_stages(b, true);
  const Tensor s_o = modality_max_predict(s.u_o, heads_, b.size).scores;
  const Tensor s_alpha = modality_max_predict(s.u_alpha, heads_, b.size).scores;
  const Tensor s_beta = modality_max_predict(s.u_beta, heads_, b.size).scores;
  t.lsr = lsr_loss(s_o, s_alpha, s_beta, b.targets, w.gamma_o, w.gamma_alpha, w.gamma_beta);

  if (!ab.disable_rec_loss) {
    t.rec = reconstruction_loss(s.u_o, s.latent ? s.u_tilde : ModalityTriple{}, s.u_alpha, b.size, w.rec_squared);
  }

  if (s.latent) {
    Tensor anchors;
    pending_ = collect_embeddings(b, s.z, &anchors);
    pending_valid_ = true;
    if (!ab.disable_scl) {
      t.scl = scl_loss(anchors, pending_.tags, queue_.values(), queue_.tags(),
                       static_cast<Real>(cfg_.contrastive.tau));
    }
  }

  Rng rng(step_seed);
  const StackedFeatures v = stack_features(s.u_beta, b.size);
  StackedFeatures shuffled = v;
  if (!ab.disable_sws) shuffled = sample_wise_shuffle(shuffled, rng, ab.whole_block_shuffle);
  if (!ab.disable_mws) shuffled = modality_wise_shuffle(shuffled, rng, ab.whole_block_shuffle);
  t.agg = agg_loss(agg_, aggregate(v, b.labels), aggregate(shuffled, b.labels), w.gamma_sf);

  t.total = weighted_sum(t, w);
  return t;
}

void CaratModel::after_step() {
  if (!pending_valid_) return;
  bank_.update_all(pending_.values, pending_.tags);
  if (!cfg_.ablation.disable_scl) queue_.push_all(pending_.values, pending_.tags);
  pending_valid_ = false;
}

Prediction CaratModel::predict(const Batch& b) { return predict(b, nullptr); }

Prediction CaratModel::predict(const Batch& b, TaggedEmbeddings* embeddings) {
  NoGradGuard no_grad;
  const auto& ab = cfg_.ablation;
  const std::size_t c = num_labels_;
  if (ab.extraction_only()) {
    const ModalityTriple u_o = extractor_(b);
    const MaxPrediction mp = modality_max_predict(u_o, heads_, b.size);
    const Tensor agg_logits = agg_(aggregate(stack_features(u_o, b.size), b.labels).q);
    std::vector<Real> probs;
    if (ab.use_mrm_only) {
      probs = sigmoid_all(mp.scores.values());
    } else if (ab.use_agg_only) {
      probs = mean_agg_probs(agg_logits.values(), b.size, c);
    } else {
      probs = combine_predictions(agg_logits.values(), mp.scores.values(), b.size, c);
    }
    return make_prediction(std::move(probs), b.size, c, mp.argmax);
  }
  const Stages s = run_stages(b, false);
  if (embeddings && s.latent) *embeddings = collect_embeddings(b, s.z, nullptr);
  const MaxPrediction mp = modality_max_predict(s.u_beta, heads_, b.size);
  const Tensor agg_logits = agg_(aggregate(stack_features(s.u_beta, b.size), b.labels).q);
  return make_prediction(combine_predictions(agg_logits.values(), mp.scores.values(), b.size, c), b.size, c,
                         mp.argmax);
}

StateMap CaratModel::export_state() const {
  StateMap st;
  st["bank"] = {{bank_.size(), bank_.dim()}, std::vector<Real>(bank_.data().begin(), bank_.data().end())};
  const std::vector<int> tags = queue_.tags();
  st["queue.values"] = {{queue_.size(), queue_.dim()}, queue_.values()};
  st["queue.tags"] = {{queue_.size()}, std::vector<Real>(tags.begin(), tags.end())};
  return st;
}

void CaratModel::import_state(const StateMap& state) {
  const auto bank = state.find("bank");
  const auto qv = state.find("queue.values");
  const auto qt = state.find("queue.tags");
  if (bank == state.end() || qv == state.end() || qt == state.end()) {
    throw CheckpointError("missing contrastive state");
  }
  if (bank->second.values.size() != bank_.data().size()) throw CheckpointError("prototype bank size differs");
  std::copy(bank->second.values.begin(), bank->second.values.end(), bank_.mutable_data().begin());
  std::vector<int> tags;
  for (Real x : qt->second.values) tags.push_back(static_cast<int>(x));
  if (qv->second.values.size() != tags.size() * queue_.dim() || tags.size() > queue_.capacity()) {
    throw CheckpointError("queue shape differs");
  }
  queue_.clear();
  queue_.push_all(qv->second.values, tags);
}

std::unique_ptr<Learner> make_learner(const RunConfig& cfg, const DatasetHeader& header, std::uint64_t seed,
                                      bool baseline) {
  if (baseline) return make_fusion_baseline(cfg, header, seed);
  return std::make_unique<CaratModel>(cfg, header, seed);
}

CARAT_NS_END
