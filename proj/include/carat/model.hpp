// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// The full model: extraction, latent contrastive learning, two-level
// reconstruction, max-pooled heads, shuffles and aggregation.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "carat/batch.hpp"
#include "carat/config.hpp"
#include "carat/extraction.hpp"
#include "carat/latent.hpp"
#include "carat/shuffle.hpp"

CARAT_NS_BEGIN

struct StateEntry {
  Shape shape;
  std::vector<Real> values;
};
/// Non-parameter state (prototypes, queue, running statistics) by name.
using StateMap = std::map<std::string, StateEntry>;

struct Prediction {
  std::size_t rows = 0;
  std::size_t labels = 0;
  std::vector<Real> probs;             // rows x C
  std::vector<std::uint8_t> decisions; // probs >= 0.5
  std::vector<int> argmax;             // rows x C selected modality; empty when not applicable

  void append(const Prediction& other);
};

/// Loss components of one step; inactive components are undefined tensors.
struct LossTerms {
  Tensor total;
  Tensor agg;
  Tensor lsr;
  Tensor scl;
  Tensor rec;
};

/// Anything the trainer can fit.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string kind() const = 0;
  virtual ParameterSet& parameters() = 0;
  /// Pure in the learner state; `step_seed` drives any sampling.
  virtual LossTerms forward_train(const Batch& b, std::uint64_t step_seed) = 0;
  /// Commits state changes deferred by the last forward_train.
  virtual void after_step() {}
  virtual Prediction predict(const Batch& b) = 0;
  virtual StateMap export_state() const { return {}; }
  virtual void import_state(const StateMap&) {}
};

/// Per-modality encoders followed by label-wise attention: U^m_o.
struct LabelExtractor {
  std::array<SequenceEncoder, kNumModalities> encoders;
  std::array<Tensor, kNumModalities> queries;  // C x d
  std::size_t num_labels = 0;

  static LabelExtractor create(ParameterSet& ps, const ModelConfig& cfg, const DatasetHeader& header, Rng& rng);
  ModalityTriple operator()(const Batch& b) const;
};

/// Checks that d splits into heads and the dataset has labels.
void validate_model_shape(const ModelConfig& cfg, const DatasetHeader& header);

class CaratModel final : public Learner {
 public:
  CaratModel(const RunConfig& cfg, const DatasetHeader& header, std::uint64_t seed);

  std::string kind() const override { return "carat"; }
  ParameterSet& parameters() override { return params_; }
  LossTerms forward_train(const Batch& b, std::uint64_t step_seed) override;
  void after_step() override;
  Prediction predict(const Batch& b) override;
  /// Also returns the stage-wise latent embeddings computed on the way.
  Prediction predict(const Batch& b, TaggedEmbeddings* embeddings);
  StateMap export_state() const override;
  void import_state(const StateMap& state) override;

  const PrototypeBank& bank() const { return bank_; }
  PrototypeBank& bank() { return bank_; }
  const EmbeddingQueue& queue() const { return queue_; }
  EmbeddingQueue& queue() { return queue_; }
  /// Detached embeddings of the last forward_train, not yet committed.
  const TaggedEmbeddings& pending() const { return pending_; }
  const RunConfig& config() const { return cfg_; }

 private:
  struct Stages;
  Stages run_stages(const Batch& b, bool training) const;
  TaggedEmbeddings collect_embeddings(const Batch& b, const std::array<ModalityTriple, kNumStages>& z,
                                      Tensor* anchors) const;

  RunConfig cfg_;
  std::size_t num_labels_ = 0;
  ParameterSet params_;
  LabelExtractor extractor_;
  std::array<Mlp2, kNumModalities> encoders_;
  std::array<Mlp2, kNumModalities> decoders_;
  ReconstructionNets nets_;
  ModalityHeads heads_;
  AggregationClassifier agg_;
  PrototypeBank bank_;
  EmbeddingQueue queue_;
  TaggedEmbeddings pending_;
  bool pending_valid_ = false;
};

/// ŷ = (mean_m sigma(h_c(q^m)) + sigma(s)) / 2 for (B*M) x C aggregation
/// logits and B x C max-pooled logits.
std::vector<Real> combine_predictions(std::span<const Real> agg_logits, std::span<const Real> pooled_logits,
                                      std::size_t batch, std::size_t num_labels);

Prediction make_prediction(std::vector<Real> probs, std::size_t rows, std::size_t labels, std::vector<int> argmax);

/// The CARAT model for cfg.ablation, or a fusion baseline when `baseline`.
std::unique_ptr<Learner> make_learner(const RunConfig& cfg, const DatasetHeader& header, std::uint64_t seed,
                                      bool baseline);

CARAT_NS_END
