// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Extraction plus a single fusion block, for comparing fusion strategies.

#pragma once

#include <memory>

#include "carat/model.hpp"

CARAT_NS_BEGIN

class FusionBaseline final : public Learner {
 public:
  FusionBaseline(const RunConfig& cfg, const DatasetHeader& header, std::uint64_t seed);

  std::string kind() const override { return "fusion:" + std::string(to_string(kind_)); }
  ParameterSet& parameters() override { return params_; }
  LossTerms forward_train(const Batch& b, std::uint64_t step_seed) override;
  void after_step() override;
  Prediction predict(const Batch& b) override;
  StateMap export_state() const override;
  void import_state(const StateMap& state) override;

  /// Momentum of the running per-label mean used at prediction time.
  static constexpr double kRunningMomentum = 0.9;

 private:
  struct Output {
    Tensor logits;  // batch x C
    std::vector<int> argmax;
    LossTerms terms;
    std::vector<Real> batch_mean;  // M x C x d, training only
  };
  Output run(const Batch& b, bool training) const;

  RunConfig cfg_;
  FusionKind kind_;
  std::size_t num_labels_ = 0;
  std::size_t d_ = 0;
  ParameterSet params_;
  LabelExtractor extractor_;
  Tensor head_w_, head_b_;
  Linear fuse_;
  ReconstructionNets nets_;
  ModalityHeads heads_;
  /// Running mean of U^m per label, M x C x d, and whether it has been seeded.
  std::vector<Real> running_;
  bool running_seeded_ = false;
  std::vector<Real> pending_mean_;
};

std::unique_ptr<Learner> make_fusion_baseline(const RunConfig& cfg, const DatasetHeader& header, std::uint64_t seed);

CARAT_NS_END
