// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "carat/checkpoint.hpp"
#include "carat/metrics.hpp"
#include "carat/model.hpp"
#include "carat/optim.hpp"

CARAT_NS_BEGIN

/// Deterministic seed derivation (splitmix64 finalizer over a ^ f(b)).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

LabelMatrix label_matrix(const Dataset& ds);
LabelMatrix decision_matrix(const Prediction& p);

/// Predicts the whole dataset in order with batches of `batch_size`.
Prediction predict_dataset(Learner& learner, const Dataset& ds, std::size_t batch_size);

struct EvalResult {
  Prediction prediction;
  MetricsReport metrics;
};
EvalResult evaluate(Learner& learner, const Dataset& ds, std::size_t batch_size);

struct EpochRecord {
  int epoch = 0;
  std::uint64_t step = 0;
  double train_loss = 0.0;
  MetricsReport val;

  nlohmann::json to_json() const;
};

struct TrainerState {
  std::uint64_t step = 0;
  int epoch = 0;
  std::size_t batch_in_epoch = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  double best_f1 = -1.0;
  int best_epoch = -1;
};

/// Adam over the learner's parameters with warmup then linear decay; batch
/// order and shuffle streams derive from the seed, the epoch and the step, so
/// a restored checkpoint continues exactly where it stopped.
class Trainer {
 public:
  Trainer(Learner& learner, const RunConfig& cfg, const Dataset& train, const Dataset& val, std::uint64_t seed);

  /// Trains until every epoch is done or the global step reaches `stop_at_step`.
  void run(std::uint64_t stop_at_step = std::numeric_limits<std::uint64_t>::max());
  bool finished() const { return state_.epoch >= epochs_; }

  const TrainerState& state() const { return state_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return opt_.total_steps; }

  /// Parameters and learner state as of the best validation epoch.
  void restore_best();
  /// Checkpoint of the best epoch alone (no optimizer or trainer state).
  Checkpoint best_checkpoint() const;

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ck);

  /// Called after each epoch's validation.
  std::function<void(const EpochRecord&)> on_epoch;

 private:
  void finish_epoch();
  void snapshot_best();

  Learner& learner_;
  RunConfig cfg_;
  const Dataset& train_;
  const Dataset& val_;
  std::uint64_t seed_;
  int epochs_;
  std::size_t batch_size_;
  std::size_t steps_per_epoch_;
  OptimizerState opt_;
  TrainerState state_;
  std::vector<EpochRecord> history_;
  std::vector<std::vector<Real>> best_params_;
  StateMap best_state_;
};

/// Parameters and learner state only; enough for prediction.
Checkpoint model_checkpoint(Learner& learner, const RunConfig& cfg);
void load_model_state(Learner& learner, const Checkpoint& ck);

CARAT_NS_END
