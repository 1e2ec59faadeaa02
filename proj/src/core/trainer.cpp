// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/trainer.hpp"

#include <cmath>

#include "carat/error.hpp"

CARAT_NS_BEGIN

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

LabelMatrix label_matrix(const Dataset& ds) {
  const auto c = static_cast<std::size_t>(ds.header.num_labels);
  LabelMatrix y(ds.size(), c);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) = ds.samples[i].labels[j];
  }
  return y;
}

LabelMatrix decision_matrix(const Prediction& p) {
  LabelMatrix y(p.rows, p.labels);
  y.cells = p.decisions;
  return y;
}

Prediction predict_dataset(Learner& learner, const Dataset& ds, std::size_t batch_size) {
  Prediction all;
  for (const auto& idx : sequential_batches(ds.size(), batch_size)) all.append(learner.predict(make_batch(ds, idx)));
  return all;
}

EvalResult evaluate(Learner& learner, const Dataset& ds, std::size_t batch_size) {
  EvalResult r;
  r.prediction = predict_dataset(learner, ds, batch_size);
  r.metrics = compute_metrics(label_matrix(ds), decision_matrix(r.prediction));
  if (!r.prediction.argmax.empty()) {
    r.metrics.modality_label_freq = correlation_matrix(r.prediction.argmax, r.prediction.labels);
  }
  return r;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"type", "epoch"}, {"epoch", epoch}, {"step", step}, {"train_loss", train_loss}, {"val", val.to_json()}};
}

Trainer::Trainer(Learner& learner, const RunConfig& cfg, const Dataset& train, const Dataset& val, std::uint64_t seed)
    : learner_(learner), cfg_(cfg), train_(train), val_(val), seed_(seed), epochs_(cfg.train.epochs),
      batch_size_(static_cast<std::size_t>(cfg.train.batch)) {
  if (train.size() == 0) throw InputError("training set is empty");
  if (val.size() == 0) throw InputError("validation set is empty");
  if (batch_size_ == 0) throw ConfigError("train.batch", "must be positive");
  steps_per_epoch_ = (train.size() + batch_size_ - 1) / batch_size_;
  opt_.beta1 = cfg.optim.beta1;
  opt_.beta2 = cfg.optim.beta2;
  opt_.epsilon = cfg.optim.eps;
  opt_.peak_lr = cfg.optim.lr;
  opt_.total_steps = std::max<std::size_t>(1, steps_per_epoch_ * static_cast<std::size_t>(std::max(epochs_, 0)));
  opt_.warmup_steps = static_cast<std::size_t>(std::floor(cfg.optim.warmup_frac * static_cast<double>(opt_.total_steps)));
  opt_.init(learner.parameters().tensors());
}

void Trainer::run(std::uint64_t stop_at_step) {
  auto& params = learner_.parameters();
  while (!finished() && state_.step < stop_at_step) {
    const auto order = batch_iter(train_.size(), batch_size_, mix_seed(seed_, static_cast<std::uint64_t>(state_.epoch)));
    while (state_.batch_in_epoch < order.size() && state_.step < stop_at_step) {
      const Batch b = make_batch(train_, order[state_.batch_in_epoch]);
      params.zero_grad();
      const LossTerms loss = learner_.forward_train(b, mix_seed(~seed_, state_.step));
      const double value = static_cast<double>(loss.total.item());
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at step " + std::to_string(state_.step));
      }
      loss.total.backward();
      adam_step(opt_, params.tensors());
      learner_.after_step();
      ++state_.step;
      ++state_.batch_in_epoch;
      state_.loss_sum += value;
      ++state_.loss_count;
    }
    if (state_.batch_in_epoch >= order.size()) finish_epoch();
  }
}

void Trainer::finish_epoch() {
  EpochRecord rec;
  rec.epoch = state_.epoch + 1;
  rec.step = state_.step;
  rec.train_loss = state_.loss_count ? state_.loss_sum / static_cast<double>(state_.loss_count) : 0.0;
  rec.val = evaluate(learner_, val_, batch_size_).metrics;
  if (rec.val.micro_f1 > state_.best_f1) {
    state_.best_f1 = rec.val.micro_f1;
    state_.best_epoch = rec.epoch;
    snapshot_best();
  }
  history_.push_back(rec);
  ++state_.epoch;
  state_.batch_in_epoch = 0;
  state_.loss_sum = 0.0;
  state_.loss_count = 0;
  if (on_epoch) on_epoch(rec);
}

void Trainer::snapshot_best() {
  best_params_.clear();
  for (const auto& t : learner_.parameters().tensors()) best_params_.emplace_back(t.values().begin(), t.values().end());
  best_state_ = learner_.export_state();
}

void Trainer::restore_best() {
  if (best_params_.empty()) return;
  auto& tensors = learner_.parameters().tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    std::copy(best_params_[i].begin(), best_params_[i].end(), tensors[i].mutable_values().begin());
  }
  learner_.import_state(best_state_);
}

namespace {

nlohmann::json learner_meta(Learner& learner, const RunConfig& cfg) {
  return {{"learner", learner.kind()}, {"config", cfg.to_json()}};
}

void add_model_arrays(Checkpoint& ck, const std::string& prefix, const ParameterSet& ps,
                      const std::vector<std::vector<Real>>* values, const StateMap& state) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& t = ps.tensors()[i];
    ck.add(prefix + "param/" + ps.names()[i], t.shape(),
           values ? (*values)[i] : std::vector<Real>(t.values().begin(), t.values().end()));
  }
  for (const auto& [name, entry] : state) ck.add(prefix + "state/" + name, entry.shape, entry.values);
}

void load_model_arrays(Learner& learner, const Checkpoint& ck, const std::string& prefix) {
  auto& ps = learner.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const NamedArray& a = ck.at(prefix + "param/" + ps.names()[i]);
    auto& t = ps.tensors()[i];
    if (a.shape != t.shape()) {
      throw CheckpointError("parameter " + ps.names()[i] + " has shape " + shape_str(a.shape) + ", model expects " +
                            shape_str(t.shape()));
    }
    std::copy(a.values.begin(), a.values.end(), t.mutable_values().begin());
  }
  StateMap state;
  const std::string state_prefix = prefix + "state/";
  for (const auto& a : ck.arrays) {
    if (a.name.rfind(state_prefix, 0) == 0) state[a.name.substr(state_prefix.size())] = {a.shape, a.values};
  }
  learner.import_state(state);
}

}  // namespace

Checkpoint model_checkpoint(Learner& learner, const RunConfig& cfg) {
  Checkpoint ck;
  ck.meta = learner_meta(learner, cfg);
  add_model_arrays(ck, "", learner.parameters(), nullptr, learner.export_state());
  return ck;
}

void load_model_state(Learner& learner, const Checkpoint& ck) {
  const auto kind = ck.meta.value("learner", std::string());
  if (kind != learner.kind()) throw CheckpointError("checkpoint is for '" + kind + "', not '" + learner.kind() + "'");
  load_model_arrays(learner, ck, "");
}

Checkpoint Trainer::best_checkpoint() const {
  Checkpoint ck;
  ck.meta = learner_meta(learner_, cfg_);
  ck.meta["epoch"] = state_.best_epoch;
  ck.meta["val_micro_f1"] = state_.best_f1;
  add_model_arrays(ck, "", learner_.parameters(), best_params_.empty() ? nullptr : &best_params_,
                   best_params_.empty() ? learner_.export_state() : best_state_);
  return ck;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck = model_checkpoint(learner_, cfg_);
  ck.meta["seed"] = seed_;
  ck.meta["trainer"] = {{"step", state_.step},
                        {"epoch", state_.epoch},
                        {"batch_in_epoch", state_.batch_in_epoch},
                        {"loss_sum", state_.loss_sum},
                        {"loss_count", state_.loss_count},
                        {"best_f1", state_.best_f1},
                        {"best_epoch", state_.best_epoch}};
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : history_) hist.push_back(r.to_json());
  ck.meta["history"] = std::move(hist);
  ck.meta["optimizer"] = {{"step", opt_.step}};
  const auto& ps = learner_.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ck.add("adam.m/" + ps.names()[i], ps.tensors()[i].shape(), opt_.first_moment[i]);
    ck.add("adam.v/" + ps.names()[i], ps.tensors()[i].shape(), opt_.second_moment[i]);
  }
  if (!best_params_.empty()) add_model_arrays(ck, "best/", ps, &best_params_, best_state_);
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  load_model_state(learner_, ck);
  try {
    const auto& t = ck.meta.at("trainer");
    state_.step = t.at("step").get<std::uint64_t>();
    state_.epoch = t.at("epoch").get<int>();
    state_.batch_in_epoch = t.at("batch_in_epoch").get<std::size_t>();
    state_.loss_sum = t.at("loss_sum").get<double>();
    state_.loss_count = t.at("loss_count").get<std::size_t>();
    state_.best_f1 = t.at("best_f1").get<double>();
    state_.best_epoch = t.at("best_epoch").get<int>();
    opt_.step = ck.meta.at("optimizer").at("step").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint lacks trainer state: ") + e.what());
  }
  const auto& ps = learner_.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    opt_.first_moment[i] = ck.at("adam.m/" + ps.names()[i]).values;
    opt_.second_moment[i] = ck.at("adam.v/" + ps.names()[i]).values;
  }
  history_.clear();
  if (ck.meta.contains("history")) {
    for (const auto& h : ck.meta.at("history")) {
      EpochRecord r;
      r.epoch = h.at("epoch").get<int>();
      r.step = h.at("step").get<std::uint64_t>();
      r.train_loss = h.at("train_loss").get<double>();
      r.val = MetricsReport::from_json(h.at("val"));
      history_.push_back(std::move(r));
    }
  }
  best_params_.clear();
  best_state_.clear();
  if (ck.find("best/param/" + ps.names().front())) {
    for (std::size_t i = 0; i < ps.size(); ++i) best_params_.push_back(ck.at("best/param/" + ps.names()[i]).values);
    for (const auto& a : ck.arrays) {
      if (a.name.rfind("best/state/", 0) == 0) best_state_[a.name.substr(11)] = {a.shape, a.values};
    }
  }
}

CARAT_NS_END
