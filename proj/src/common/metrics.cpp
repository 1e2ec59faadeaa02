// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "carat/error.hpp"

namespace carat {

namespace {

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

MetricsReport compute_metrics(const LabelMatrix& truth, const LabelMatrix& predicted) {
  if (truth.rows != predicted.rows || truth.cols != predicted.cols ||
      truth.cells.size() != truth.rows * truth.cols || predicted.cells.size() != truth.cells.size()) {
    throw InputError("compute_metrics: shape mismatch");
  }
  MetricsReport rep;
  rep.per_label.assign(truth.cols, {});
  double jaccard_sum = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.rows; ++i) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t j = 0; j < truth.cols; ++j) {
      const bool y = truth.at(i, j) != 0;
      const bool p = predicted.at(i, j) != 0;
      inter += (y && p);
      uni += (y || p);
      auto& lc = rep.per_label[j];
      if (y && p) ++lc.tp;
      if (!y && p) ++lc.fp;
      if (y && !p) ++lc.fn;
    }
    jaccard_sum += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  for (const auto& lc : rep.per_label) {
    tp += lc.tp;
    fp += lc.fp;
    fn += lc.fn;
  }
  rep.acc = truth.rows ? jaccard_sum / static_cast<double>(truth.rows) : 0.0;
  rep.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  rep.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  rep.micro_f1 = harmonic(rep.precision, rep.recall);
  return rep;
}

std::vector<double> correlation_matrix(const std::vector<int>& argmax, std::size_t num_labels) {
  if (num_labels == 0 || argmax.empty() || argmax.size() % num_labels != 0) {
    throw InputError("correlation_matrix: need a non-empty N x C record set");
  }
  const std::size_t n = argmax.size() / num_labels;
  std::vector<double> freq(num_labels * kNumModalities, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < num_labels; ++j) {
      const int m = argmax[i * num_labels + j];
      if (m < 0 || m >= static_cast<int>(kNumModalities)) throw InputError("correlation_matrix: bad modality index");
      freq[j * kNumModalities + static_cast<std::size_t>(m)] += 1.0;
    }
  }
  for (auto& f : freq) f /= static_cast<double>(n);
  return freq;
}

std::string correlation_csv(const std::vector<double>& freq, std::size_t num_labels) {
  std::ostringstream out;
  out << "label";
  for (std::size_t m = 0; m < kNumModalities; ++m) out << ',' << modality_key(m);
  out << '\n';
  char buf[32];
  for (std::size_t j = 0; j < num_labels; ++j) {
    out << j;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      std::snprintf(buf, sizeof buf, "%.6f", freq[j * kNumModalities + m]);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

double prior_baseline_f1(const std::vector<double>& train_priors, const LabelMatrix& truth) {
  if (train_priors.size() != truth.cols) throw InputError("prior_baseline_f1: prior count mismatch");
  double positives = 0.0;
  std::vector<double> per_label(truth.cols, 0.0);
  for (std::size_t i = 0; i < truth.rows; ++i) {
    for (std::size_t j = 0; j < truth.cols; ++j) per_label[j] += truth.at(i, j);
  }
  for (double c : per_label) positives += c;
  const double cells = static_cast<double>(truth.rows * truth.cols);
  if (positives == 0.0 || cells == 0.0) return 0.0;

  // Always positive: P = positives / cells, R = 1.
  const double all_pos = harmonic(positives / cells, 1.0);

  // Bernoulli(prior_j) guessing, using expected TP/FP/FN counts.
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t j = 0; j < truth.cols; ++j) {
    const double p = train_priors[j];
    const double pos = per_label[j];
    const double neg = static_cast<double>(truth.rows) - pos;
    tp += p * pos;
    fp += p * neg;
    fn += (1.0 - p) * pos;
  }
  const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return std::max(all_pos, harmonic(prec, rec));
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["acc"] = acc;
  j["precision"] = precision;
  j["recall"] = recall;
  j["micro_f1"] = micro_f1;
  auto& labels = j["per_label"] = nlohmann::json::array();
  for (const auto& lc : per_label) labels.push_back({{"tp", lc.tp}, {"fp", lc.fp}, {"fn", lc.fn}});
  if (!modality_label_freq.empty()) j["modality_label_freq"] = modality_label_freq;
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.acc = j.at("acc").get<double>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.micro_f1 = j.at("micro_f1").get<double>();
  for (const auto& lc : j.at("per_label")) {
    r.per_label.push_back({lc.at("tp").get<std::size_t>(), lc.at("fp").get<std::size_t>(), lc.at("fn").get<std::size_t>()});
  }
  if (j.contains("modality_label_freq")) r.modality_label_freq = j["modality_label_freq"].get<std::vector<double>>();
  return r;
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s %8s %8s\n", "", "Acc", "P", "R", "Micro-F1");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-10s %8.4f %8.4f %8.4f %8.4f\n", "overall", acc, precision, recall, micro_f1);
  out << buf;
  std::snprintf(buf, sizeof buf, "\n%-10s %8s %8s %8s\n", "label", "TP", "FP", "FN");
  out << buf;
  for (std::size_t j = 0; j < per_label.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%-10zu %8zu %8zu %8zu\n", j, per_label[j].tp, per_label[j].fp, per_label[j].fn);
    out << buf;
  }
  if (!modality_label_freq.empty()) {
    std::snprintf(buf, sizeof buf, "\n%-10s %8s %8s %8s\n", "label", "t", "v", "a");
    out << buf;
    const std::size_t c = modality_label_freq.size() / kNumModalities;
    for (std::size_t j = 0; j < c; ++j) {
      std::snprintf(buf, sizeof buf, "%-10zu %8.4f %8.4f %8.4f\n", j, modality_label_freq[j * 3],
                    modality_label_freq[j * 3 + 1], modality_label_freq[j * 3 + 2]);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace carat
