// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "carat/error.hpp"

namespace carat {

std::vector<double> SynthSpec::resolved_priors() const {
  if (!priors.empty()) return priors;
  return std::vector<double>(static_cast<std::size_t>(num_labels), 0.3);
}

std::vector<int> SynthSpec::resolved_preference() const {
  if (!preference.empty()) return preference;
  std::vector<int> pref(static_cast<std::size_t>(num_labels));
  for (std::size_t j = 0; j < pref.size(); ++j) pref[j] = static_cast<int>(j % kNumModalities);
  return pref;
}

void SynthSpec::validate() const {
  if (n_train < 1) throw ConfigError("synth.n_train", "must be >= 1");
  if (n_val < 0) throw ConfigError("synth.n_val", "must be >= 0");
  if (n_test < 0) throw ConfigError("synth.n_test", "must be >= 0");
  if (num_labels < 1) throw ConfigError("synth.labels", "must be >= 1");
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (seq_len[m] < 1) throw ConfigError("synth.seq_" + std::string(modality_key(m)), "must be >= 1");
    if (dims[m] < 1) throw ConfigError("synth.dim_" + std::string(modality_key(m)), "must be >= 1");
  }
  const auto c = static_cast<std::size_t>(num_labels);
  if (!priors.empty() && priors.size() != c) throw ConfigError("synth.priors", "needs one prior per label");
  for (double p : resolved_priors()) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("synth.priors", "priors must lie in (0, 1)");
  }
  if (!cooccurrence.empty()) {
    if (cooccurrence.size() != c * c) throw ConfigError("synth.cooccurrence", "needs labels x labels entries");
    for (double b : cooccurrence) {
      if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("synth.cooccurrence", "boosts must be finite and >= 0");
    }
  }
  if (!preference.empty()) {
    if (preference.size() != c) throw ConfigError("synth.preference", "needs one modality per label");
    for (int p : preference) {
      if (p < 0 || p >= static_cast<int>(kNumModalities)) throw ConfigError("synth.preference", "modality out of range");
    }
  }
  if (!(signal >= 0.0)) throw ConfigError("synth.signal", "must be >= 0");
  if (!(noise >= 0.0)) throw ConfigError("synth.noise", "must be >= 0");
  if (!(window_frac > 0.0 && window_frac <= 1.0)) throw ConfigError("synth.window_frac", "must lie in (0, 1]");
  if (!(min_len_frac > 0.0 && min_len_frac <= 1.0)) throw ConfigError("synth.min_len_frac", "must lie in (0, 1]");
}

nlohmann::json SynthSpec::to_json() const {
  nlohmann::json j;
  j["n_train"] = n_train;
  j["n_val"] = n_val;
  j["n_test"] = n_test;
  j["labels"] = num_labels;
  j["seq_len"] = seq_len;
  j["dims"] = dims;
  j["priors"] = resolved_priors();
  j["cooccurrence"] = cooccurrence;
  j["preference"] = resolved_preference();
  j["signal"] = signal;
  j["noise"] = noise;
  j["window_frac"] = window_frac;
  j["min_len_frac"] = min_len_frac;
  j["seed"] = seed;
  return j;
}

namespace {

// templates[j][m] is a unit vector of length dims[m].
std::vector<std::array<std::vector<double>, kNumModalities>> make_templates(const SynthSpec& spec,
                                                                           std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::array<std::vector<double>, kNumModalities>> out(static_cast<std::size_t>(spec.num_labels));
  for (auto& per_label : out) {
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      auto& t = per_label[m];
      t.resize(static_cast<std::size_t>(spec.dims[m]));
      double norm = 0.0;
      do {
        norm = 0.0;
        for (auto& v : t) {
          v = gauss(rng);
          norm += v * v;
        }
      } while (norm < 1e-12);
      norm = std::sqrt(norm);
      for (auto& v : t) v /= norm;
    }
  }
  return out;
}

}  // namespace

SplitDatasets generate_dataset(const SynthSpec& spec) {
  spec.validate();
  const auto c = static_cast<std::size_t>(spec.num_labels);
  const auto priors = spec.resolved_priors();
  const auto pref = spec.resolved_preference();

  std::mt19937_64 rng(spec.seed);
  const auto templates = make_templates(spec, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  DatasetHeader base;
  base.num_labels = spec.num_labels;
  base.seq_len = spec.seq_len;
  base.dims = spec.dims;
  base.spec = spec.to_json();

  auto make_sample = [&](std::int64_t id) {
    Sample s;
    s.id = id;
    s.labels.assign(c, 0);
    for (std::size_t j = 0; j < c; ++j) {
      double p = priors[j];
      if (!spec.cooccurrence.empty()) {
        for (std::size_t i = 0; i < j; ++i) {
          if (s.labels[i]) p += spec.cooccurrence[i * c + j];
        }
      }
      s.labels[j] = unif(rng) < std::min(p, 1.0) ? 1 : 0;
    }
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const int n = spec.seq_len[m];
      const int d = spec.dims[m];
      const int min_len = std::clamp(static_cast<int>(std::ceil(spec.min_len_frac * n)), 1, n);
      const int len = std::uniform_int_distribution<int>(min_len, n)(rng);
      s.lengths[m] = len;
      std::vector<double> x(static_cast<std::size_t>(n * d), 0.0);
      for (int r = 0; r < len; ++r) {
        for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(r * d + k)] = spec.noise * gauss(rng);
      }
      const int window = std::clamp(static_cast<int>(std::lround(spec.window_frac * len)), 1, len);
      for (std::size_t j = 0; j < c; ++j) {
        if (!s.labels[j]) continue;
        const double strength = pref[j] == static_cast<int>(m) ? spec.signal : spec.signal / 3.0;
        const int start = std::uniform_int_distribution<int>(0, len - window)(rng);
        const auto& t = templates[j][m];
        for (int r = start; r < start + window; ++r) {
          for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(r * d + k)] += strength * t[static_cast<std::size_t>(k)];
        }
      }
      s.features[m].assign(x.begin(), x.end());
    }
    return s;
  };

  SplitDatasets out;
  std::int64_t next_id = 0;
  auto fill = [&](Dataset& ds, const char* split, int count) {
    ds.header = base;
    ds.header.split = split;
    ds.samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) ds.samples.push_back(make_sample(next_id++));
  };
  fill(out.train, "train", spec.n_train);
  fill(out.val, "val", spec.n_val);
  fill(out.test, "test", spec.n_test);
  return out;
}

SynthSpec mosei_like_spec(bool aligned) {
  SynthSpec spec;
  spec.n_train = 16326;
  spec.n_val = 1871;
  spec.n_test = 4659;
  spec.num_labels = 6;
  spec.dims = {300, 35, 74};
  spec.seq_len = aligned ? std::array<int, kNumModalities>{60, 60, 60}
                         : std::array<int, kNumModalities>{50, 500, 500};
  return spec;
}

}  // namespace carat
