// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "carat/dataset.hpp"

namespace carat {

/// Planted-signal generator settings. Each active label adds a fixed template
/// to a random window of its preferred modality at strength `signal`, and at
/// `signal / 3` to the other two modalities.
struct SynthSpec {
  int n_train = 2000;
  int n_val = 250;
  int n_test = 250;
  int num_labels = 6;
  std::array<int, kNumModalities> seq_len{20, 20, 20};
  std::array<int, kNumModalities> dims{16, 12, 14};
  /// Per-label base rate. Empty means 0.3 for every label.
  std::vector<double> priors;
  /// Row-major C x C; entry (i, j) is added to label j's probability when an
  /// earlier label i is active. Empty means no boosts.
  std::vector<double> cooccurrence;
  /// Preferred modality per label. Empty means round-robin t, v, a, t, ...
  std::vector<int> preference;
  double signal = 2.0;
  double noise = 1.0;
  /// Window length as a fraction of the valid sequence length.
  double window_frac = 0.25;
  /// Valid lengths are drawn uniformly from [ceil(min_len_frac * n), n].
  double min_len_frac = 0.6;
  std::uint64_t seed = 1;

  std::vector<double> resolved_priors() const;
  std::vector<int> resolved_preference() const;
  /// Throws ConfigError on impossible settings.
  void validate() const;
  nlohmann::json to_json() const;
};

struct SplitDatasets {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Pure function of the spec (including its seed).
SplitDatasets generate_dataset(const SynthSpec& spec);

/// Aligned / unaligned length presets mirroring CMU-MOSEI: 60/60/60 and 50/500/500 (t/v/a).
SynthSpec mosei_like_spec(bool aligned);

}  // namespace carat
