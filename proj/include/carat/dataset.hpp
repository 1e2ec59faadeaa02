// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "carat/modality.hpp"

namespace carat {

/// One utterance: three padded feature matrices plus its multi-hot labels.
struct Sample {
  std::int64_t id = 0;
  /// features[m] is seq_len[m] x dims[m], row-major, zero past lengths[m].
  std::array<std::vector<float>, kNumModalities> features;
  std::array<int, kNumModalities> lengths{};
  std::vector<std::uint8_t> labels;

  bool operator==(const Sample&) const = default;
};

struct DatasetHeader {
  std::string split;
  int num_labels = 0;
  std::array<int, kNumModalities> seq_len{};
  std::array<int, kNumModalities> dims{};
  /// Generator settings echoed verbatim; empty for foreign data.
  nlohmann::json spec = nlohmann::json::object();

  bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool operator==(const Dataset&) const = default;
};

/// JSON-lines: line 1 is the header object, then one record per sample with
/// keys id, t, v, a, len_t, len_v, len_a, y.
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Splits [0, n) into batches of `batch_size` after a seeded shuffle. Every
/// index appears exactly once; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed);

/// Empirical positive rate of each label.
std::vector<double> label_frequencies(const Dataset& ds);

}  // namespace carat
