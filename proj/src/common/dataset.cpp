// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "carat/error.hpp"
#include "carat/fileio.hpp"

namespace carat {

namespace {

using nlohmann::json;

json header_to_json(const DatasetHeader& h, std::size_t count) {
  json j;
  j["format"] = "carat-dataset";
  j["version"] = 1;
  j["split"] = h.split;
  j["count"] = count;
  j["labels"] = h.num_labels;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const std::string key(modality_key(m));
    j["seq_len"][key] = h.seq_len[m];
    j["dims"][key] = h.dims[m];
  }
  j["spec"] = h.spec;
  return j;
}

json sample_to_json(const Sample& s, const DatasetHeader& h) {
  json j;
  j["id"] = s.id;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const auto rows = static_cast<std::size_t>(h.seq_len[m]);
    const auto cols = static_cast<std::size_t>(h.dims[m]);
    json mat = json::array();
    for (std::size_t r = 0; r < rows; ++r) {
      mat.push_back(std::vector<float>(s.features[m].begin() + static_cast<std::ptrdiff_t>(r * cols),
                                       s.features[m].begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)));
    }
    j[std::string(modality_key(m))] = std::move(mat);
  }
  j["len_t"] = s.lengths[0];
  j["len_v"] = s.lengths[1];
  j["len_a"] = s.lengths[2];
  j["y"] = s.labels;
  return j;
}

template <typename T>
T get_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(line, std::string("missing key '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw FormatError(line, std::string("bad value for '") + key + "': " + e.what());
  }
}

DatasetHeader header_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "carat-dataset") {
    throw FormatError(1, "not a carat dataset header");
  }
  DatasetHeader h;
  h.split = get_field<std::string>(j, "split", 1);
  h.num_labels = get_field<int>(j, "labels", 1);
  if (h.num_labels <= 0) throw FormatError(1, "labels must be positive");
  const json seq = get_field<json>(j, "seq_len", 1);
  const json dims = get_field<json>(j, "dims", 1);
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const std::string key(modality_key(m));
    h.seq_len[m] = get_field<int>(seq, key.c_str(), 1);
    h.dims[m] = get_field<int>(dims, key.c_str(), 1);
    if (h.seq_len[m] <= 0 || h.dims[m] <= 0) throw FormatError(1, "non-positive shape for " + key);
  }
  if (auto it = j.find("spec"); it != j.end()) h.spec = *it;
  return h;
}

Sample sample_from_json(const json& j, const DatasetHeader& h, std::size_t line) {
  if (!j.is_object()) throw FormatError(line, "record is not an object");
  Sample s;
  s.id = get_field<std::int64_t>(j, "id", line);
  static constexpr const char* kLenKeys[] = {"len_t", "len_v", "len_a"};
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const std::string key(modality_key(m));
    const auto mat = get_field<std::vector<std::vector<float>>>(j, key.c_str(), line);
    if (mat.size() != static_cast<std::size_t>(h.seq_len[m])) {
      throw FormatError(line, key + ": expected " + std::to_string(h.seq_len[m]) + " rows");
    }
    auto& flat = s.features[m];
    flat.reserve(static_cast<std::size_t>(h.seq_len[m] * h.dims[m]));
    for (const auto& row : mat) {
      if (row.size() != static_cast<std::size_t>(h.dims[m])) {
        throw FormatError(line, key + ": expected " + std::to_string(h.dims[m]) + " columns");
      }
      flat.insert(flat.end(), row.begin(), row.end());
    }
    s.lengths[m] = get_field<int>(j, kLenKeys[m], line);
    if (s.lengths[m] < 1 || s.lengths[m] > h.seq_len[m]) {
      throw FormatError(line, std::string(kLenKeys[m]) + " out of range");
    }
  }
  const auto y = get_field<std::vector<int>>(j, "y", line);
  if (y.size() != static_cast<std::size_t>(h.num_labels)) throw FormatError(line, "label vector has wrong length");
  s.labels.reserve(y.size());
  for (int v : y) {
    if (v != 0 && v != 1) throw FormatError(line, "labels must be 0 or 1");
    s.labels.push_back(static_cast<std::uint8_t>(v));
  }
  return s;
}

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  std::string out = header_to_json(ds.header, ds.samples.size()).dump();
  out += '\n';
  for (const auto& s : ds.samples) {
    out += sample_to_json(s, ds.header).dump();
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Dataset ds;
  bool have_header = false;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!have_header) {
      ds.header = header_from_json(j);
      expected = get_field<std::size_t>(j, "count", lineno);
      have_header = true;
      continue;
    }
    ds.samples.push_back(sample_from_json(j, ds.header, lineno));
  }
  if (!have_header) throw FormatError(1, "empty dataset file");
  if (ds.samples.size() != expected) {
    throw FormatError(lineno, "header count " + std::to_string(expected) + " but found " +
                                  std::to_string(ds.samples.size()) + " records");
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_atomic(path, serialize_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed) {
  if (batch_size == 0) throw InputError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<double> label_frequencies(const Dataset& ds) {
  std::vector<double> freq(static_cast<std::size_t>(ds.header.num_labels), 0.0);
  for (const auto& s : ds.samples) {
    for (std::size_t j = 0; j < freq.size(); ++j) freq[j] += s.labels[j];
  }
  if (!ds.samples.empty()) {
    for (auto& f : freq) f /= static_cast<double>(ds.samples.size());
  }
  return freq;
}

}  // namespace carat
