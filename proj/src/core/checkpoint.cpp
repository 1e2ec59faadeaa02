// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/checkpoint.hpp"

#include <cstring>

#include "carat/checkpoint_file.hpp"
#include "carat/error.hpp"
#include "carat/fileio.hpp"

CARAT_NS_BEGIN

void Checkpoint::add(std::string name, Shape shape, std::vector<Real> values) {
  if (shape_numel(shape) != values.size()) throw InputError("Checkpoint::add: shape does not match values for " + name);
  arrays.push_back({std::move(name), std::move(shape), std::move(values)});
}

const NamedArray* Checkpoint::find(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const NamedArray& Checkpoint::at(std::string_view name) const {
  const NamedArray* a = find(name);
  if (!a) throw CheckpointError("checkpoint has no entry '" + std::string(name) + "'");
  return *a;
}

std::string_view dtype_name() {
  if constexpr (sizeof(Real) == sizeof(float)) return "float32";
  if constexpr (sizeof(Real) == sizeof(double)) return "float64";
  return "float80";
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  CheckpointFile f;
  f.header["dtype"] = dtype_name();
  f.header["meta"] = ck.meta;
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& a : ck.arrays) {
    entries.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
    offset += a.values.size() * sizeof(Real);
  }
  f.header["entries"] = std::move(entries);
  f.payload.resize(offset);
  offset = 0;
  for (const auto& a : ck.arrays) {
    if (!a.values.empty()) std::memcpy(f.payload.data() + offset, a.values.data(), a.values.size() * sizeof(Real));
    offset += a.values.size() * sizeof(Real);
  }
  return encode_checkpoint(f);
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  const CheckpointFile f = decode_checkpoint(bytes);
  Checkpoint ck;
  try {
    const std::string dtype = f.header.at("dtype").get<std::string>();
    if (dtype != dtype_name()) {
      throw CheckpointError("checkpoint holds " + dtype + " values; this build reads " + std::string(dtype_name()));
    }
    ck.meta = f.header.at("meta");
    std::size_t index = 0;
    for (const auto& e : f.header.at("entries")) {
      ++index;
      NamedArray a;
      a.name = e.at("name").get<std::string>();
      a.shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(a.shape);
      if (offset + n * sizeof(Real) > f.payload.size()) throw FormatError(index, "entry " + a.name + " runs past the payload");
      a.values.resize(n);
      if (n) std::memcpy(a.values.data(), f.payload.data() + offset, n * sizeof(Real));
      ck.arrays.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(3, std::string("bad checkpoint header: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_atomic(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

CARAT_NS_END
