// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carat/tensor.hpp"

CARAT_NS_BEGIN

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<Real> values;
};

struct Checkpoint {
  /// Free-form metadata: config echo, learner kind, trainer and optimizer scalars.
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  void add(std::string name, Shape shape, std::vector<Real> values);
  const NamedArray* find(std::string_view name) const;
  /// Throws CheckpointError when absent.
  const NamedArray& at(std::string_view name) const;
};

/// "float32", "float64" or "float80" (x87 extended, stored in its 16-byte slot).
std::string_view dtype_name();

std::string serialize_checkpoint(const Checkpoint& ck);
/// Throws CheckpointError when the payload dtype differs from this build.
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

CARAT_NS_END
