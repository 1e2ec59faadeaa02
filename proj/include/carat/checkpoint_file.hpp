// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Checkpoint container: a magic line, the byte length of a JSON header, the
// header, then a raw little-endian payload the header indexes into.

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace carat {

inline constexpr std::string_view kCheckpointMagic = "CARAT1";

struct CheckpointFile {
  nlohmann::json header;
  std::string payload;
};

std::string encode_checkpoint(const CheckpointFile& f);
/// Throws FormatError (record 1 = magic, 2 = header length, 3 = header, 4 = payload).
CheckpointFile decode_checkpoint(const std::string& bytes);

/// Reads only the header; used to pick the precision before loading.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace carat
