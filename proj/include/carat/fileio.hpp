// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace carat {

/// Writes through a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace carat
