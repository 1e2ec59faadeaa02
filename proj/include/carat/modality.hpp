// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace carat {

inline constexpr std::size_t kNumModalities = 3;

/// Text, visual, acoustic. The numeric order is also the tie-break order.
enum class Modality : int { text = 0, visual = 1, acoustic = 2 };

inline constexpr std::array<std::string_view, kNumModalities> kModalityKeys = {"t", "v", "a"};

inline constexpr std::string_view modality_key(std::size_t m) { return kModalityKeys.at(m); }

}  // namespace carat
