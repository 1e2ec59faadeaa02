// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/checkpoint_file.hpp"

#include <bit>
#include <charconv>
#include <fstream>

#include "carat/error.hpp"

namespace carat {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host order");

std::string encode_checkpoint(const CheckpointFile& f) {
  const std::string header = f.header.dump();
  std::string out;
  out.reserve(header.size() + f.payload.size() + 32);
  out += kCheckpointMagic;
  out += '\n';
  out += std::to_string(header.size());
  out += '\n';
  out += header;
  out += f.payload;
  return out;
}

namespace {

std::size_t parse_prefix(const std::string& bytes, std::size_t& header_start) {
  const std::size_t magic_end = bytes.find('\n');
  if (magic_end == std::string::npos || std::string_view(bytes).substr(0, magic_end) != kCheckpointMagic) {
    throw FormatError(1, "not a carat checkpoint (bad magic)");
  }
  const std::size_t len_end = bytes.find('\n', magic_end + 1);
  if (len_end == std::string::npos) throw FormatError(2, "missing header length");
  std::size_t len = 0;
  const char* first = bytes.data() + magic_end + 1;
  const char* last = bytes.data() + len_end;
  auto [ptr, ec] = std::from_chars(first, last, len);
  if (ec != std::errc() || ptr != last) throw FormatError(2, "bad header length");
  header_start = len_end + 1;
  return len;
}

}  // namespace

CheckpointFile decode_checkpoint(const std::string& bytes) {
  std::size_t start = 0;
  const std::size_t len = parse_prefix(bytes, start);
  if (start + len > bytes.size()) throw FormatError(3, "truncated header");
  CheckpointFile f;
  try {
    f.header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(start + len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(3, std::string("header is not JSON: ") + e.what());
  }
  f.payload = bytes.substr(start + len);
  return f;
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kCheckpointMagic) throw FormatError(1, "not a carat checkpoint (bad magic)");
  std::getline(in, line);
  std::size_t len = 0;
  auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), len);
  if (ec != std::errc() || ptr != line.data() + line.size()) throw FormatError(2, "bad header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::size_t>(in.gcount()) != len) throw FormatError(3, "truncated header");
  try {
    return nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(3, std::string("header is not JSON: ") + e.what());
  }
}

}  // namespace carat
