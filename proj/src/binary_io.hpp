// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

// Little helpers for the versioned binary artifact files. Values are written
// in host byte order; every file starts with an 8-byte magic and a u32
// format version.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "wrag/errors.hpp"

namespace wrag::io {

class BinaryWriter {
 public:
  BinaryWriter(const std::filesystem::path& path, std::string_view magic, std::uint32_t version)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot write " + path.string());
    out_.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    put(version);
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  void put(std::string_view s) {
    put(static_cast<std::uint64_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(std::span<const T> values) {
    put(static_cast<std::uint64_t>(values.size()));
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(T)));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(const std::vector<T>& values) {
    put(std::span<const T>(values));
  }

  void finish() {
    out_.flush();
    if (!out_) throw DataError("write failed for " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  BinaryReader(const std::filesystem::path& path, std::string_view magic)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open " + path.string());
    std::string seen(magic.size(), '\0');
    in_.read(seen.data(), static_cast<std::streamsize>(seen.size()));
    if (!in_ || seen != magic) {
      throw DataError(path.string() + ": not a " + std::string(magic) + " file");
    }
    version_ = get<std::uint32_t>();
  }

  std::uint32_t version() const { return version_; }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw DataError(path_.string() + ": truncated file");
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    check_size(n);
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw DataError(path_.string() + ": truncated file");
    return s;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    check_size(n * sizeof(T));
    std::vector<T> values(n);
    in_.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in_) throw DataError(path_.string() + ": truncated file");
    return values;
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw DataError(path_.string() + ": trailing bytes");
    }
  }

 private:
  void check_size(std::uint64_t bytes) {
    if (bytes > (std::uint64_t{1} << 40)) throw DataError(path_.string() + ": corrupt length");
  }

  std::filesystem::path path_;
  std::ifstream in_;
  std::uint32_t version_ = 0;
};

}  // namespace wrag::io
