// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures and generators for the unit tests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wrag/corpus_store.hpp"
#include "wrag/random.hpp"

namespace wrag::testing {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "wrag") {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

/// Words over a small alphabet so random texts share vocabulary.
inline std::string random_word(Rng& rng, std::size_t alphabet = 6, std::size_t max_len = 3) {
  std::string w;
  const std::size_t len = 1 + uniform_index(rng, max_len);
  for (std::size_t i = 0; i < len; ++i) w += static_cast<char>('a' + uniform_index(rng, alphabet));
  return w;
}

inline std::string random_text(Rng& rng, std::size_t min_words, std::size_t max_words, std::size_t alphabet = 6) {
  const std::size_t n = min_words + uniform_index(rng, max_words - min_words + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += random_word(rng, alphabet);
  }
  return s;
}

inline Corpus random_corpus(Rng& rng, std::size_t docs, std::size_t min_words = 1, std::size_t max_words = 12,
                            std::size_t alphabet = 6) {
  std::vector<Passage> passages;
  for (std::size_t i = 0; i < docs; ++i) {
    passages.push_back(Passage{"d" + std::to_string(1000 + i), random_text(rng, min_words, max_words, alphabet)});
  }
  return Corpus(std::move(passages));
}

}  // namespace wrag::testing
