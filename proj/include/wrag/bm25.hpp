// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wrag/corpus_store.hpp"

namespace wrag {

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
  /// Negative idfs are floored to epsilon * (mean raw idf over the vocabulary).
  double epsilon = 0.25;

  friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

/// Okapi BM25 inverted index over a Corpus.
///
/// idf(t) = ln((N - df + 0.5) / (df + 0.5)); terms whose raw idf is negative
/// get epsilon * mean(raw idf) instead. Query terms contribute once per
/// occurrence. The index is immutable after build and safe for concurrent
/// readers.
class Bm25Index {
 public:
  struct Posting {
    std::uint32_t doc = 0;  // index into pids()
    std::uint32_t tf = 0;
  };

  /// Throws InvalidArgument on an empty corpus.
  [[nodiscard]] static Bm25Index build(const Corpus& corpus, Bm25Params params = {});

  const Bm25Params& params() const { return params_; }
  std::size_t document_count() const { return pids_.size(); }
  double average_length() const { return avgdl_; }
  std::span<const std::string> pids() const { return pids_; }
  std::span<const std::uint32_t> document_lengths() const { return doc_lengths_; }
  std::size_t vocabulary_size() const { return terms_.size(); }

  /// Stored (post-substitution) idf, or 0 for a term not in the vocabulary.
  double idf(std::string_view term) const;
  /// Raw Okapi idf before the epsilon floor; 0 for unknown terms.
  double raw_idf(std::string_view term) const;
  double average_raw_idf() const { return average_raw_idf_; }
  std::size_t document_frequency(std::string_view term) const;
  std::span<const Posting> postings(std::string_view term) const;

  /// BM25 of one document. Throws DataError for an unknown pid.
  double score(std::span<const std::string> query_tokens, std::string_view pid) const;
  /// Scores of every document, parallel to pids().
  std::vector<double> score_all(std::span<const std::string> query_tokens) const;
  /// Top-k by score; ties by ascending pid. Throws InvalidArgument if k < 1.
  std::vector<ScoredPid> retrieve_topk(std::string_view question, std::size_t k) const;
  /// One ranked list per question, in input order.
  Run retrieve_run(std::span<const QAPair> questions, std::size_t k) const;

  // Binary file: magic "WRAGBM25", format version, params, documents and
  // sorted vocabulary with postings. Doubles are stored bit-exactly.
  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

 private:
  struct Term {
    std::string text;
    double raw_idf = 0.0;
    double idf = 0.0;
    std::vector<Posting> postings;
  };

  const Term* find_term(std::string_view term) const;
  double term_weight(const Term& term, const Posting& p) const;
  void rebuild_lookup();

  Bm25Params params_;
  std::vector<std::string> pids_;
  std::vector<std::uint32_t> doc_lengths_;
  double avgdl_ = 0.0;
  double average_raw_idf_ = 0.0;
  std::vector<Term> terms_;  // ascending by text
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

}  // namespace wrag
