// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wrag {

struct Passage {
  std::string pid;
  std::string text;

  friend bool operator==(const Passage&, const Passage&) = default;
};

struct QAPair {
  std::string qid;
  std::string question;
  std::vector<std::string> answers;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

/// qid -> relevant pids.
using Qrels = std::map<std::string, std::set<std::string>, std::less<>>;

struct ScoredPid {
  std::string pid;
  double score = 0.0;

  friend bool operator==(const ScoredPid&, const ScoredPid&) = default;
};

/// Ranked candidates for one question; scores non-increasing, pids distinct.
struct RankedList {
  std::string qid;
  std::vector<ScoredPid> entries;

  friend bool operator==(const RankedList&, const RankedList&) = default;
};

using Run = std::vector<RankedList>;

struct DatasetSplit {
  std::vector<QAPair> train;
  std::vector<QAPair> validation;
  std::vector<QAPair> test;
};

struct SplitSizes {
  std::size_t train = 2000;
  std::size_t validation = 1000;
  std::size_t test = 2000;
};

/// Immutable passage collection, iterated in ascending pid order.
class Corpus {
 public:
  Corpus() = default;
  /// Validates pids/texts and sorts by pid. Throws DataError on an empty
  /// pid or text, or a duplicate pid.
  explicit Corpus(std::vector<Passage> passages);

  std::size_t size() const { return passages_.size(); }
  bool empty() const { return passages_.empty(); }
  std::span<const Passage> passages() const { return passages_; }
  const Passage& operator[](std::size_t i) const { return passages_[i]; }

  /// nullptr when absent.
  const Passage* find(std::string_view pid) const;
  /// Throws DataError when absent.
  const Passage& at(std::string_view pid) const;
  bool contains(std::string_view pid) const { return find(pid) != nullptr; }
  /// Position of pid in iteration order, or size() when absent.
  std::size_t index_of(std::string_view pid) const;

 private:
  std::vector<Passage> passages_;
};

// JSONL corpus: one {"_id": ..., "text": ...} object per line. Extra fields
// are ignored on read.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// JSONL QA pairs: {"qid": ..., "question": ..., "answers": [...]}.
std::vector<QAPair> load_qa_pairs(const std::filesystem::path& path);
void save_qa_pairs(std::span<const QAPair> pairs, const std::filesystem::path& path);

// Qrels TSV: `qid 0 pid relevance`, whitespace separated. Rows with
// relevance <= 0 are read but not counted as relevant.
Qrels load_qrels(const std::filesystem::path& path);
void save_qrels(const Qrels& qrels, const std::filesystem::path& path);
/// Throws DataError if a qid has no relevant pid or a pid is not in the corpus.
void validate_qrels(const Qrels& qrels, const Corpus& corpus);

/// Seeded uniform sampling without replacement into disjoint train /
/// validation / test sets. The result depends only on the set of pairs
/// (by qid), not on their input order.
DatasetSplit split_qa(std::span<const QAPair> pairs, std::uint64_t seed, SplitSizes sizes);

/// Throws DataError if scores increase or a pid repeats.
void validate_ranked_list(const RankedList& list);

// TREC run format: `qid Q0 pid rank score tag`, scores printed with six
// decimals. Lists are read back in first-appearance order of their qid.
void write_run(std::span<const RankedList> run, const std::filesystem::path& path,
               std::string_view tag = "wrag");
Run read_run(const std::filesystem::path& path);

}  // namespace wrag
