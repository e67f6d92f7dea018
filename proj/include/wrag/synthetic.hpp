// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "wrag/corpus_store.hpp"

namespace wrag {

/// Knobs for the bundled toy OpenQA dataset.
///
/// Each question asks for a relation of a two-word nonce entity and has one
/// gold passage stating the answer verbatim. Questions and passages name a
/// relation with different words ("hue" vs "color"), and every entity is
/// asked about several relations, so lexical matching cannot tell an
/// entity's gold passages apart. Answers are pairs of words drawn from a
/// shared pool, so no single answer word identifies a passage. Gold passages
/// continue with words from their own small vocabulary; background passages
/// use a separate filler vocabulary.
struct SyntheticConfig {
  std::size_t questions = 200;
  std::size_t passages = 5000;
  std::size_t relations_per_entity = 12;  // consecutive questions share an entity
  std::size_t filler_vocabulary = 300;
  std::size_t gold_vocabulary = 100;
  std::size_t answer_vocabulary = 60;  // answers are distinct ordered word pairs
  std::size_t gold_filler_min = 4;
  std::size_t gold_filler_max = 12;
  std::size_t background_min = 6;
  std::size_t background_max = 30;
  double second_answer_rate = 0.2;
  std::uint64_t seed = 7;

  /// Throws InvalidArgument if the passages cannot hold every gold passage,
  /// relations_per_entity is out of range or a length range is inverted.
  void validate() const;
};

struct SyntheticDataset {
  Corpus corpus;
  std::vector<QAPair> qa_pairs;  // ascending qid
  Qrels qrels;
};

SyntheticDataset make_synthetic(const SyntheticConfig& config = {});

/// Writes corpus.jsonl, qa.jsonl and qrels.tsv into `dir` (created if needed).
void save_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& dir);

}  // namespace wrag
