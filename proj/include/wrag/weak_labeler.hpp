// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wrag/corpus_store.hpp"
#include "wrag/llm_gateway.hpp"

namespace wrag {

/// How a candidate's relevance is reduced over a question's answers.
enum class AnswerMode { Max, First };

std::string_view to_string(AnswerMode mode);
AnswerMode parse_answer_mode(std::string_view name);

struct ScoredCandidate {
  std::string pid;
  double score = 0.0;
  std::size_t bm25_rank = 0;  // 1-based position in the first-stage list

  friend bool operator==(const ScoredCandidate&, const ScoredCandidate&) = default;
};

/// One question's candidates reordered by answer likelihood.
/// positive_pid is the rank-1 pid; hard_negative_pids are ranks 2..m+1.
struct WeakLabelRecord {
  std::string qid;
  std::string question;
  std::vector<ScoredCandidate> candidates;
  std::string positive_pid;
  std::vector<std::string> hard_negative_pids;

  friend bool operator==(const WeakLabelRecord&, const WeakLabelRecord&) = default;
};

struct LabelProvenance {
  std::string scorer;
  std::string template_hash;

  friend bool operator==(const LabelProvenance&, const LabelProvenance&) = default;
};

struct WeakLabelSet {
  std::vector<WeakLabelRecord> records;
  LabelProvenance provenance;

  std::size_t size() const { return records.size(); }
  friend bool operator==(const WeakLabelSet&, const WeakLabelSet&) = default;
};

struct RerankOptions {
  AnswerMode answer_mode = AnswerMode::Max;
  std::size_t hard_negatives = 10;
};

/// Scores every (candidate, answer) pair once, reduces per candidate with
/// `answer_mode`, and stable-sorts descending so ties keep first-stage order.
/// Scorer errors propagate; no partial record is returned.
WeakLabelRecord rerank_candidates(RelevanceScorer& scorer, const QAPair& qa,
                                  const RankedList& candidates, const Corpus& corpus,
                                  const RerankOptions& options = {});

struct LabelingOutcome {
  WeakLabelSet labels;
  std::vector<std::string> dropped_qids;  // questions whose scoring failed
};

/// Labels every question that has a candidate list in `first_stage`, in
/// `questions` order. A question whose scoring throws TransportError or
/// DataError is dropped and reported rather than half-labeled.
LabelingOutcome label_questions(RelevanceScorer& scorer, std::span<const QAPair> questions,
                                const Run& first_stage, const Corpus& corpus,
                                const PromptTemplate& tmpl, const RerankOptions& options = {});

struct TrainingPair {
  std::string qid;
  std::string question;
  std::string positive_pid;
  std::string positive_text;
};

struct Triplet {
  std::string qid;
  std::string question;
  std::string positive_pid;
  std::string positive_text;
  std::string negative_pid;
  std::string negative_text;
};

/// One (question, rank-1 passage) pair per record.
std::vector<TrainingPair> extract_two_tower_pairs(const WeakLabelSet& labels, const Corpus& corpus);

struct TripletExtraction {
  std::vector<Triplet> triplets;
  std::size_t skipped_records = 0;  // records with fewer than m + 1 candidates
};

/// m triplets per record: the rank-1 positive against each of ranks 2..m+1.
/// Records that are too short are skipped with a warning on stderr.
TripletExtraction extract_triplets(const WeakLabelSet& labels, const Corpus& corpus, std::size_t m = 10);

struct RecallComparison {
  std::vector<std::size_t> ks;
  std::vector<double> first_stage;  // Recall@k of the BM25 order
  std::vector<double> reranked;     // Recall@k after reranking
};

/// Mean Recall@k before and after reranking. Throws DataError when a qid is
/// missing from qrels.
RecallComparison evaluate_weak_labels(const WeakLabelSet& labels, const Qrels& qrels,
                                      std::span<const std::size_t> ks);

/// The first-stage ordering recovered from the stored bm25 ranks.
RankedList first_stage_order(const WeakLabelRecord& record);
RankedList reranked_order(const WeakLabelRecord& record);

// Line-delimited JSON, one record per line, each carrying the provenance.
void save_weak_labels(const WeakLabelSet& labels, const std::filesystem::path& path);
WeakLabelSet load_weak_labels(const std::filesystem::path& path);

}  // namespace wrag
