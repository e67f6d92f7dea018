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

namespace wrag {

// Retrieval metrics. Every run qid must be in qrels (DataError otherwise);
// means are taken over the run's questions.

/// |top-k ∩ relevant| / |relevant| per question.
std::vector<double> recall_per_question(const Run& run, const Qrels& qrels, std::size_t k);
double recall_at_k(const Run& run, const Qrels& qrels, std::size_t k);
/// 1 / rank of the first relevant pid within the top k, else 0.
std::vector<double> mrr_per_question(const Run& run, const Qrels& qrels, std::size_t k);
double mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k);

// Answer metrics over shared-tokenizer tokens. All return 0 when either side
// has no tokens.

/// Harmonic mean of multiset-overlap precision and recall.
double token_f1(std::string_view generated, std::string_view reference);
/// LCS-based F-measure with beta = 1.
double rouge_l(std::string_view generated, std::string_view reference);
/// Clipped unigram precision times min(1, exp(1 - |ref| / |gen|)).
double bleu_1(std::string_view generated, std::string_view reference);

struct AnswerScores {
  double f1 = 0.0;
  double rouge_l = 0.0;
  double bleu_1 = 0.0;
  std::size_t answer_index = 0;

  double total() const { return f1 + rouge_l + bleu_1; }
};

/// Scores against every reference and keeps the one with the largest
/// F1 + Rouge-L + BLEU-1 (earliest on ties).
AnswerScores best_answer_scores(std::string_view generated, std::span<const std::string> answers);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Two-sided paired t-test on a - b with n - 1 degrees of freedom.
/// Zero-variance differences give t = 0, p = 1 when they are all zero and
/// t = ±inf, p = 0 otherwise. Throws InvalidArgument on a length mismatch
/// or n < 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct Comparison {
  std::string metric;
  std::string baseline;
  double t = 0.0;
  double p = 1.0;
};

/// Per-question scores for a set of metrics, plus their means and optional
/// significance annotations.
struct MetricReport {
  std::string label;
  std::vector<std::string> qids;
  std::vector<std::string> metrics;
  std::vector<std::vector<double>> per_question;  // [metric][question]
  std::vector<Comparison> comparisons;

  double mean(std::string_view metric) const;
  const std::vector<double>& scores(std::string_view metric) const;
};

/// Metrics named "recall@k" and "mrr@k".
MetricReport evaluate_retrieval(const Run& run, const Qrels& qrels, std::span<const std::size_t> recall_ks,
                                std::span<const std::size_t> mrr_ks, std::string label = "");

/// "f1", "rouge_l" and "bleu_1" using the best answer per question. Throws
/// DataError if a question has no generation.
MetricReport evaluate_qa(const std::map<std::string, std::string, std::less<>>& generations,
                         std::span<const QAPair> qa_pairs, std::string label = "");

/// Adds a paired t-test against `baseline` for every metric both reports
/// share, pairing questions by qid.
void annotate_against(MetricReport& report, const MetricReport& baseline);

// TSV: `system  metric  mean  n  baseline  t  p` (last three empty without a
// comparison). JSON: array of reports with means, comparisons and
// per-question scores.
void write_report_tsv(std::span<const MetricReport> reports, const std::filesystem::path& path);
void write_report_json(std::span<const MetricReport> reports, const std::filesystem::path& path);

}  // namespace wrag
