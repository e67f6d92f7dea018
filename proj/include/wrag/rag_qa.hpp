// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wrag/bm25.hpp"
#include "wrag/corpus_store.hpp"
#include "wrag/late_interaction.hpp"
#include "wrag/llm_gateway.hpp"
#include "wrag/two_tower.hpp"

namespace wrag {

enum class RetrieverKind { Bm25, TwoTower, LateInteraction, None, Gold };

std::string_view to_string(RetrieverKind kind);
/// "bm25", "two-tower", "late-interaction", "none" or "gold".
RetrieverKind parse_retriever_kind(std::string_view name);

struct QAConfig {
  RetrieverKind retriever = RetrieverKind::Bm25;
  std::size_t top_n = 1;
  int max_tokens = kDefaultMaxAnswerTokens;

  /// Throws InvalidArgument if max_tokens < 1.
  void validate() const;
};

/// Something that returns up to n pids for a question, best first.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual RetrieverKind kind() const = 0;
  virtual std::vector<std::string> retrieve(const QAPair& qa, std::size_t n) = 0;
};

class Bm25Retriever final : public Retriever {
 public:
  explicit Bm25Retriever(const Bm25Index& index) : index_(index) {}
  RetrieverKind kind() const override { return RetrieverKind::Bm25; }
  std::vector<std::string> retrieve(const QAPair& qa, std::size_t n) override;

 private:
  const Bm25Index& index_;
};

class TwoTowerRetriever final : public Retriever {
 public:
  TwoTowerRetriever(const TwoTowerModel& model, const EmbeddingMatrix& matrix) : model_(model), matrix_(matrix) {}
  RetrieverKind kind() const override { return RetrieverKind::TwoTower; }
  std::vector<std::string> retrieve(const QAPair& qa, std::size_t n) override;

 private:
  const TwoTowerModel& model_;
  const EmbeddingMatrix& matrix_;
};

class LateInteractionRetriever final : public Retriever {
 public:
  LateInteractionRetriever(const LateInteractionModel& model, const TokenEmbeddingStore& store)
      : model_(model), store_(store) {}
  RetrieverKind kind() const override { return RetrieverKind::LateInteraction; }
  std::vector<std::string> retrieve(const QAPair& qa, std::size_t n) override;

 private:
  const LateInteractionModel& model_;
  const TokenEmbeddingStore& store_;
};

/// The no-retrieval baseline.
class NoRetriever final : public Retriever {
 public:
  RetrieverKind kind() const override { return RetrieverKind::None; }
  std::vector<std::string> retrieve(const QAPair&, std::size_t) override { return {}; }
};

/// Judged-relevant pids in ascending pid order. Throws DataError for a qid
/// without qrels.
class GoldRetriever final : public Retriever {
 public:
  explicit GoldRetriever(const Qrels& qrels) : qrels_(qrels) {}
  RetrieverKind kind() const override { return RetrieverKind::Gold; }
  std::vector<std::string> retrieve(const QAPair& qa, std::size_t n) override;

 private:
  const Qrels& qrels_;
};

struct QAAnswer {
  std::string qid;
  std::string answer;
  std::vector<std::string> used_pids;
  double latency_ms = 0.0;  // generation call only

  friend bool operator==(const QAAnswer&, const QAAnswer&) = default;
};

/// Retrieves top_n pids, builds the QA prompt from their texts and generates.
/// Throws InvalidArgument if the retriever does not match config.retriever.
QAAnswer answer_question(const QAConfig& config, const QAPair& qa, Retriever& retriever, const Corpus& corpus,
                         AnswerGenerator& generator, const PromptTemplate& tmpl = {});

struct QABatchResult {
  std::vector<QAAnswer> answers;  // input order
  std::size_t generated = 0;      // new generations in this call
  std::size_t resumed = 0;        // answers reused from the output file

  double mean_latency_ms() const;
};

/// Answers every question. With an output path, each answer is appended as
/// one JSONL line as soon as it exists; qids already in the file are reused
/// rather than regenerated, and `<output>.partial` marks an unfinished batch
/// until the last answer is written. Generation errors propagate after the
/// completed answers are on disk.
QABatchResult run_qa_batch(const QAConfig& config, std::span<const QAPair> qa_pairs, Retriever& retriever,
                           const Corpus& corpus, AnswerGenerator& generator, const PromptTemplate& tmpl = {},
                           const std::optional<std::filesystem::path>& output = std::nullopt);

// JSONL: {"qid", "answer", "used_pids", "latency_ms"} per line.
std::vector<QAAnswer> load_generations(const std::filesystem::path& path);
std::map<std::string, std::string, std::less<>> generations_by_qid(std::span<const QAAnswer> answers);

}  // namespace wrag
