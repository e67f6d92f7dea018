// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wrag/corpus_store.hpp"
#include "wrag/encoder.hpp"
#include "wrag/weak_labeler.hpp"

namespace wrag {

/// Bi-encoder scored by cosine similarity of unit embeddings. The passage
/// tower shares the question tower's weights unless `passage` is set.
struct TwoTowerModel {
  EncoderConfig encoder;
  EncoderParams query;
  std::optional<EncoderParams> passage;

  static TwoTowerModel init(const EncoderConfig& config, std::uint64_t seed, bool separate_towers = false);

  bool shared() const { return !passage.has_value(); }
  const EncoderParams& passage_encoder() const { return passage ? *passage : query; }
  std::uint64_t checksum() const;

  std::vector<double> embed_question(std::string_view text) const;
  /// Texts without tokens get the reserved oov embedding.
  std::vector<double> embed_passage(std::string_view text) const;

  friend bool operator==(const TwoTowerModel&, const TwoTowerModel&) = default;
};

/// Dot product of two unit vectors. Throws InvalidArgument on a dimension
/// mismatch.
double cosine_score(std::span<const double> question, std::span<const double> passage);

/// Summed in-batch-negative loss from an n x n cosine matrix (row i =
/// question i, column j = passage j, positives on the diagonal), computed
/// with a max shift after scaling by alpha. Writes dLoss/dCosine when
/// grad_cos is given.
double mnr_loss_from_scores(const Matrix& cos, double alpha, Matrix* grad_cos = nullptr);

struct TwoTowerGrads {
  std::vector<double> query;
  std::vector<double> passage;  // empty when towers are shared

  static TwoTowerGrads zeros_like(const TwoTowerModel& model);
  void zero();
};

/// A training pair with its tokens already mapped to embedding rows.
struct EncodedPair {
  std::vector<std::size_t> question_rows;
  std::vector<std::size_t> passage_rows;
  std::string positive_pid;
};

EncodedPair encode_pair(const TwoTowerModel& model, const TrainingPair& pair);

/// Accumulates gradients of the batch loss into `grads`; returns the loss.
double accumulate_mnr(const TwoTowerModel& model, std::span<const EncodedPair> batch, double alpha,
                      TwoTowerGrads& grads);

struct MnrResult {
  double loss = 0.0;
  TwoTowerGrads grads;
};

/// Loss = -Σ_i log softmax_j(alpha * cos(q_i, s_j))_i over the batch and its
/// gradient through both towers. Throws InvalidArgument on an empty batch,
/// NumericError on a non-finite intermediate.
MnrResult mnr_loss_and_grads(const TwoTowerModel& model, std::span<const TrainingPair> batch, double alpha);

struct TwoTowerTrainingConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double alpha = 20.0;
  AdamWConfig optimizer{.learning_rate = 5e-3};
  std::uint64_t seed = 13;
  bool separate_towers = false;
  /// Defer pairs whose positive already appears in the batch being formed.
  bool redraw_duplicates = false;
  EncoderConfig encoder;

  /// batch 128, 20 epochs, learning rate 2e-5.
  static TwoTowerTrainingConfig full_scale_defaults();
  void validate() const;
};

/// Questions, judgments and passages used for per-epoch Recall@5.
struct ValidationSet {
  std::span<const QAPair> questions;
  const Qrels* qrels = nullptr;
  const Corpus* corpus = nullptr;

  bool enabled() const { return !questions.empty() && qrels != nullptr && corpus != nullptr; }
  /// Throws DataError if a validation qid has no qrels or a gold pid is
  /// missing from the corpus.
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;  // per example
  double total_loss = 0.0;
  std::optional<double> recall_at_5;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;  // per-example mean loss of every step
  std::size_t best_epoch = 0;       // 0 = the initial parameters
  std::size_t duplicate_batches = 0;
};

/// Index (0-based) of the first maximum; the checkpoint-selection rule.
std::size_t select_best_epoch(std::span<const double> validation_recalls);

struct TwoTowerTrainingResult {
  TwoTowerModel model;
  std::vector<OptimizerState> optimizer;  // one per tower
  TrainingLog log;
};

/// Seeded shuffled batches, AdamW per step, Recall@5 after every epoch; the
/// best-Recall@5 epoch's parameters are returned (the last epoch when no
/// validation set is given). epochs = 0 returns the initial model.
TwoTowerTrainingResult train_two_tower(const TwoTowerTrainingConfig& config, std::span<const TrainingPair> pairs,
                                       const ValidationSet& validation,
                                       std::optional<TwoTowerModel> initial = std::nullopt);

/// Passage embeddings in corpus (ascending pid) order.
struct EmbeddingMatrix {
  std::vector<std::string> pids;
  Matrix vectors;
  std::uint64_t encoder_checksum = 0;
  std::size_t empty_passages = 0;  // passages that fell back to the oov embedding

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

EmbeddingMatrix encode_corpus(const TwoTowerModel& model, const Corpus& corpus);

/// Exhaustive dot-product search; ties by ascending pid. Throws
/// InvalidArgument if k < 1.
std::vector<ScoredPid> search(const EmbeddingMatrix& matrix, std::span<const double> query, std::size_t k);
/// Embeds the question first. Throws DataError if the matrix was produced by
/// a different encoder.
std::vector<ScoredPid> search(const TwoTowerModel& model, const EmbeddingMatrix& matrix,
                              std::string_view question, std::size_t k);

Run search_run(const TwoTowerModel& model, const EmbeddingMatrix& matrix, std::span<const QAPair> questions,
               std::size_t k);

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

Checkpoint to_checkpoint(const TwoTowerModel& model, std::span<const OptimizerState> optimizer,
                         const TwoTowerTrainingConfig& config);
TwoTowerModel two_tower_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace wrag
