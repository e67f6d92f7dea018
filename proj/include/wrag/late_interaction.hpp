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
#include "wrag/two_tower.hpp"
#include "wrag/weak_labeler.hpp"

namespace wrag {

/// Token-level retriever; questions and passages share one encoder.
struct LateInteractionModel {
  EncoderConfig encoder;
  EncoderParams params;

  static LateInteractionModel init(const EncoderConfig& config, std::uint64_t seed);

  std::uint64_t checksum() const { return params.checksum(); }
  /// Throws InvalidArgument if the question has no tokens.
  Matrix embed_question(std::string_view text) const;
  /// Texts without tokens get the reserved oov rows.
  Matrix embed_passage(std::string_view text) const;

  friend bool operator==(const LateInteractionModel&, const LateInteractionModel&) = default;
};

/// Σ_i max_j dot(q_i, s_j). Throws InvalidArgument on an empty operand or a
/// dimension mismatch.
double maxsim_score(const Matrix& query, const Matrix& passage);

/// For every query row, the passage row holding its maximum (lowest index
/// on ties).
std::vector<std::size_t> maxsim_argmax(const Matrix& query, const Matrix& passage);

/// Gap between the best and second-best passage row, minimised over query
/// rows; +inf with a single passage row. Rows whose dot products tie exactly
/// because they are the same token are not counted as ties.
double maxsim_margin(const Matrix& query, const Matrix& passage);

/// -log(e^{R+} / (e^{R+} + e^{R-})), evaluated as softplus(R- - R+).
/// Optional outputs receive dLoss/dR+ and dLoss/dR-.
double pairwise_loss(double r_pos, double r_neg, double* grad_pos = nullptr, double* grad_neg = nullptr);

struct EncodedTriplet {
  std::vector<std::size_t> question_rows;
  std::vector<std::size_t> positive_rows;
  std::vector<std::size_t> negative_rows;
};

/// Throws InvalidArgument if the question tokenizes empty.
EncodedTriplet encode_triplet(const LateInteractionModel& model, const Triplet& triplet);

/// Accumulates gradients of the summed batch loss into `grads`; returns the
/// loss.
double accumulate_pairwise(const EncoderParams& params, std::span<const EncodedTriplet> batch,
                           std::span<double> grads);

struct PairwiseResult {
  double loss = 0.0;
  std::vector<double> grads;
};

/// Loss and gradient for one triplet. Throws InvalidArgument if any text has
/// no tokens, NumericError on a non-finite intermediate.
PairwiseResult pairwise_loss_and_grads(const LateInteractionModel& model, const Triplet& triplet);

struct LateInteractionTrainingConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 3;
  std::size_t hard_negatives = 4;
  AdamWConfig optimizer{.learning_rate = 5e-3};
  std::uint64_t seed = 13;
  EncoderConfig encoder;

  /// batch 64, 1 epoch, 10 hard negatives, learning rate 1e-5.
  static LateInteractionTrainingConfig full_scale_defaults();
  void validate() const;
};

struct LateInteractionTrainingResult {
  LateInteractionModel model;
  OptimizerState optimizer;
  TrainingLog log;
};

/// Seeded shuffled batches of triplets, one AdamW step per batch, Recall@5
/// after every epoch with the best epoch kept (the last one without a
/// validation set). epochs = 0 returns the initial model.
LateInteractionTrainingResult train_late_interaction(const LateInteractionTrainingConfig& config,
                                                     std::span<const Triplet> triplets,
                                                     const ValidationSet& validation,
                                                     std::optional<LateInteractionModel> initial = std::nullopt);

/// Per-passage token matrices in corpus order.
struct TokenEmbeddingStore {
  std::vector<std::string> pids;
  std::vector<Matrix> matrices;
  std::uint64_t encoder_checksum = 0;
  std::size_t empty_passages = 0;

  friend bool operator==(const TokenEmbeddingStore&, const TokenEmbeddingStore&) = default;
};

TokenEmbeddingStore build_token_store(const LateInteractionModel& model, const Corpus& corpus);

/// Exhaustive MaxSim; ties by ascending pid. Throws InvalidArgument if k < 1.
std::vector<ScoredPid> search_maxsim(const TokenEmbeddingStore& store, const Matrix& query, std::size_t k);
/// Throws DataError if the store came from a different encoder.
std::vector<ScoredPid> search_maxsim(const LateInteractionModel& model, const TokenEmbeddingStore& store,
                                     std::string_view question, std::size_t k);
Run search_maxsim_run(const LateInteractionModel& model, const TokenEmbeddingStore& store,
                      std::span<const QAPair> questions, std::size_t k);

void save_token_store(const TokenEmbeddingStore& store, const std::filesystem::path& path);
TokenEmbeddingStore load_token_store(const std::filesystem::path& path);

Checkpoint to_checkpoint(const LateInteractionModel& model, const OptimizerState& optimizer,
                         const LateInteractionTrainingConfig& config);
LateInteractionModel late_interaction_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace wrag
