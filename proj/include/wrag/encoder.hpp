// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wrag {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);

struct EncoderConfig {
  std::size_t vocab_size = std::size_t{1} << 16;
  std::size_t dim = 64;
  std::size_t oov_buckets = 1;
  std::size_t query_max_len = 32;
  std::size_t passage_max_len = 180;

  /// Throws InvalidArgument unless vocab >= oov >= 1, dim >= 2 and both
  /// max lengths are >= 1.
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Hashed token-embedding table followed by one linear projection.
///
/// Tokens hash (FNV-1a) into rows [oov_buckets, vocab_size); rows below
/// oov_buckets are reserved and their mean stands in for texts without any
/// token. `values` holds the embedding table (vocab_size x dim) followed by
/// the projection (dim x dim), so optimizers and gradient checks can treat
/// the encoder as one flat vector.
struct EncoderParams {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  std::size_t oov_buckets = 1;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  std::span<double> embedding() { return {values.data(), vocab_size * dim}; }
  std::span<const double> embedding() const { return {values.data(), vocab_size * dim}; }
  std::span<double> projection() { return {values.data() + vocab_size * dim, dim * dim}; }
  std::span<const double> projection() const { return {values.data() + vocab_size * dim, dim * dim}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * dim, dim}; }

  std::size_t row_of(std::string_view token) const;
  /// FNV-1a over shape and values; identifies the encoder that produced an
  /// embedding store.
  std::uint64_t checksum() const;
  /// Throws NumericError on a non-finite entry, InvalidArgument on a bad shape.
  void validate() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Embedding entries uniform in [-1/sqrt(dim), 1/sqrt(dim)] from a seeded
/// generator; projection starts as the identity.
EncoderParams init_params(std::size_t vocab_size, std::size_t dim, std::uint64_t seed,
                          std::size_t oov_buckets = 1);
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

/// Row indices for a token sequence, truncated to max_len. An empty sequence
/// maps to the reserved oov rows.
std::vector<std::size_t> token_rows(const EncoderParams& params, std::span<const std::string> tokens,
                                    std::size_t max_len);

/// Intermediates of the mean-pooled path, kept for the backward pass.
struct PooledForward {
  std::vector<std::size_t> rows;
  std::vector<double> mean;
  std::vector<double> projected;
  double norm = 0.0;
  std::vector<double> output;  // unit vector
};

PooledForward forward_mean_pooled(const EncoderParams& params, std::span<const std::size_t> rows);
/// Accumulates dLoss/dParams into `grads` (same layout as params.values).
void backward_mean_pooled(const EncoderParams& params, const PooledForward& forward,
                          std::span<const double> grad_output, std::span<double> grads);

/// normalize(projection * mean(token rows)). Throws InvalidArgument on an
/// empty token sequence.
std::vector<double> embed_mean_pooled(const EncoderParams& params, std::span<const std::string> tokens);

struct TokenForward {
  std::vector<std::size_t> rows;
  Matrix projected;
  std::vector<double> norms;
  Matrix output;  // unit rows
};

TokenForward forward_tokens(const EncoderParams& params, std::span<const std::size_t> rows);
void backward_tokens(const EncoderParams& params, const TokenForward& forward, const Matrix& grad_output,
                     std::span<double> grads);

/// One unit row per token (no positional information; equal tokens give
/// equal rows), truncated to max_len. Throws InvalidArgument on empty input.
Matrix embed_tokens(const EncoderParams& params, std::span<const std::string> tokens, std::size_t max_len);

// ---------------------------------------------------------------------------
// AdamW

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

struct OptimizerState {
  AdamWConfig hyper;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  static OptimizerState zeros(std::size_t size, AdamWConfig hyper);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Bias-corrected adaptive-moment update with decoupled weight decay:
/// p -= lr * wd * p, then p -= lr * m_hat / (sqrt(v_hat) + eps).
/// Throws NumericError on a non-finite gradient (state left untouched).
void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grads);

// ---------------------------------------------------------------------------
// Gradient verification

using LossFunction = std::function<double(std::span<const double>)>;

/// Compares `analytic` with central differences (f(x+h) - f(x-h)) / 2h on
/// `probe_count` random coordinates of `point` (all of them if fewer).
/// Returns max |analytic - numeric| / max(1e-8, |numeric|). Throws
/// NumericError on a non-finite loss.
double finite_diff_check(const LossFunction& loss, std::span<const double> point,
                         std::span<const double> analytic, std::size_t probe_count = 64,
                         double h = 1e-4, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Checkpoints

/// Everything needed to resume or serve a trained retriever.
struct Checkpoint {
  std::string model_kind;
  EncoderConfig encoder;
  std::map<std::string, std::string> settings;
  std::vector<EncoderParams> towers;
  std::vector<OptimizerState> optimizers;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Binary file: magic "WRAGCKPT", format version, then the fields above.
// Doubles round-trip bit-exactly.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wrag
