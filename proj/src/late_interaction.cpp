// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/late_interaction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binary_io.hpp"
#include "wrag/errors.hpp"
#include "wrag/eval.hpp"
#include "wrag/random.hpp"
#include "wrag/ranking.hpp"
#include "wrag/tokenizer.hpp"

namespace wrag {

LateInteractionModel LateInteractionModel::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  return LateInteractionModel{config, init_params(config, seed)};
}

Matrix LateInteractionModel::embed_question(std::string_view text) const {
  const TokenSeq tokens = tokenize(text);
  if (tokens.empty()) throw InvalidArgument("question has no tokens");
  return forward_tokens(params, token_rows(params, tokens, encoder.query_max_len)).output;
}

Matrix LateInteractionModel::embed_passage(std::string_view text) const {
  const TokenSeq tokens = tokenize(text);
  return forward_tokens(params, token_rows(params, tokens, encoder.passage_max_len)).output;
}

namespace {

void check_operands(const Matrix& query, const Matrix& passage) {
  if (query.empty() || passage.empty()) throw InvalidArgument("MaxSim needs non-empty token matrices");
  if (query.cols() != passage.cols()) throw InvalidArgument("MaxSim dimension mismatch");
}

}  // namespace

std::vector<std::size_t> maxsim_argmax(const Matrix& query, const Matrix& passage) {
  check_operands(query, passage);
  std::vector<std::size_t> best(query.rows(), 0);
  for (std::size_t i = 0; i < query.rows(); ++i) {
    double top = dot(query.row(i), passage.row(0));
    for (std::size_t j = 1; j < passage.rows(); ++j) {
      const double s = dot(query.row(i), passage.row(j));
      if (s > top) {
        top = s;
        best[i] = j;
      }
    }
  }
  return best;
}

double maxsim_score(const Matrix& query, const Matrix& passage) {
  const auto best = maxsim_argmax(query, passage);
  double total = 0.0;
  for (std::size_t i = 0; i < query.rows(); ++i) total += dot(query.row(i), passage.row(best[i]));
  return total;
}

double maxsim_margin(const Matrix& query, const Matrix& passage) {
  const auto argmax = maxsim_argmax(query, passage);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < query.rows(); ++i) {
    const std::size_t best = argmax[i];
    const double top = dot(query.row(i), passage.row(best));
    for (std::size_t j = 0; j < passage.rows(); ++j) {
      if (j == best) continue;
      const auto a = passage.row(j);
      const auto b = passage.row(best);
      if (std::equal(a.begin(), a.end(), b.begin())) continue;
      margin = std::min(margin, top - dot(query.row(i), a));
    }
  }
  return margin;
}

double pairwise_loss(double r_pos, double r_neg, double* grad_pos, double* grad_neg) {
  const double x = r_neg - r_pos;
  const double loss = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  if (!std::isfinite(loss)) throw NumericError("pairwise loss is non-finite");
  const double sigmoid = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  if (grad_pos) *grad_pos = -sigmoid;
  if (grad_neg) *grad_neg = sigmoid;
  return loss;
}

EncodedTriplet encode_triplet(const LateInteractionModel& model, const Triplet& triplet) {
  const TokenSeq q = tokenize(triplet.question);
  if (q.empty()) throw InvalidArgument("triplet question " + triplet.qid + " has no tokens");
  const std::size_t qmax = model.encoder.query_max_len;
  const std::size_t pmax = model.encoder.passage_max_len;
  return EncodedTriplet{token_rows(model.params, q, qmax),
                        token_rows(model.params, tokenize(triplet.positive_text), pmax),
                        token_rows(model.params, tokenize(triplet.negative_text), pmax)};
}

namespace {

// Adds dR/dQ and dR/dS (scaled by `weight`) for R = MaxSim(Q, S).
void maxsim_backward(const Matrix& q, const Matrix& s, double weight, Matrix& grad_q, Matrix& grad_s) {
  const auto best = maxsim_argmax(q, s);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    auto gq = grad_q.row(i);
    auto gs = grad_s.row(best[i]);
    const auto qi = q.row(i);
    const auto sj = s.row(best[i]);
    for (std::size_t c = 0; c < q.cols(); ++c) {
      gq[c] += weight * sj[c];
      gs[c] += weight * qi[c];
    }
  }
}

}  // namespace

double accumulate_pairwise(const EncoderParams& params, std::span<const EncodedTriplet> batch,
                           std::span<double> grads) {
  if (batch.empty()) throw InvalidArgument("pairwise batch is empty");
  if (grads.size() != params.size()) throw InvalidArgument("gradient buffer has the wrong size");
  double total = 0.0;
  for (const EncodedTriplet& t : batch) {
    const TokenForward q = forward_tokens(params, t.question_rows);
    const TokenForward pos = forward_tokens(params, t.positive_rows);
    const TokenForward neg = forward_tokens(params, t.negative_rows);
    double g_pos = 0.0, g_neg = 0.0;
    total += pairwise_loss(maxsim_score(q.output, pos.output), maxsim_score(q.output, neg.output), &g_pos, &g_neg);
    Matrix gq(q.output.rows(), params.dim), gp(pos.output.rows(), params.dim), gn(neg.output.rows(), params.dim);
    maxsim_backward(q.output, pos.output, g_pos, gq, gp);
    maxsim_backward(q.output, neg.output, g_neg, gq, gn);
    backward_tokens(params, q, gq, grads);
    backward_tokens(params, pos, gp, grads);
    backward_tokens(params, neg, gn, grads);
  }
  return total;
}

PairwiseResult pairwise_loss_and_grads(const LateInteractionModel& model, const Triplet& triplet) {
  if (tokenize(triplet.positive_text).empty() || tokenize(triplet.negative_text).empty()) {
    throw InvalidArgument("triplet " + triplet.qid + " has a passage without tokens");
  }
  const EncodedTriplet encoded = encode_triplet(model, triplet);
  PairwiseResult r;
  r.grads.assign(model.params.size(), 0.0);
  r.loss = accumulate_pairwise(model.params, std::span(&encoded, 1), r.grads);
  return r;
}

LateInteractionTrainingConfig LateInteractionTrainingConfig::full_scale_defaults() {
  LateInteractionTrainingConfig c;
  c.batch_size = 64;
  c.epochs = 1;
  c.hard_negatives = 10;
  c.optimizer.learning_rate = 1e-5;
  return c;
}

void LateInteractionTrainingConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (hard_negatives < 1) throw InvalidArgument("hard negatives must be >= 1");
  encoder.validate();
}

namespace {

double validation_recall(const LateInteractionModel& model, const ValidationSet& validation) {
  const TokenEmbeddingStore store = build_token_store(model, *validation.corpus);
  return recall_at_k(search_maxsim_run(model, store, validation.questions, 5), *validation.qrels, 5);
}

}  // namespace

LateInteractionTrainingResult train_late_interaction(const LateInteractionTrainingConfig& config,
                                                     std::span<const Triplet> triplets,
                                                     const ValidationSet& validation,
                                                     std::optional<LateInteractionModel> initial) {
  config.validate();
  if (triplets.empty()) throw InvalidArgument("no training triplets");
  validation.validate();

  LateInteractionTrainingResult result;
  result.model = initial ? std::move(*initial) : LateInteractionModel::init(config.encoder, config.seed);
  result.optimizer = OptimizerState::zeros(result.model.params.size(), config.optimizer);
  if (config.epochs == 0) return result;

  std::vector<EncodedTriplet> encoded;
  encoded.reserve(triplets.size());
  for (const Triplet& t : triplets) encoded.push_back(encode_triplet(result.model, t));

  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  LateInteractionModel model = result.model;
  OptimizerState optimizer = result.optimizer;
  std::vector<double> grads(model.params.size(), 0.0);
  std::vector<std::size_t> order(encoded.size());
  std::vector<EncodedTriplet> batch;
  std::optional<double> best_recall;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(encoded[order[i]]);
      std::fill(grads.begin(), grads.end(), 0.0);
      const double loss = accumulate_pairwise(model.params, batch, grads);
      adam_step(optimizer, model.params.values, grads);
      entry.total_loss += loss;
      result.log.step_losses.push_back(loss / static_cast<double>(batch.size()));
    }
    entry.mean_loss = entry.total_loss / static_cast<double>(encoded.size());

    bool keep = !validation.enabled() && epoch == config.epochs;
    if (validation.enabled()) {
      entry.recall_at_5 = validation_recall(model, validation);
      keep = !best_recall || *entry.recall_at_5 > *best_recall;
      if (keep) best_recall = entry.recall_at_5;
    }
    if (keep) {
      result.model = model;
      result.optimizer = optimizer;
      result.log.best_epoch = epoch;
    }
    result.log.epochs.push_back(entry);
  }
  return result;
}

TokenEmbeddingStore build_token_store(const LateInteractionModel& model, const Corpus& corpus) {
  if (corpus.empty()) throw InvalidArgument("cannot encode an empty corpus");
  TokenEmbeddingStore store;
  store.encoder_checksum = model.checksum();
  store.pids.reserve(corpus.size());
  store.matrices.reserve(corpus.size());
  for (const Passage& p : corpus.passages()) {
    const TokenSeq tokens = tokenize(p.text);
    if (tokens.empty()) ++store.empty_passages;
    store.pids.push_back(p.pid);
    store.matrices.push_back(
        forward_tokens(model.params, token_rows(model.params, tokens, model.encoder.passage_max_len)).output);
  }
  return store;
}

std::vector<ScoredPid> search_maxsim(const TokenEmbeddingStore& store, const Matrix& query, std::size_t k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  std::vector<double> scores(store.pids.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = maxsim_score(query, store.matrices[i]);
  return top_k(scores, store.pids, k);
}

std::vector<ScoredPid> search_maxsim(const LateInteractionModel& model, const TokenEmbeddingStore& store,
                                     std::string_view question, std::size_t k) {
  if (store.encoder_checksum != model.checksum()) {
    throw DataError("token store was produced by a different encoder (checksum mismatch)");
  }
  return search_maxsim(store, model.embed_question(question), k);
}

Run search_maxsim_run(const LateInteractionModel& model, const TokenEmbeddingStore& store,
                      std::span<const QAPair> questions, std::size_t k) {
  Run run;
  run.reserve(questions.size());
  for (const QAPair& qa : questions) run.push_back(RankedList{qa.qid, search_maxsim(model, store, qa.question, k)});
  return run;
}

namespace {

constexpr std::string_view kStoreMagic = "WRAGTOKS";
constexpr std::uint32_t kStoreVersion = 1;

}  // namespace

void save_token_store(const TokenEmbeddingStore& store, const std::filesystem::path& path) {
  io::BinaryWriter out(path, kStoreMagic, kStoreVersion);
  out.put(store.encoder_checksum);
  out.put(static_cast<std::uint64_t>(store.empty_passages));
  out.put(static_cast<std::uint64_t>(store.pids.size()));
  for (std::size_t i = 0; i < store.pids.size(); ++i) {
    out.put(std::string_view(store.pids[i]));
    out.put(static_cast<std::uint64_t>(store.matrices[i].rows()));
    out.put(static_cast<std::uint64_t>(store.matrices[i].cols()));
    out.put(store.matrices[i].data());
  }
  out.finish();
}

TokenEmbeddingStore load_token_store(const std::filesystem::path& path) {
  io::BinaryReader in(path, kStoreMagic);
  if (in.version() != kStoreVersion) throw DataError(path.string() + ": unsupported token store version");
  TokenEmbeddingStore store;
  store.encoder_checksum = in.get<std::uint64_t>();
  store.empty_passages = in.get<std::uint64_t>();
  const auto n = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    store.pids.push_back(in.get_string());
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    store.matrices.emplace_back(rows, cols, in.get_vector<double>());
  }
  in.expect_end();
  return store;
}

Checkpoint to_checkpoint(const LateInteractionModel& model, const OptimizerState& optimizer,
                         const LateInteractionTrainingConfig& config) {
  Checkpoint c;
  c.model_kind = "late-interaction";
  c.encoder = model.encoder;
  c.settings = {{"batch_size", std::to_string(config.batch_size)},
                {"epochs", std::to_string(config.epochs)},
                {"hard_negatives", std::to_string(config.hard_negatives)},
                {"seed", std::to_string(config.seed)}};
  c.towers.push_back(model.params);
  c.optimizers.push_back(optimizer);
  return c;
}

LateInteractionModel late_interaction_from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.model_kind != "late-interaction") {
    throw DataError("checkpoint holds a " + checkpoint.model_kind + " model, not late-interaction");
  }
  if (checkpoint.towers.size() != 1) throw DataError("late-interaction checkpoint needs exactly 1 tower");
  return LateInteractionModel{checkpoint.encoder, checkpoint.towers[0]};
}

}  // namespace wrag
