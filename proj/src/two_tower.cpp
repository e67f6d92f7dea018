// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/two_tower.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <unordered_set>

#include "binary_io.hpp"
#include "wrag/errors.hpp"
#include "wrag/eval.hpp"
#include "wrag/hash.hpp"
#include "wrag/random.hpp"
#include "wrag/ranking.hpp"
#include "wrag/tokenizer.hpp"

namespace wrag {

TwoTowerModel TwoTowerModel::init(const EncoderConfig& config, std::uint64_t seed, bool separate_towers) {
  config.validate();
  TwoTowerModel m;
  m.encoder = config;
  m.query = init_params(config, seed);
  if (separate_towers) m.passage = init_params(config, seed + 1);
  return m;
}

std::uint64_t TwoTowerModel::checksum() const {
  const std::uint64_t h = query.checksum();
  return passage ? fnv1a64(to_hex(passage->checksum()), h) : h;
}

std::vector<double> TwoTowerModel::embed_question(std::string_view text) const {
  const TokenSeq tokens = tokenize(text);
  return forward_mean_pooled(query, token_rows(query, tokens, encoder.query_max_len)).output;
}

std::vector<double> TwoTowerModel::embed_passage(std::string_view text) const {
  const TokenSeq tokens = tokenize(text);
  const EncoderParams& p = passage_encoder();
  return forward_mean_pooled(p, token_rows(p, tokens, encoder.passage_max_len)).output;
}

double cosine_score(std::span<const double> question, std::span<const double> passage) {
  return dot(question, passage);
}

double mnr_loss_from_scores(const Matrix& cos, double alpha, Matrix* grad_cos) {
  const std::size_t n = cos.rows();
  if (n == 0 || cos.cols() != n) throw InvalidArgument("MNR needs a non-empty square score matrix");
  if (grad_cos) *grad_cos = Matrix(n, n);
  double loss = 0.0;
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = alpha * cos(i, j);
      top = std::max(top, logits[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(logits[j] - top);
    const double log_z = top + std::log(z);
    loss += log_z - logits[i];
    if (grad_cos) {
      for (std::size_t j = 0; j < n; ++j) {
        const double softmax = std::exp(logits[j] - log_z);
        (*grad_cos)(i, j) = alpha * (softmax - (i == j ? 1.0 : 0.0));
      }
    }
  }
  if (!std::isfinite(loss)) throw NumericError("MNR loss is non-finite");
  return loss;
}

TwoTowerGrads TwoTowerGrads::zeros_like(const TwoTowerModel& model) {
  TwoTowerGrads g;
  g.query.assign(model.query.size(), 0.0);
  if (model.passage) g.passage.assign(model.passage->size(), 0.0);
  return g;
}

void TwoTowerGrads::zero() {
  std::fill(query.begin(), query.end(), 0.0);
  std::fill(passage.begin(), passage.end(), 0.0);
}

EncodedPair encode_pair(const TwoTowerModel& model, const TrainingPair& pair) {
  return EncodedPair{token_rows(model.query, tokenize(pair.question), model.encoder.query_max_len),
                     token_rows(model.passage_encoder(), tokenize(pair.positive_text), model.encoder.passage_max_len),
                     pair.positive_pid};
}

double accumulate_mnr(const TwoTowerModel& model, std::span<const EncodedPair> batch, double alpha,
                      TwoTowerGrads& grads) {
  const std::size_t n = batch.size();
  if (n == 0) throw InvalidArgument("MNR batch is empty");
  const EncoderParams& ptower = model.passage_encoder();
  std::vector<PooledForward> qf, pf;
  qf.reserve(n);
  pf.reserve(n);
  for (const EncodedPair& p : batch) {
    qf.push_back(forward_mean_pooled(model.query, p.question_rows));
    pf.push_back(forward_mean_pooled(ptower, p.passage_rows));
  }
  Matrix cos(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cos(i, j) = dot(qf[i].output, pf[j].output);
  }
  Matrix g;
  const double loss = mnr_loss_from_scores(cos, alpha, &g);

  const std::size_t d = model.query.dim;
  std::span<double> pgrads = model.passage ? std::span<double>(grads.passage) : std::span<double>(grads.query);
  std::vector<double> gq(d), gs(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(gq.begin(), gq.end(), 0.0);
    std::fill(gs.begin(), gs.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < d; ++c) {
        gq[c] += g(i, j) * pf[j].output[c];
        gs[c] += g(j, i) * qf[j].output[c];
      }
    }
    backward_mean_pooled(model.query, qf[i], gq, grads.query);
    backward_mean_pooled(ptower, pf[i], gs, pgrads);
  }
  return loss;
}

MnrResult mnr_loss_and_grads(const TwoTowerModel& model, std::span<const TrainingPair> batch, double alpha) {
  std::vector<EncodedPair> encoded;
  encoded.reserve(batch.size());
  for (const TrainingPair& p : batch) encoded.push_back(encode_pair(model, p));
  MnrResult r;
  r.grads = TwoTowerGrads::zeros_like(model);
  r.loss = accumulate_mnr(model, encoded, alpha, r.grads);
  return r;
}

TwoTowerTrainingConfig TwoTowerTrainingConfig::full_scale_defaults() {
  TwoTowerTrainingConfig c;
  c.batch_size = 128;
  c.epochs = 20;
  c.optimizer.learning_rate = 2e-5;
  return c;
}

void TwoTowerTrainingConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (!(alpha > 0)) throw InvalidArgument("alpha must be > 0");
  encoder.validate();
}

void ValidationSet::validate() const {
  if (!enabled()) return;
  for (const QAPair& qa : questions) {
    auto it = qrels->find(qa.qid);
    if (it == qrels->end()) throw DataError("validation qid " + qa.qid + " has no qrels");
    for (const auto& pid : it->second) {
      if (!corpus->contains(pid)) throw DataError("validation corpus is missing gold pid " + pid);
    }
  }
}

std::size_t select_best_epoch(std::span<const double> validation_recalls) {
  if (validation_recalls.empty()) throw InvalidArgument("no epochs to select from");
  return static_cast<std::size_t>(std::max_element(validation_recalls.begin(), validation_recalls.end()) -
                                  validation_recalls.begin());
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::span<const EncodedPair> pairs, std::size_t batch_size,
                                                   bool redraw_duplicates, Rng& rng) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  if (!redraw_duplicates) {
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    }
    return batches;
  }
  std::vector<std::size_t> pending = order;
  while (!pending.empty()) {
    std::vector<std::size_t> batch, deferred;
    std::unordered_set<std::string_view> seen;
    for (std::size_t idx : pending) {
      if (batch.size() < batch_size && seen.insert(pairs[idx].positive_pid).second) {
        batch.push_back(idx);
      } else {
        deferred.push_back(idx);
      }
    }
    batches.push_back(std::move(batch));
    pending = std::move(deferred);
  }
  return batches;
}

bool has_duplicate_positive(std::span<const EncodedPair> pairs, std::span<const std::size_t> batch) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t idx : batch) {
    if (!seen.insert(pairs[idx].positive_pid).second) return true;
  }
  return false;
}

double validation_recall(const TwoTowerModel& model, const ValidationSet& validation) {
  const EmbeddingMatrix matrix = encode_corpus(model, *validation.corpus);
  const Run run = search_run(model, matrix, validation.questions, 5);
  return recall_at_k(run, *validation.qrels, 5);
}

}  // namespace

TwoTowerTrainingResult train_two_tower(const TwoTowerTrainingConfig& config, std::span<const TrainingPair> pairs,
                                       const ValidationSet& validation, std::optional<TwoTowerModel> initial) {
  config.validate();
  if (pairs.empty()) throw InvalidArgument("no training pairs");
  validation.validate();

  TwoTowerTrainingResult result;
  result.model = initial ? std::move(*initial) : TwoTowerModel::init(config.encoder, config.seed, config.separate_towers);
  result.optimizer.push_back(OptimizerState::zeros(result.model.query.size(), config.optimizer));
  if (result.model.passage) {
    result.optimizer.push_back(OptimizerState::zeros(result.model.passage->size(), config.optimizer));
  }
  if (config.epochs == 0) return result;

  std::vector<EncodedPair> encoded;
  encoded.reserve(pairs.size());
  for (const TrainingPair& p : pairs) encoded.push_back(encode_pair(result.model, p));

  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  TwoTowerModel model = result.model;
  std::vector<OptimizerState> optimizer = result.optimizer;
  TwoTowerGrads grads = TwoTowerGrads::zeros_like(model);
  std::optional<double> best_recall;
  std::vector<EncodedPair> batch_pairs;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = make_batches(encoded, config.batch_size, config.redraw_duplicates, rng);
    EpochLog entry;
    entry.epoch = epoch;
    for (const auto& batch : batches) {
      if (has_duplicate_positive(encoded, batch)) ++result.log.duplicate_batches;
      batch_pairs.clear();
      for (std::size_t idx : batch) batch_pairs.push_back(encoded[idx]);
      grads.zero();
      const double loss = accumulate_mnr(model, batch_pairs, config.alpha, grads);
      adam_step(optimizer[0], model.query.values, grads.query);
      if (model.passage) adam_step(optimizer[1], model.passage->values, grads.passage);
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
  if (result.log.duplicate_batches > 0) {
    std::cerr << "warning: " << result.log.duplicate_batches
              << " batch(es) contained duplicate positives; in-batch negatives are not all distinct\n";
  }
  return result;
}

EmbeddingMatrix encode_corpus(const TwoTowerModel& model, const Corpus& corpus) {
  if (corpus.empty()) throw InvalidArgument("cannot encode an empty corpus");
  const EncoderParams& p = model.passage_encoder();
  EmbeddingMatrix m;
  m.encoder_checksum = model.checksum();
  m.vectors = Matrix(corpus.size(), p.dim);
  m.pids.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const TokenSeq tokens = tokenize(corpus[i].text);
    if (tokens.empty()) ++m.empty_passages;
    const auto f = forward_mean_pooled(p, token_rows(p, tokens, model.encoder.passage_max_len));
    std::copy(f.output.begin(), f.output.end(), m.vectors.row(i).begin());
    m.pids.push_back(corpus[i].pid);
  }
  return m;
}

std::vector<ScoredPid> search(const EmbeddingMatrix& matrix, std::span<const double> query, std::size_t k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  std::vector<double> scores(matrix.pids.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = dot(query, matrix.vectors.row(i));
  return top_k(scores, matrix.pids, k);
}

std::vector<ScoredPid> search(const TwoTowerModel& model, const EmbeddingMatrix& matrix, std::string_view question,
                              std::size_t k) {
  if (matrix.encoder_checksum != model.checksum()) {
    throw DataError("embedding matrix was produced by a different encoder (checksum mismatch)");
  }
  return search(matrix, model.embed_question(question), k);
}

Run search_run(const TwoTowerModel& model, const EmbeddingMatrix& matrix, std::span<const QAPair> questions,
               std::size_t k) {
  Run run;
  run.reserve(questions.size());
  for (const QAPair& qa : questions) run.push_back(RankedList{qa.qid, search(model, matrix, qa.question, k)});
  return run;
}

namespace {

constexpr std::string_view kEmbeddingMagic = "WRAGEMBD";
constexpr std::uint32_t kEmbeddingVersion = 1;

}  // namespace

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  io::BinaryWriter out(path, kEmbeddingMagic, kEmbeddingVersion);
  out.put(matrix.encoder_checksum);
  out.put(static_cast<std::uint64_t>(matrix.empty_passages));
  out.put(static_cast<std::uint64_t>(matrix.pids.size()));
  for (const auto& pid : matrix.pids) out.put(std::string_view(pid));
  out.put(static_cast<std::uint64_t>(matrix.vectors.cols()));
  out.put(matrix.vectors.data());
  out.finish();
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  io::BinaryReader in(path, kEmbeddingMagic);
  if (in.version() != kEmbeddingVersion) throw DataError(path.string() + ": unsupported embedding version");
  EmbeddingMatrix m;
  m.encoder_checksum = in.get<std::uint64_t>();
  m.empty_passages = in.get<std::uint64_t>();
  const auto n = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) m.pids.push_back(in.get_string());
  const auto cols = in.get<std::uint64_t>();
  m.vectors = Matrix(n, cols, in.get_vector<double>());
  in.expect_end();
  return m;
}

Checkpoint to_checkpoint(const TwoTowerModel& model, std::span<const OptimizerState> optimizer,
                         const TwoTowerTrainingConfig& config) {
  Checkpoint c;
  c.model_kind = "two-tower";
  c.encoder = model.encoder;
  c.settings = {{"alpha", std::to_string(config.alpha)},
                {"batch_size", std::to_string(config.batch_size)},
                {"epochs", std::to_string(config.epochs)},
                {"seed", std::to_string(config.seed)},
                {"separate_towers", model.shared() ? "false" : "true"}};
  c.towers.push_back(model.query);
  if (model.passage) c.towers.push_back(*model.passage);
  c.optimizers.assign(optimizer.begin(), optimizer.end());
  return c;
}

TwoTowerModel two_tower_from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.model_kind != "two-tower") {
    throw DataError("checkpoint holds a " + checkpoint.model_kind + " model, not two-tower");
  }
  if (checkpoint.towers.empty() || checkpoint.towers.size() > 2) throw DataError("two-tower checkpoint needs 1 or 2 towers");
  TwoTowerModel m;
  m.encoder = checkpoint.encoder;
  m.query = checkpoint.towers[0];
  if (checkpoint.towers.size() == 2) m.passage = checkpoint.towers[1];
  return m;
}

}  // namespace wrag
