// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "wrag/errors.hpp"
#include "wrag/hash.hpp"
#include "wrag/random.hpp"

namespace wrag {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw InvalidArgument("matrix data does not match its shape");
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void EncoderConfig::validate() const {
  if (oov_buckets < 1 || vocab_size < oov_buckets) {
    throw InvalidArgument("encoder needs vocab_size >= oov_buckets >= 1");
  }
  if (dim < 2) throw InvalidArgument("encoder dimension must be >= 2");
  if (query_max_len < 1 || passage_max_len < 1) throw InvalidArgument("max lengths must be >= 1");
}

std::size_t EncoderParams::row_of(std::string_view token) const {
  const std::uint64_t h = fnv1a64(token);
  if (vocab_size > oov_buckets) return oov_buckets + static_cast<std::size_t>(h % (vocab_size - oov_buckets));
  return static_cast<std::size_t>(h % vocab_size);
}

std::uint64_t EncoderParams::checksum() const {
  std::uint64_t h = kFnvOffset;
  const double shape[3] = {static_cast<double>(vocab_size), static_cast<double>(dim),
                           static_cast<double>(oov_buckets)};
  h = fnv1a64(std::span<const double>(shape), h);
  return fnv1a64(std::span<const double>(values), h);
}

void EncoderParams::validate() const {
  EncoderConfig{vocab_size, dim, oov_buckets, 1, 1}.validate();
  if (values.size() != vocab_size * dim + dim * dim) throw InvalidArgument("encoder values have the wrong size");
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("encoder parameters contain a non-finite entry");
  }
}

EncoderParams init_params(std::size_t vocab_size, std::size_t dim, std::uint64_t seed,
                          std::size_t oov_buckets) {
  EncoderParams p;
  p.vocab_size = vocab_size;
  p.dim = dim;
  p.oov_buckets = oov_buckets;
  EncoderConfig{vocab_size, dim, oov_buckets, 1, 1}.validate();
  p.values.assign(vocab_size * dim + dim * dim, 0.0);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : p.embedding()) v = uniform_real(rng, -bound, bound);
  auto proj = p.projection();
  for (std::size_t i = 0; i < dim; ++i) proj[i * dim + i] = 1.0;
  return p;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  return init_params(config.vocab_size, config.dim, seed, config.oov_buckets);
}

std::vector<std::size_t> token_rows(const EncoderParams& params, std::span<const std::string> tokens,
                                    std::size_t max_len) {
  std::vector<std::size_t> rows;
  const std::size_t n = std::min(tokens.size(), max_len);
  rows.reserve(std::max<std::size_t>(n, params.oov_buckets));
  for (std::size_t i = 0; i < n; ++i) rows.push_back(params.row_of(tokens[i]));
  if (rows.empty()) {
    for (std::size_t r = 0; r < params.oov_buckets; ++r) rows.push_back(r);
  }
  return rows;
}

namespace {

// out = P * in for a dim x dim row-major P.
void project(std::span<const double> proj, std::span<const double> in, std::span<double> out) {
  const std::size_t d = in.size();
  for (std::size_t a = 0; a < d; ++a) {
    double s = 0.0;
    const double* row = proj.data() + a * d;
    for (std::size_t b = 0; b < d; ++b) s += row[b] * in[b];
    out[a] = s;
  }
}

// Gradient through x -> x / |x| given the unit output.
void normalize_backward(std::span<const double> unit, double norm, std::span<const double> grad_out,
                        std::span<double> grad_in) {
  const double along = dot(unit, grad_out);
  for (std::size_t i = 0; i < unit.size(); ++i) grad_in[i] = (grad_out[i] - unit[i] * along) / norm;
}

// Given dL/d(projected) and the projection input, accumulate dL/dP and
// return dL/d(input) in grad_in.
void project_backward(std::span<const double> proj, std::span<const double> input,
                      std::span<const double> grad_projected, std::span<double> grad_proj,
                      std::span<double> grad_in) {
  const std::size_t d = input.size();
  std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    const double g = grad_projected[a];
    if (g == 0.0) continue;
    const double* prow = proj.data() + a * d;
    double* grow = grad_proj.data() + a * d;
    for (std::size_t b = 0; b < d; ++b) {
      grow[b] += g * input[b];
      grad_in[b] += prow[b] * g;
    }
  }
}

double checked_norm(std::span<const double> v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("embedding has zero or non-finite norm");
  return n;
}

}  // namespace

PooledForward forward_mean_pooled(const EncoderParams& params, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InvalidArgument("cannot embed an empty token sequence");
  const std::size_t d = params.dim;
  PooledForward f;
  f.rows.assign(rows.begin(), rows.end());
  f.mean.assign(d, 0.0);
  for (std::size_t r : rows) {
    auto row = params.row(r);
    for (std::size_t i = 0; i < d; ++i) f.mean[i] += row[i];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& v : f.mean) v *= inv;
  f.projected.assign(d, 0.0);
  project(params.projection(), f.mean, f.projected);
  f.norm = checked_norm(f.projected);
  f.output.resize(d);
  for (std::size_t i = 0; i < d; ++i) f.output[i] = f.projected[i] / f.norm;
  return f;
}

void backward_mean_pooled(const EncoderParams& params, const PooledForward& f,
                          std::span<const double> grad_output, std::span<double> grads) {
  const std::size_t d = params.dim;
  std::vector<double> g_proj(d), g_mean(d);
  normalize_backward(f.output, f.norm, grad_output, g_proj);
  project_backward(params.projection(), f.mean, g_proj,
                   grads.subspan(params.vocab_size * d, d * d), g_mean);
  const double inv = 1.0 / static_cast<double>(f.rows.size());
  for (std::size_t r : f.rows) {
    double* g = grads.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) g[i] += g_mean[i] * inv;
  }
}

std::vector<double> embed_mean_pooled(const EncoderParams& params, std::span<const std::string> tokens) {
  if (tokens.empty()) throw InvalidArgument("cannot embed an empty token sequence");
  const auto rows = token_rows(params, tokens, tokens.size());
  return forward_mean_pooled(params, rows).output;
}

TokenForward forward_tokens(const EncoderParams& params, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InvalidArgument("cannot embed an empty token sequence");
  const std::size_t d = params.dim;
  TokenForward f;
  f.rows.assign(rows.begin(), rows.end());
  f.projected = Matrix(rows.size(), d);
  f.output = Matrix(rows.size(), d);
  f.norms.resize(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    project(params.projection(), params.row(rows[t]), f.projected.row(t));
    f.norms[t] = checked_norm(f.projected.row(t));
    auto out = f.output.row(t);
    auto in = f.projected.row(t);
    for (std::size_t i = 0; i < d; ++i) out[i] = in[i] / f.norms[t];
  }
  return f;
}

void backward_tokens(const EncoderParams& params, const TokenForward& f, const Matrix& grad_output,
                     std::span<double> grads) {
  const std::size_t d = params.dim;
  std::vector<double> g_proj(d), g_row(d);
  auto grad_projection = grads.subspan(params.vocab_size * d, d * d);
  for (std::size_t t = 0; t < f.rows.size(); ++t) {
    auto go = grad_output.row(t);
    if (std::all_of(go.begin(), go.end(), [](double v) { return v == 0.0; })) continue;
    normalize_backward(f.output.row(t), f.norms[t], go, g_proj);
    project_backward(params.projection(), params.row(f.rows[t]), g_proj, grad_projection, g_row);
    double* g = grads.data() + f.rows[t] * d;
    for (std::size_t i = 0; i < d; ++i) g[i] += g_row[i];
  }
}

Matrix embed_tokens(const EncoderParams& params, std::span<const std::string> tokens, std::size_t max_len) {
  if (tokens.empty()) throw InvalidArgument("cannot embed an empty token sequence");
  const auto rows = token_rows(params, tokens, max_len);
  return forward_tokens(params, rows).output;
}

// ---------------------------------------------------------------------------

OptimizerState OptimizerState::zeros(std::size_t size, AdamWConfig hyper) {
  OptimizerState s;
  s.hyper = hyper;
  s.first_moment.assign(size, 0.0);
  s.second_moment.assign(size, 0.0);
  return s;
}

void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw InvalidArgument("optimizer, parameter and gradient shapes differ");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient entry");
  }
  const AdamWConfig& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(h.beta1, t);
  const double bias2 = 1.0 - std::pow(h.beta2, t);
  const double decay = 1.0 - h.learning_rate * h.weight_decay;
  double* m = state.first_moment.data();
  double* v = state.second_moment.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    params[i] *= decay;
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    params[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
  }
}

// ---------------------------------------------------------------------------

double finite_diff_check(const LossFunction& loss, std::span<const double> point,
                         std::span<const double> analytic, std::size_t probe_count, double h,
                         std::uint64_t seed) {
  if (!(h > 0)) throw InvalidArgument("finite difference step must be > 0");
  if (point.size() != analytic.size()) throw InvalidArgument("gradient and point differ in size");
  std::vector<std::size_t> probes(point.size());
  std::iota(probes.begin(), probes.end(), std::size_t{0});
  if (probe_count < probes.size()) {
    Rng rng(seed);
    shuffle(probes, rng);
    probes.resize(probe_count);
  }
  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i : probes) {
    const double original = x[i];
    x[i] = original + h;
    const double up = loss(x);
    x[i] = original - h;
    const double down = loss(x);
    x[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("loss is non-finite near probe point");
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric)));
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kCheckpointMagic = "WRAGCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::BinaryWriter out(path, kCheckpointMagic, kCheckpointVersion);
  out.put(std::string_view(ckpt.model_kind));
  const auto& e = ckpt.encoder;
  for (std::size_t v : {e.vocab_size, e.dim, e.oov_buckets, e.query_max_len, e.passage_max_len}) {
    out.put(static_cast<std::uint64_t>(v));
  }
  out.put(static_cast<std::uint64_t>(ckpt.settings.size()));
  for (const auto& [k, v] : ckpt.settings) {
    out.put(std::string_view(k));
    out.put(std::string_view(v));
  }
  out.put(static_cast<std::uint64_t>(ckpt.towers.size()));
  for (const EncoderParams& p : ckpt.towers) {
    out.put(static_cast<std::uint64_t>(p.vocab_size));
    out.put(static_cast<std::uint64_t>(p.dim));
    out.put(static_cast<std::uint64_t>(p.oov_buckets));
    out.put(p.values);
  }
  out.put(static_cast<std::uint64_t>(ckpt.optimizers.size()));
  for (const OptimizerState& s : ckpt.optimizers) {
    out.put(s.hyper.learning_rate);
    out.put(s.hyper.beta1);
    out.put(s.hyper.beta2);
    out.put(s.hyper.epsilon);
    out.put(s.hyper.weight_decay);
    out.put(s.step);
    out.put(s.first_moment);
    out.put(s.second_moment);
  }
  out.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::BinaryReader in(path, kCheckpointMagic);
  if (in.version() != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(in.version()));
  }
  Checkpoint ckpt;
  ckpt.model_kind = in.get_string();
  ckpt.encoder.vocab_size = in.get<std::uint64_t>();
  ckpt.encoder.dim = in.get<std::uint64_t>();
  ckpt.encoder.oov_buckets = in.get<std::uint64_t>();
  ckpt.encoder.query_max_len = in.get<std::uint64_t>();
  ckpt.encoder.passage_max_len = in.get<std::uint64_t>();
  const auto n_settings = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_settings; ++i) {
    std::string k = in.get_string();
    ckpt.settings[k] = in.get_string();
  }
  const auto n_towers = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_towers; ++i) {
    EncoderParams p;
    p.vocab_size = in.get<std::uint64_t>();
    p.dim = in.get<std::uint64_t>();
    p.oov_buckets = in.get<std::uint64_t>();
    p.values = in.get_vector<double>();
    p.validate();
    ckpt.towers.push_back(std::move(p));
  }
  const auto n_opt = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_opt; ++i) {
    OptimizerState s;
    s.hyper.learning_rate = in.get<double>();
    s.hyper.beta1 = in.get<double>();
    s.hyper.beta2 = in.get<double>();
    s.hyper.epsilon = in.get<double>();
    s.hyper.weight_decay = in.get<double>();
    s.step = in.get<std::uint64_t>();
    s.first_moment = in.get_vector<double>();
    s.second_moment = in.get_vector<double>();
    ckpt.optimizers.push_back(std::move(s));
  }
  in.expect_end();
  return ckpt;
}

}  // namespace wrag
