// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "wrag/errors.hpp"
#include "wrag/hash.hpp"

namespace wrag {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(BackendKind kind) { return kind == BackendKind::Mock ? "mock" : "endpoint"; }

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "mock") return BackendKind::Mock;
  if (name == "endpoint") return BackendKind::Endpoint;
  throw InvalidArgument("unknown backend \"" + std::string(name) + "\" (expected mock or endpoint)");
}

// ---------------------------------------------------------------------------
// Settings

namespace {

using C = PipelineConfig;
using SV = std::string_view;

[[noreturn]] void bad_value(SV key, SV value, SV expected) {
  throw InvalidArgument("config key '" + std::string(key) + "': cannot parse \"" + std::string(value) + "\" as " +
                        std::string(expected));
}

std::uint64_t to_u64(SV key, SV v) {
  std::uint64_t x = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc{} || end != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return x;
}

std::size_t to_size(SV key, SV v) { return static_cast<std::size_t>(to_u64(key, v)); }

int to_int(SV key, SV v) {
  int x = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc{} || end != v.data() + v.size()) bad_value(key, v, "an integer");
  return x;
}

double to_double(SV key, SV v) {
  double x = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc{} || end != v.data() + v.size() || !std::isfinite(x)) {
    bad_value(key, v, "a finite number");
  }
  return x;
}

bool to_bool(SV key, SV v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::size_t> to_list(SV key, SV v) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t comma = std::min(v.find(',', start), v.size());
    SV item = v.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    const std::size_t k = to_size(key, item);
    if (k == 0) bad_value(key, v, "a list of positive integers");
    out.push_back(k);
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_enum(SV key, SV v, T (*parse)(SV)) {
  try {
    return parse(v);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("config key '" + std::string(key) + "': " + e.what());
  }
}

std::string fmt(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

std::string fmt(std::uint64_t x) { return std::to_string(x); }

std::string fmt(bool x) { return x ? "true" : "false"; }

std::string fmt(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

struct Setting {
  SV key;
  void (*set)(C&, SV key, SV value);
  std::string (*get)(const C&);
};

// clang-format off
const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = {
    {"corpus", [](C& c, SV, SV v) { c.corpus = fs::path(v); }, [](const C& c) { return c.corpus.string(); }},
    {"qa", [](C& c, SV, SV v) { c.qa = fs::path(v); }, [](const C& c) { return c.qa.string(); }},
    {"qrels", [](C& c, SV, SV v) { c.qrels = fs::path(v); }, [](const C& c) { return c.qrels.string(); }},
    {"workdir", [](C& c, SV, SV v) { c.workdir = fs::path(v); }, [](const C& c) { return c.workdir.string(); }},
    {"seed", [](C& c, SV k, SV v) { c.seed = to_u64(k, v); }, [](const C& c) { return fmt(c.seed); }},

    {"bm25.k1", [](C& c, SV k, SV v) { c.bm25.k1 = to_double(k, v); }, [](const C& c) { return fmt(c.bm25.k1); }},
    {"bm25.b", [](C& c, SV k, SV v) { c.bm25.b = to_double(k, v); }, [](const C& c) { return fmt(c.bm25.b); }},
    {"bm25.epsilon", [](C& c, SV k, SV v) { c.bm25.epsilon = to_double(k, v); },
     [](const C& c) { return fmt(c.bm25.epsilon); }},
    {"retrieval.candidates", [](C& c, SV k, SV v) { c.candidates = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.candidates}); }},

    {"split.train", [](C& c, SV k, SV v) { c.split.train = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.split.train}); }},
    {"split.validation", [](C& c, SV k, SV v) { c.split.validation = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.split.validation}); }},
    {"split.test", [](C& c, SV k, SV v) { c.split.test = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.split.test}); }},

    {"scorer.backend", [](C& c, SV k, SV v) { c.scorer = parse_enum(k, v, parse_backend_kind); },
     [](const C& c) { return std::string(to_string(c.scorer)); }},
    {"generator.backend", [](C& c, SV k, SV v) { c.generator = parse_enum(k, v, parse_backend_kind); },
     [](const C& c) { return std::string(to_string(c.generator)); }},
    {"endpoint.base_url", [](C& c, SV, SV v) { c.endpoint.base_url = v; }, [](const C& c) { return c.endpoint.base_url; }},
    {"endpoint.model", [](C& c, SV, SV v) { c.endpoint.model = v; }, [](const C& c) { return c.endpoint.model; }},
    {"endpoint.api_key_env", [](C& c, SV, SV v) { c.endpoint.api_key_env = v; },
     [](const C& c) { return c.endpoint.api_key_env; }},
    {"endpoint.timeout_seconds", [](C& c, SV k, SV v) { c.endpoint.timeout_seconds = to_double(k, v); },
     [](const C& c) { return fmt(c.endpoint.timeout_seconds); }},
    {"endpoint.max_in_flight", [](C& c, SV k, SV v) { c.endpoint.max_in_flight = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.endpoint.max_in_flight}); }},
    {"endpoint.retries", [](C& c, SV k, SV v) { c.endpoint.retries = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.endpoint.retries}); }},
    {"endpoint.backoff_seconds", [](C& c, SV k, SV v) { c.endpoint.backoff_seconds = to_double(k, v); },
     [](const C& c) { return fmt(c.endpoint.backoff_seconds); }},

    {"prompt.passage_label", [](C& c, SV, SV v) { c.prompt.passage_label = v; },
     [](const C& c) { return c.prompt.passage_label; }},
    {"prompt.question_label", [](C& c, SV, SV v) { c.prompt.question_label = v; },
     [](const C& c) { return c.prompt.question_label; }},
    {"prompt.instruction_label", [](C& c, SV, SV v) { c.prompt.instruction_label = v; },
     [](const C& c) { return c.prompt.instruction_label; }},
    {"prompt.answer_label", [](C& c, SV, SV v) { c.prompt.answer_label = v; },
     [](const C& c) { return c.prompt.answer_label; }},
    {"prompt.score_ordering", [](C& c, SV k, SV v) { c.prompt.score_ordering = parse_enum(k, v, parse_prompt_ordering); },
     [](const C& c) { return std::string(to_string(c.prompt.score_ordering)); }},
    {"prompt.score_instruction", [](C& c, SV, SV v) { c.prompt.score_instruction = v; },
     [](const C& c) { return c.prompt.score_instruction; }},
    {"prompt.qa_instruction", [](C& c, SV, SV v) { c.prompt.qa_instruction = v; },
     [](const C& c) { return c.prompt.qa_instruction; }},
    {"prompt.example", [](C& c, SV, SV v) { c.prompt.example = v; }, [](const C& c) { return c.prompt.example; }},

    {"weaklabel.answer_mode", [](C& c, SV k, SV v) { c.rerank.answer_mode = parse_enum(k, v, parse_answer_mode); },
     [](const C& c) { return std::string(to_string(c.rerank.answer_mode)); }},
    {"weaklabel.hard_negatives",
     [](C& c, SV k, SV v) { c.rerank.hard_negatives = c.late_interaction.hard_negatives = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.rerank.hard_negatives}); }},

    {"encoder.vocab_size", [](C& c, SV k, SV v) { c.encoder.vocab_size = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.encoder.vocab_size}); }},
    {"encoder.dim", [](C& c, SV k, SV v) { c.encoder.dim = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.encoder.dim}); }},
    {"encoder.oov_buckets", [](C& c, SV k, SV v) { c.encoder.oov_buckets = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.encoder.oov_buckets}); }},
    {"encoder.query_max_len", [](C& c, SV k, SV v) { c.encoder.query_max_len = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.encoder.query_max_len}); }},
    {"encoder.passage_max_len", [](C& c, SV k, SV v) { c.encoder.passage_max_len = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.encoder.passage_max_len}); }},

    {"two_tower.batch_size", [](C& c, SV k, SV v) { c.two_tower.batch_size = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.two_tower.batch_size}); }},
    {"two_tower.epochs", [](C& c, SV k, SV v) { c.two_tower.epochs = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.two_tower.epochs}); }},
    {"two_tower.alpha", [](C& c, SV k, SV v) { c.two_tower.alpha = to_double(k, v); },
     [](const C& c) { return fmt(c.two_tower.alpha); }},
    {"two_tower.learning_rate", [](C& c, SV k, SV v) { c.two_tower.optimizer.learning_rate = to_double(k, v); },
     [](const C& c) { return fmt(c.two_tower.optimizer.learning_rate); }},
    {"two_tower.weight_decay", [](C& c, SV k, SV v) { c.two_tower.optimizer.weight_decay = to_double(k, v); },
     [](const C& c) { return fmt(c.two_tower.optimizer.weight_decay); }},
    {"two_tower.separate_towers", [](C& c, SV k, SV v) { c.two_tower.separate_towers = to_bool(k, v); },
     [](const C& c) { return fmt(c.two_tower.separate_towers); }},
    {"two_tower.redraw_duplicates", [](C& c, SV k, SV v) { c.two_tower.redraw_duplicates = to_bool(k, v); },
     [](const C& c) { return fmt(c.two_tower.redraw_duplicates); }},

    {"late_interaction.batch_size", [](C& c, SV k, SV v) { c.late_interaction.batch_size = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.late_interaction.batch_size}); }},
    {"late_interaction.epochs", [](C& c, SV k, SV v) { c.late_interaction.epochs = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.late_interaction.epochs}); }},
    {"late_interaction.learning_rate",
     [](C& c, SV k, SV v) { c.late_interaction.optimizer.learning_rate = to_double(k, v); },
     [](const C& c) { return fmt(c.late_interaction.optimizer.learning_rate); }},
    {"late_interaction.weight_decay",
     [](C& c, SV k, SV v) { c.late_interaction.optimizer.weight_decay = to_double(k, v); },
     [](const C& c) { return fmt(c.late_interaction.optimizer.weight_decay); }},

    {"qa.retriever", [](C& c, SV k, SV v) { c.qa_run.retriever = parse_enum(k, v, parse_retriever_kind); },
     [](const C& c) { return std::string(to_string(c.qa_run.retriever)); }},
    {"qa.top_n", [](C& c, SV k, SV v) { c.qa_run.top_n = to_size(k, v); },
     [](const C& c) { return fmt(std::uint64_t{c.qa_run.top_n}); }},
    {"qa.max_tokens", [](C& c, SV k, SV v) { c.qa_run.max_tokens = to_int(k, v); },
     [](const C& c) { return std::to_string(c.qa_run.max_tokens); }},

    {"eval.recall_ks", [](C& c, SV k, SV v) { c.recall_ks = to_list(k, v); }, [](const C& c) { return fmt(c.recall_ks); }},
    {"eval.mrr_ks", [](C& c, SV k, SV v) { c.mrr_ks = to_list(k, v); }, [](const C& c) { return fmt(c.mrr_ks); }},
  };
  return table;
}
// clang-format on

const Setting& find_setting(SV key) {
  for (const auto& s : settings()) {
    if (s.key == key) return s;
  }
  throw InvalidArgument("unknown config key '" + std::string(key) + "'");
}

SV trim(SV s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool matches(SV key, std::span<const SV> prefixes) {
  if (prefixes.empty()) return true;
  return std::any_of(prefixes.begin(), prefixes.end(), [&](SV p) { return key.starts_with(p); });
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void require_file(SV key, const fs::path& path) {
  if (path.empty()) throw InvalidArgument("config key '" + std::string(key) + "' is required");
  if (!fs::is_regular_file(path)) {
    throw InvalidArgument("config key '" + std::string(key) + "': no such file " + path.string());
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& s : settings()) out.emplace_back(s.key);
  return out;
}

void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value) {
  find_setting(key).set(config, key, value);
  config.explicit_keys.emplace(key);
}

std::string config_value(const PipelineConfig& config, std::string_view key) { return find_setting(key).get(config); }

void apply_config_text(PipelineConfig& config, std::string_view text, std::string_view source) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == SV::npos) end = text.size();
    SV line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == SV::npos) throw InvalidArgument(where + ": expected `key = value`");
    const SV key = trim(line.substr(0, eq));
    SV value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    try {
      apply_setting(config, key, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + ": " + e.what());
    }
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig config;
  apply_config_text(config, read_file(path), path.string());
  // Relative data paths are taken relative to the config file.
  const fs::path base = path.parent_path();
  for (fs::path* p : {&config.corpus, &config.qa, &config.qrels, &config.workdir}) {
    if (!p->empty() && p->is_relative() && !base.empty()) *p = base / *p;
  }
  return config;
}

std::string dump_config(const PipelineConfig& config, std::span<const std::string_view> prefixes) {
  std::string out;
  for (const auto& s : settings()) {
    if (!matches(s.key, prefixes)) continue;
    std::string value = s.get(config);
    if (value.empty() || value != trim(value)) value = '"' + value + '"';
    out += std::string(s.key) + " = " + value + "\n";
  }
  return out;
}

void PipelineConfig::validate() const {
  require_file("corpus", corpus);
  require_file("qa", qa);
  require_file("qrels", qrels);
  if (workdir.empty()) throw InvalidArgument("config key 'workdir' is required");
  if (candidates < 1) throw InvalidArgument("retrieval.candidates must be >= 1");
  if (recall_ks.empty() || mrr_ks.empty()) throw InvalidArgument("eval cutoffs must be non-empty");
  if (rerank.hard_negatives < 1) throw InvalidArgument("weaklabel.hard_negatives must be >= 1");
  if (!(bm25.k1 >= 0.0) || !(bm25.b >= 0.0 && bm25.b <= 1.0) || !(bm25.epsilon >= 0.0)) {
    throw InvalidArgument("bm25 parameters need k1 >= 0, b in [0, 1] and epsilon >= 0");
  }
  encoder.validate();
  two_tower.validate();
  late_interaction.validate();
  qa_run.validate();
  prompt.validate();
  if (scorer == BackendKind::Endpoint || generator == BackendKind::Endpoint) endpoint.validate();
}

// ---------------------------------------------------------------------------
// Artifacts and stamps

namespace artifacts {

std::string checkpoint(RetrieverKind model) { return "checkpoint-" + std::string(to_string(model)) + ".bin"; }
std::string training_log(RetrieverKind model) { return "train-log-" + std::string(to_string(model)) + ".json"; }

std::string encoded(RetrieverKind model) {
  if (model == RetrieverKind::TwoTower) return "embeddings-two-tower.bin";
  if (model == RetrieverKind::LateInteraction) return "tokens-late-interaction.bin";
  throw InvalidArgument(std::string(to_string(model)) + " has no encoded corpus");
}

std::string run(RetrieverKind retriever) { return "run-" + std::string(to_string(retriever)) + ".trec"; }
std::string generations(RetrieverKind retriever) {
  return "generations-" + std::string(to_string(retriever)) + ".jsonl";
}

}  // namespace artifacts

namespace {

constexpr RetrieverKind kSearchable[] = {RetrieverKind::Bm25, RetrieverKind::TwoTower, RetrieverKind::LateInteraction};
constexpr RetrieverKind kAnswering[] = {RetrieverKind::None, RetrieverKind::Gold, RetrieverKind::Bm25,
                                        RetrieverKind::TwoTower, RetrieverKind::LateInteraction};

void require_trainable(RetrieverKind model) {
  if (model != RetrieverKind::TwoTower && model != RetrieverKind::LateInteraction) {
    throw InvalidArgument("expected two-tower or late-interaction, got " + std::string(to_string(model)));
  }
}

class Fingerprint {
 public:
  explicit Fingerprint(SV stage) { add(stage); }

  Fingerprint& add(SV text) {
    h_ = fnv1a64(text, h_);
    h_ = fnv1a64(SV("\x1f", 1), h_);
    return *this;
  }

  Fingerprint& file(const fs::path& path) { return add(path.filename().string()).add(read_file(path)); }

  Fingerprint& keys(const PipelineConfig& config, std::initializer_list<SV> prefixes) {
    return add(dump_config(config, std::span<const SV>(prefixes.begin(), prefixes.size())));
  }

  std::string hex() const { return to_hex(h_); }

 private:
  std::uint64_t h_ = kFnvOffset;
};

fs::path stamp_path(const fs::path& workdir, SV output) { return workdir / "stamps" / (std::string(output) + ".stamp"); }

std::string read_stamp(const fs::path& workdir, SV output) {
  std::ifstream in(stamp_path(workdir, output));
  std::string s;
  std::getline(in, s);
  return s;
}

bool up_to_date(const fs::path& workdir, SV output, const Fingerprint& fp) {
  return fs::exists(workdir / output) && read_stamp(workdir, output) == fp.hex();
}

void write_stamp(const fs::path& workdir, SV output, const Fingerprint& fp) {
  fs::create_directories(workdir / "stamps");
  std::ofstream(stamp_path(workdir, output), std::ios::trunc) << fp.hex() << '\n';
}

void write_training_log(const TrainingLog& log, const fs::path& path) {
  json epochs = json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"mean_loss", e.mean_loss},
                      {"total_loss", e.total_loss},
                      {"recall_at_5", e.recall_at_5 ? json(*e.recall_at_5) : json(nullptr)}});
  }
  const json out = {{"epochs", epochs},
                    {"best_epoch", log.best_epoch},
                    {"duplicate_batches", log.duplicate_batches},
                    {"step_losses", log.step_losses}};
  std::ofstream(path, std::ios::binary | std::ios::trunc) << out.dump(2) << '\n';
}

std::string fixed(double x, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << x;
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::Data {
  Corpus corpus;
  std::vector<QAPair> qa_pairs;
  Qrels qrels;
  DatasetSplit split;
};

Pipeline::Pipeline(PipelineConfig config, std::ostream& log) : config_(std::move(config)), log_(log) {
  config_.validate();
  fs::create_directories(config_.workdir);
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::artifact(std::string_view name) const { return config_.workdir / name; }

fs::path Pipeline::require(std::string_view name, std::string_view command) const {
  fs::path p = artifact(name);
  if (!fs::exists(p)) {
    throw MissingArtifact(std::string(name) + " not found in " + config_.workdir.string() + "; run " +
                          std::string(command) + " first");
  }
  return p;
}

const Pipeline::Data& Pipeline::data() {
  if (!data_) {
    auto d = std::make_unique<Data>();
    d->corpus = load_corpus(config_.corpus);
    d->qa_pairs = load_qa_pairs(config_.qa);
    d->qrels = load_qrels(config_.qrels);
    validate_qrels(d->qrels, d->corpus);
    d->split = split_qa(d->qa_pairs, config_.seed, config_.split);
    data_ = std::move(d);
  }
  return *data_;
}

RelevanceScorer& Pipeline::scorer() {
  if (scorer_override_) return *scorer_override_;
  if (!scorer_) {
    if (config_.scorer == BackendKind::Mock) {
      scorer_ = std::make_unique<ContainmentScorer>();
    } else {
      if (!client_) client_ = std::make_unique<CompletionClient>(config_.endpoint);
      auto cache = std::make_shared<ScoreCache>(artifact("score-cache.jsonl"));
      scorer_ = std::make_unique<CompletionScorer>(*client_, config_.prompt, std::move(cache));
    }
  }
  return *scorer_;
}

AnswerGenerator& Pipeline::generator() {
  if (generator_override_) return *generator_override_;
  if (!generator_) {
    if (config_.generator == BackendKind::Mock) {
      generator_ = std::make_unique<MockGenerator>(config_.prompt);
    } else {
      if (!client_) client_ = std::make_unique<CompletionClient>(config_.endpoint);
      generator_ = std::make_unique<CompletionGenerator>(*client_);
    }
  }
  return *generator_;
}

StageResult Pipeline::index() {
  const fs::path out = artifact(artifacts::kIndex);
  Fingerprint fp("index");
  fp.file(config_.corpus).keys(config_, {"bm25."});
  if (up_to_date(config_.workdir, artifacts::kIndex, fp)) {
    log_ << "[index] " << out.string() << " is up to date\n";
    return {StageStatus::UpToDate, {out}};
  }
  const auto idx = Bm25Index::build(data().corpus, config_.bm25);
  idx.save(out);
  write_stamp(config_.workdir, artifacts::kIndex, fp);
  log_ << "[index] " << idx.document_count() << " passages, " << idx.vocabulary_size() << " terms -> "
       << out.string() << "\n";
  return {StageStatus::Ran, {out}};
}

StageResult Pipeline::weaklabel_run() {
  const fs::path index_path = require(artifacts::kIndex, "index");
  const fs::path out = artifact(artifacts::kWeakLabels);
  RelevanceScorer& s = scorer();
  Fingerprint fp("weaklabel");
  fp.file(index_path).file(config_.qa).file(config_.corpus).add(s.identifier());
  fp.keys(config_, {"seed", "split.", "retrieval.", "weaklabel.", "prompt."});
  if (up_to_date(config_.workdir, artifacts::kWeakLabels, fp)) {
    log_ << "[weaklabel] " << out.string() << " is up to date\n";
    return {StageStatus::UpToDate, {out}};
  }
  const Data& d = data();
  const auto idx = Bm25Index::load(index_path);
  const Run first_stage = idx.retrieve_run(d.split.train, config_.candidates);
  LabelingOutcome outcome = label_questions(s, d.split.train, first_stage, d.corpus, config_.prompt, config_.rerank);
  if (!outcome.dropped_qids.empty()) {
    log_ << "[weaklabel] scoring failed for " << outcome.dropped_qids.size() << " questions (first: "
         << outcome.dropped_qids.front() << ")\n";
    if (outcome.labels.records.empty()) throw TransportError("scoring failed for every training question");
  }
  save_weak_labels(outcome.labels, out);
  write_stamp(config_.workdir, artifacts::kWeakLabels, fp);
  log_ << "[weaklabel] " << outcome.labels.size() << " questions labeled with " << s.identifier() << " -> "
       << out.string() << "\n";
  return {StageStatus::Ran, {out}};
}

RecallComparison Pipeline::weaklabel_eval() {
  const WeakLabelSet labels = load_weak_labels(require(artifacts::kWeakLabels, "weaklabel"));
  RecallComparison cmp = evaluate_weak_labels(labels, data().qrels, config_.recall_ks);
  const fs::path out = artifact(artifacts::kWeakLabelRecall);
  std::ofstream tsv(out, std::ios::binary | std::ios::trunc);
  tsv << "k\tfirst_stage\treranked\n";
  for (std::size_t i = 0; i < cmp.ks.size(); ++i) {
    tsv << cmp.ks[i] << '\t' << fixed(cmp.first_stage[i], 6) << '\t' << fixed(cmp.reranked[i], 6) << '\n';
    log_ << "[weaklabel] Recall@" << cmp.ks[i] << " " << fixed(cmp.first_stage[i]) << " -> "
         << fixed(cmp.reranked[i]) << "\n";
  }
  return cmp;
}

StageResult Pipeline::train(RetrieverKind model) {
  require_trainable(model);
  const fs::path labels_path = require(artifacts::kWeakLabels, "weaklabel");
  const std::string name = artifacts::checkpoint(model);
  const fs::path out = artifact(name);
  const fs::path log_path = artifact(artifacts::training_log(model));
  const SV section = model == RetrieverKind::TwoTower ? SV("two_tower.") : SV("late_interaction.");
  Fingerprint fp("train");
  fp.add(to_string(model)).file(labels_path).file(config_.qa).file(config_.qrels).file(config_.corpus);
  fp.keys(config_, {"seed", "split.", "encoder.", "weaklabel.", section});
  if (up_to_date(config_.workdir, name, fp) && fs::exists(log_path)) {
    log_ << "[train] " << out.string() << " is up to date\n";
    return {StageStatus::UpToDate, {out, log_path}};
  }

  const Data& d = data();
  const WeakLabelSet labels = load_weak_labels(labels_path);
  const ValidationSet validation{d.split.validation, &d.qrels, &d.corpus};
  TrainingLog log;
  if (model == RetrieverKind::TwoTower) {
    TwoTowerTrainingConfig cfg = config_.two_tower;
    cfg.encoder = config_.encoder;
    cfg.seed = config_.seed;
    const auto pairs = extract_two_tower_pairs(labels, d.corpus);
    auto result = train_two_tower(cfg, pairs, validation);
    save_checkpoint(to_checkpoint(result.model, result.optimizer, cfg), out);
    log = std::move(result.log);
  } else {
    LateInteractionTrainingConfig cfg = config_.late_interaction;
    cfg.encoder = config_.encoder;
    cfg.seed = config_.seed;
    cfg.hard_negatives = config_.rerank.hard_negatives;
    const auto extraction = extract_triplets(labels, d.corpus, cfg.hard_negatives);
    auto result = train_late_interaction(cfg, extraction.triplets, validation);
    save_checkpoint(to_checkpoint(result.model, result.optimizer, cfg), out);
    log = std::move(result.log);
  }
  write_training_log(log, log_path);
  write_stamp(config_.workdir, name, fp);
  for (const auto& e : log.epochs) {
    log_ << "[train] " << to_string(model) << " epoch " << e.epoch << " loss " << fixed(e.mean_loss);
    if (e.recall_at_5) log_ << " val R@5 " << fixed(*e.recall_at_5);
    log_ << "\n";
  }
  log_ << "[train] kept epoch " << log.best_epoch << " -> " << out.string() << "\n";
  return {StageStatus::Ran, {out, log_path}};
}

StageResult Pipeline::encode(RetrieverKind model) {
  require_trainable(model);
  const fs::path ckpt = require(artifacts::checkpoint(model), "train " + std::string(to_string(model)));
  const std::string name = artifacts::encoded(model);
  const fs::path out = artifact(name);
  Fingerprint fp("encode");
  fp.add(to_string(model)).file(ckpt).file(config_.corpus);
  if (up_to_date(config_.workdir, name, fp)) {
    log_ << "[encode] " << out.string() << " is up to date\n";
    return {StageStatus::UpToDate, {out}};
  }
  const Checkpoint checkpoint = load_checkpoint(ckpt);
  std::size_t empty = 0;
  if (model == RetrieverKind::TwoTower) {
    const auto matrix = encode_corpus(two_tower_from_checkpoint(checkpoint), data().corpus);
    save_embeddings(matrix, out);
    empty = matrix.empty_passages;
  } else {
    const auto store = build_token_store(late_interaction_from_checkpoint(checkpoint), data().corpus);
    save_token_store(store, out);
    empty = store.empty_passages;
  }
  if (empty > 0) log_ << "[encode] " << empty << " passages had no tokens\n";
  write_stamp(config_.workdir, name, fp);
  log_ << "[encode] " << data().corpus.size() << " passages -> " << out.string() << "\n";
  return {StageStatus::Ran, {out}};
}

StageResult Pipeline::search(RetrieverKind retriever) {
  const std::string name = artifacts::run(retriever);
  const fs::path out = artifact(name);
  Fingerprint fp("search");
  fp.add(to_string(retriever)).file(config_.qa).keys(config_, {"seed", "split.", "retrieval."});
  fs::path index_path, ckpt, encoded;
  if (retriever == RetrieverKind::Bm25) {
    index_path = require(artifacts::kIndex, "index");
    fp.file(index_path);
  } else {
    require_trainable(retriever);
    const std::string model = std::string(to_string(retriever));
    ckpt = require(artifacts::checkpoint(retriever), "train " + model);
    encoded = require(artifacts::encoded(retriever), "encode " + model);
    fp.file(ckpt).file(encoded);
  }
  if (up_to_date(config_.workdir, name, fp)) {
    log_ << "[search] " << out.string() << " is up to date\n";
    return {StageStatus::UpToDate, {out}};
  }
  const auto& test = data().split.test;
  Run run;
  if (retriever == RetrieverKind::Bm25) {
    run = Bm25Index::load(index_path).retrieve_run(test, config_.candidates);
  } else if (retriever == RetrieverKind::TwoTower) {
    const auto model = two_tower_from_checkpoint(load_checkpoint(ckpt));
    run = search_run(model, load_embeddings(encoded), test, config_.candidates);
  } else {
    const auto model = late_interaction_from_checkpoint(load_checkpoint(ckpt));
    run = search_maxsim_run(model, load_token_store(encoded), test, config_.candidates);
  }
  write_run(run, out, to_string(retriever));
  write_stamp(config_.workdir, name, fp);
  log_ << "[search] " << run.size() << " test questions -> " << out.string() << "\n";
  return {StageStatus::Ran, {out}};
}

StageResult Pipeline::qa(std::optional<RetrieverKind> retriever) {
  const RetrieverKind kind = retriever.value_or(config_.qa_run.retriever);
  const std::string name = artifacts::generations(kind);
  const fs::path out = artifact(name);
  fs::path partial = out;
  partial += ".partial";

  AnswerGenerator& gen = generator();
  Fingerprint fp("qa");
  fp.add(to_string(kind)).add(gen.identifier()).file(config_.qa).file(config_.corpus);
  fp.keys(config_, {"seed", "split.", "qa.top_n", "qa.max_tokens", "prompt."});

  fs::path index_path, ckpt, encoded;
  const std::string model = std::string(to_string(kind));
  switch (kind) {
    case RetrieverKind::Bm25:
      index_path = require(artifacts::kIndex, "index");
      fp.file(index_path);
      break;
    case RetrieverKind::TwoTower:
    case RetrieverKind::LateInteraction:
      ckpt = require(artifacts::checkpoint(kind), "train " + model);
      encoded = require(artifacts::encoded(kind), "encode " + model);
      fp.file(ckpt).file(encoded);
      break;
    case RetrieverKind::Gold:
      fp.file(config_.qrels);
      break;
    case RetrieverKind::None:
      break;
  }

  const bool same_inputs = fs::exists(out) && read_stamp(config_.workdir, name) == fp.hex();
  if (same_inputs && !fs::exists(partial)) {
    log_ << "[qa] " << out.string() << " is up to date\n";
    return {StageStatus::UpToDate, {out}};
  }
  if (!same_inputs) {
    fs::remove(out);
    fs::remove(partial);
  }
  write_stamp(config_.workdir, name, fp);

  const Data& d = data();
  std::optional<Bm25Index> index;
  std::optional<TwoTowerModel> two_tower;
  std::optional<EmbeddingMatrix> matrix;
  std::optional<LateInteractionModel> late;
  std::optional<TokenEmbeddingStore> store;
  std::unique_ptr<Retriever> r;
  switch (kind) {
    case RetrieverKind::Bm25:
      index = Bm25Index::load(index_path);
      r = std::make_unique<Bm25Retriever>(*index);
      break;
    case RetrieverKind::TwoTower:
      two_tower = two_tower_from_checkpoint(load_checkpoint(ckpt));
      matrix = load_embeddings(encoded);
      r = std::make_unique<TwoTowerRetriever>(*two_tower, *matrix);
      break;
    case RetrieverKind::LateInteraction:
      late = late_interaction_from_checkpoint(load_checkpoint(ckpt));
      store = load_token_store(encoded);
      r = std::make_unique<LateInteractionRetriever>(*late, *store);
      break;
    case RetrieverKind::Gold:
      r = std::make_unique<GoldRetriever>(d.qrels);
      break;
    case RetrieverKind::None:
      r = std::make_unique<NoRetriever>();
      break;
  }
  QAConfig cfg = config_.qa_run;
  cfg.retriever = kind;
  const QABatchResult result = run_qa_batch(cfg, d.split.test, *r, d.corpus, gen, config_.prompt, out);
  log_ << "[qa] " << model << ": " << result.generated << " generated, " << result.resumed
       << " resumed, mean generation latency " << fixed(result.mean_latency_ms(), 3) << " ms -> " << out.string()
       << "\n";
  return {StageStatus::Ran, {out}};
}

std::vector<MetricReport> Pipeline::eval_retrieval() {
  const Data& d = data();
  std::vector<MetricReport> reports;
  for (RetrieverKind kind : kSearchable) {
    const fs::path path = artifact(artifacts::run(kind));
    if (!fs::exists(path)) continue;
    reports.push_back(evaluate_retrieval(read_run(path), d.qrels, config_.recall_ks, config_.mrr_ks,
                                         std::string(to_string(kind))));
  }
  if (reports.empty()) throw MissingArtifact("no run-*.trec in " + config_.workdir.string() + "; run search first");
  if (reports.front().label == to_string(RetrieverKind::Bm25)) {
    for (std::size_t i = 1; i < reports.size(); ++i) annotate_against(reports[i], reports.front());
  }
  write_report_tsv(reports, artifact("report-retrieval.tsv"));
  write_report_json(reports, artifact("report-retrieval.json"));
  for (const auto& r : reports) {
    log_ << "[eval] " << r.label;
    for (const auto& m : r.metrics) log_ << " " << m << " " << fixed(r.mean(m));
    log_ << "\n";
  }
  return reports;
}

std::vector<MetricReport> Pipeline::eval_qa() {
  const Data& d = data();
  std::vector<MetricReport> reports;
  for (RetrieverKind kind : kAnswering) {
    const fs::path path = artifact(artifacts::generations(kind));
    if (!fs::exists(path)) continue;
    fs::path partial = path;
    partial += ".partial";
    if (fs::exists(partial)) {
      log_ << "[eval] skipping unfinished " << path.string() << "\n";
      continue;
    }
    const auto answers = load_generations(path);
    reports.push_back(evaluate_qa(generations_by_qid(answers), d.split.test, std::string(to_string(kind))));
  }
  if (reports.empty()) {
    throw MissingArtifact("no finished generations-*.jsonl in " + config_.workdir.string() + "; run qa first");
  }
  if (reports.front().label == to_string(RetrieverKind::None)) {
    for (std::size_t i = 1; i < reports.size(); ++i) annotate_against(reports[i], reports.front());
  }
  write_report_tsv(reports, artifact("report-qa.tsv"));
  write_report_json(reports, artifact("report-qa.json"));
  for (const auto& r : reports) {
    log_ << "[eval] " << r.label << " f1 " << fixed(r.mean("f1")) << " rouge_l " << fixed(r.mean("rouge_l"))
         << " bleu_1 " << fixed(r.mean("bleu_1")) << "\n";
  }
  return reports;
}

const MetricReport* E2EResult::qa_report(RetrieverKind retriever) const {
  for (const auto& r : qa) {
    if (r.label == to_string(retriever)) return &r;
  }
  return nullptr;
}

E2EResult Pipeline::e2e() {
  if (config_.scorer != BackendKind::Mock || config_.generator != BackendKind::Mock) {
    log_ << "[e2e] using the mock scorer and generator; endpoint settings are ignored\n";
  }
  config_.scorer = BackendKind::Mock;
  config_.generator = BackendKind::Mock;
  scorer_.reset();
  generator_.reset();

  index();
  weaklabel_run();
  weaklabel_eval();
  for (RetrieverKind model : {RetrieverKind::TwoTower, RetrieverKind::LateInteraction}) {
    train(model);
    encode(model);
  }
  for (RetrieverKind kind : kSearchable) search(kind);
  for (RetrieverKind kind : kAnswering) qa(kind);

  E2EResult result;
  result.retrieval = eval_retrieval();
  result.qa = eval_qa();
  std::vector<MetricReport> all = result.retrieval;
  all.insert(all.end(), result.qa.begin(), result.qa.end());
  write_report_tsv(all, artifact(artifacts::kReport));
  write_report_json(all, artifact(artifacts::kReportJson));
  log_ << "[e2e] report -> " << artifact(artifacts::kReport).string() << "\n";
  return result;
}

// ---------------------------------------------------------------------------

SplitSizes synthetic_split(std::size_t questions) {
  SplitSizes s;
  s.train = questions * 3 / 5;
  s.validation = questions / 5;
  s.test = questions - s.train - s.validation;
  return s;
}

std::filesystem::path write_synthetic_workspace(const SyntheticConfig& config, const std::filesystem::path& dir) {
  save_synthetic(make_synthetic(config), dir);
  const SplitSizes split = synthetic_split(config.questions);
  const fs::path conf = dir / "wrag.conf";
  std::ofstream out(conf, std::ios::binary | std::ios::trunc);
  out << "# bundled synthetic dataset, generator seed " << config.seed << "\n"
      << "corpus = corpus.jsonl\n"
      << "qa = qa.jsonl\n"
      << "qrels = qrels.tsv\n"
      << "workdir = work\n"
      << "split.train = " << split.train << "\n"
      << "split.validation = " << split.validation << "\n"
      << "split.test = " << split.test << "\n";
  if (!out) throw DataError("cannot write " + conf.string());
  return conf;
}

PipelineConfig with_bundled_dataset(PipelineConfig config, const SyntheticConfig& synthetic) {
  if (!config.corpus.empty()) return config;
  const fs::path dir = config.workdir / "data";
  save_synthetic(make_synthetic(synthetic), dir);
  config.corpus = dir / "corpus.jsonl";
  config.qa = dir / "qa.jsonl";
  config.qrels = dir / "qrels.tsv";
  if (!config.is_explicit("split.train") && !config.is_explicit("split.validation") &&
      !config.is_explicit("split.test")) {
    config.split = synthetic_split(synthetic.questions);
  }
  return config;
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const MissingArtifact*>(&error)) return 2;
  if (dynamic_cast<const TransportError*>(&error)) return 3;
  return 1;
}

}  // namespace wrag
