// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wrag/bm25.hpp"
#include "wrag/corpus_store.hpp"
#include "wrag/eval.hpp"
#include "wrag/late_interaction.hpp"
#include "wrag/llm_gateway.hpp"
#include "wrag/rag_qa.hpp"
#include "wrag/synthetic.hpp"
#include "wrag/two_tower.hpp"
#include "wrag/weak_labeler.hpp"

namespace wrag {

enum class BackendKind { Mock, Endpoint };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view name);

/// Everything a pipeline command needs. Keys in the config file mirror the
/// field names (see config_keys()).
struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path qa;
  std::filesystem::path qrels;
  std::filesystem::path workdir = "wrag-work";
  std::uint64_t seed = 13;

  Bm25Params bm25;
  std::size_t candidates = 100;  // first-stage K
  SplitSizes split;

  BackendKind scorer = BackendKind::Mock;
  BackendKind generator = BackendKind::Mock;
  EndpointConfig endpoint;
  PromptTemplate prompt;
  RerankOptions rerank;

  EncoderConfig encoder;
  TwoTowerTrainingConfig two_tower;
  LateInteractionTrainingConfig late_interaction;
  QAConfig qa_run;

  std::vector<std::size_t> recall_ks = {1, 5, 20, 100};
  std::vector<std::size_t> mrr_ks = {5};

  /// Keys set by a file or flag rather than left at their default.
  std::set<std::string, std::less<>> explicit_keys;

  /// Throws InvalidArgument when a data path is unset or missing, or a
  /// section's own validation fails.
  void validate() const;
  bool is_explicit(std::string_view key) const { return explicit_keys.contains(key); }
};

/// Every accepted key, in canonical order.
std::vector<std::string> config_keys();

/// Sets one key from its textual value. Throws InvalidArgument naming the
/// key when it is unknown or the value does not parse.
void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value);

/// Current textual value of a key.
std::string config_value(const PipelineConfig& config, std::string_view key);

/// `key = value` lines; blank lines and lines starting with '#' are
/// skipped, values may be wrapped in double quotes. Later lines win.
void apply_config_text(PipelineConfig& config, std::string_view text, std::string_view source = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical dump of the keys with one of the given prefixes (all keys when
/// empty), one `key = value` line each. Feeding it back reproduces the
/// config.
std::string dump_config(const PipelineConfig& config, std::span<const std::string_view> prefixes = {});

// ---------------------------------------------------------------------------
// Workdir artifacts

namespace artifacts {
inline constexpr std::string_view kIndex = "index.bin";
inline constexpr std::string_view kWeakLabels = "weaklabels.jsonl";
inline constexpr std::string_view kWeakLabelRecall = "weaklabel-recall.tsv";
inline constexpr std::string_view kReport = "report.tsv";
inline constexpr std::string_view kReportJson = "report.json";

std::string checkpoint(RetrieverKind model);    // checkpoint-{model}.bin
std::string training_log(RetrieverKind model);  // train-log-{model}.json
std::string encoded(RetrieverKind model);       // embeddings-two-tower.bin / tokens-late-interaction.bin
std::string run(RetrieverKind retriever);       // run-{retriever}.trec
std::string generations(RetrieverKind retriever);  // generations-{retriever}.jsonl
}  // namespace artifacts

enum class StageStatus { Ran, UpToDate };

struct StageResult {
  StageStatus status = StageStatus::Ran;
  std::vector<std::filesystem::path> outputs;
};

struct E2EResult {
  std::vector<MetricReport> retrieval;
  std::vector<MetricReport> qa;
  const MetricReport* qa_report(RetrieverKind retriever) const;
};

/// Runs pipeline stages against one workdir.
///
/// Each stage records a fingerprint of its inputs (artifact bytes and the
/// config keys it reads) under `<workdir>/stamps/`; a rerun whose
/// fingerprint matches an existing output does nothing. A stage whose
/// upstream artifact is missing throws MissingArtifact naming the command to
/// run first.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::ostream& log);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const PipelineConfig& config() const { return config_; }
  std::filesystem::path artifact(std::string_view name) const;

  StageResult index();
  StageResult weaklabel_run();
  /// Recall@k of the first-stage and reranked orders on the labeled
  /// questions, written to weaklabel-recall.tsv.
  RecallComparison weaklabel_eval();
  StageResult train(RetrieverKind model);
  StageResult encode(RetrieverKind model);
  /// Top-K over the test split.
  StageResult search(RetrieverKind retriever);
  /// Answers the test split with the given retriever (or qa.retriever).
  StageResult qa(std::optional<RetrieverKind> retriever = std::nullopt);
  /// One report per available run, annotated against bm25.
  std::vector<MetricReport> eval_retrieval();
  /// One report per available generations file, annotated against none.
  std::vector<MetricReport> eval_qa();
  /// Every stage with the mock scorer and generator, then both evaluations
  /// into report.tsv / report.json.
  E2EResult e2e();

  /// Overrides the backends for tests (the pipeline does not own them).
  void set_scorer(RelevanceScorer* scorer) { scorer_override_ = scorer; }
  void set_generator(AnswerGenerator* generator) { generator_override_ = generator; }

 private:
  struct Data;
  const Data& data();
  RelevanceScorer& scorer();
  AnswerGenerator& generator();
  std::filesystem::path require(std::string_view name, std::string_view command) const;

  PipelineConfig config_;
  std::ostream& log_;
  std::unique_ptr<Data> data_;
  std::unique_ptr<CompletionClient> client_;
  std::unique_ptr<RelevanceScorer> scorer_;
  std::unique_ptr<AnswerGenerator> generator_;
  RelevanceScorer* scorer_override_ = nullptr;
  AnswerGenerator* generator_override_ = nullptr;
};

/// Writes the bundled synthetic dataset plus a `wrag.conf` pointing at it
/// (with a split sized to the question count) into `dir`.
std::filesystem::path write_synthetic_workspace(const SyntheticConfig& config, const std::filesystem::path& dir);

/// Train / validation / test sizes used for a synthetic set of n questions:
/// 60% / 20% / 20%.
SplitSizes synthetic_split(std::size_t questions);

/// When no corpus is configured, writes the bundled synthetic dataset under
/// `<workdir>/data` and points the config at it. Split sizes follow
/// synthetic_split unless they were set explicitly.
PipelineConfig with_bundled_dataset(PipelineConfig config, const SyntheticConfig& synthetic = {});

/// 0 success, 1 usage or data error, 2 missing upstream artifact,
/// 3 transport failure.
int exit_code_for(const std::exception& error);

}  // namespace wrag
