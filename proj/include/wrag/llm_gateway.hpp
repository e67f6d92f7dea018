// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace wrag {

// ---------------------------------------------------------------------------
// Prompts

enum class PromptOrdering {
  PassageQuestionInstruction,
  PassageInstructionQuestion,
  InstructionPassageQuestion,
};

std::string_view to_string(PromptOrdering ordering);
/// Accepts "passage-question-instruction" style names (case-insensitive,
/// '-' or '_'). Throws InvalidArgument otherwise.
PromptOrdering parse_prompt_ordering(std::string_view name);

/// Editable prompt wording. Defaults label passages "DOCUMENT" and order the
/// scoring prompt passage, question, instruction.
struct PromptTemplate {
  std::string passage_label = "DOCUMENT";
  std::string question_label = "QUESTION";
  std::string instruction_label = "INSTRUCTION";
  std::string answer_label = "ANSWER";
  PromptOrdering score_ordering = PromptOrdering::PassageQuestionInstruction;
  std::string score_instruction =
      "Answer the question using only the information in the document above. "
      "Respond with a short answer.";
  std::string qa_instruction =
      "Answer the question using the documents above. If the documents are not "
      "helpful, answer using your internal knowledge. Respond with a short answer.";
  /// Optional static worked example prepended to every prompt; empty = none.
  std::string example;

  /// Throws InvalidArgument on an empty label.
  void validate() const;
  /// Hash over every field; recorded as weak-label provenance.
  std::uint64_t fingerprint() const;
};

/// Scoring prompt; ends with "<answer_label>:" so the answer continuation
/// can be appended after a single space. Throws InvalidArgument on an empty
/// passage or question.
std::string build_score_prompt(std::string_view passage, std::string_view question,
                               const PromptTemplate& tmpl = {});

/// QA prompt with passages in rank order, each in its own labeled block,
/// followed by the question and instruction. Zero passages yields the
/// no-retrieval prompt.
std::string build_qa_prompt(std::span<const std::string> passages, std::string_view question,
                            const PromptTemplate& tmpl = {});

/// Text appended to a scoring prompt for an answer.
std::string answer_continuation(std::string_view answer);

// ---------------------------------------------------------------------------
// Endpoint client

struct TokenLogProb {
  std::string token;
  double logprob = 0.0;
};

struct EndpointConfig {
  /// e.g. "http://localhost:8000/v1"; requests go to <base_url>/completions.
  std::string base_url;
  std::string api_key_env = "WRAG_API_KEY";
  std::string model;
  double timeout_seconds = 60.0;
  std::size_t max_in_flight = 4;
  std::size_t retries = 3;
  /// First retry delay; doubled on every further attempt.
  double backoff_seconds = 0.5;

  /// Throws InvalidArgument if timeout <= 0, max_in_flight < 1 or the URL is
  /// not http(s).
  void validate() const;
};

/// Mean of the reported log-probabilities. Throws DataError when empty, and
/// when a value is positive or non-finite.
double mean_log_likelihood(std::span<const TokenLogProb> tokens);

/// Log-probabilities of the tokens overlapping [answer_begin, answer_end) in
/// an OpenAI-style completions response (choices[0].logprobs with tokens,
/// token_logprobs, text_offset). Throws DataError if log-probabilities are
/// missing.
std::vector<TokenLogProb> answer_logprobs_from_response(const nlohmann::json& response,
                                                        std::size_t answer_begin,
                                                        std::size_t answer_end);

/// Recorded fixture: JSON array of {"token": ..., "logprob": ...}.
std::vector<TokenLogProb> parse_logprob_fixture(const nlohmann::json& fixture);

/// Completion-style HTTP client. Uses "echo" scoring (prompt + answer sent
/// with echo=true, logprobs requested) to read per-token answer
/// log-probabilities. When the service omits text offsets, a second
/// prompt-only request supplies the prompt's token count instead.
class CompletionClient {
 public:
  explicit CompletionClient(EndpointConfig config);
  ~CompletionClient();
  CompletionClient(const CompletionClient&) = delete;
  CompletionClient& operator=(const CompletionClient&) = delete;

  const EndpointConfig& config() const { return config_; }

  /// Throws TransportError after exhausting retries, DataError on a response
  /// without log-probabilities.
  std::vector<TokenLogProb> answer_token_logprobs(const std::string& prompt,
                                                  const std::string& continuation);
  /// Greedy completion (temperature 0) capped at max_tokens.
  std::string complete(const std::string& prompt, int max_tokens);

  /// Number of HTTP requests issued so far (including retries).
  std::size_t request_count() const;

 private:
  nlohmann::json post(const nlohmann::json& body);

  struct Impl;
  EndpointConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Mean answer log-likelihood given a scoring prompt (the prompt must not
/// already contain the answer).
double score_answer_loglik(CompletionClient& client, const std::string& prompt,
                           std::string_view answer);

// ---------------------------------------------------------------------------
// Relevance scorers

enum class ScoreFamily {
  LogLikelihood,  // finite reals <= 0
  Containment,    // reals in [0, 1]
};

struct ScoreQuery {
  std::string_view passage;
  std::string_view question;
  std::string_view answer;
};

/// How well a passage elicits an answer. Implementations return one score per
/// query, in query order, whatever order the work completes in.
class RelevanceScorer {
 public:
  virtual ~RelevanceScorer() = default;
  virtual ScoreFamily family() const = 0;
  virtual std::string identifier() const = 0;
  virtual std::vector<double> score_batch(std::span<const ScoreQuery> queries) = 0;

  double score(std::string_view passage, std::string_view question, std::string_view answer);
  /// Total single-query invocations served.
  std::size_t invocations() const { return invocations_; }

 protected:
  void count_invocations(std::size_t n) { invocations_ += n; }

 private:
  std::size_t invocations_ = 0;
};

/// Fraction of distinct answer tokens present in the passage's token set.
/// Returns 0 for an answer without tokens.
double mock_containment_score(std::string_view passage, std::string_view question,
                              std::string_view answer);

/// Offline scorer: mock_containment_score. Pure and deterministic.
class ContainmentScorer final : public RelevanceScorer {
 public:
  ScoreFamily family() const override { return ScoreFamily::Containment; }
  std::string identifier() const override { return "containment-mock"; }
  std::vector<double> score_batch(std::span<const ScoreQuery> queries) override;
};

/// Scores cached on (model, prompt hash, answer). Thread-safe. Optional
/// JSONL persistence so reruns skip the endpoint.
class ScoreCache {
 public:
  ScoreCache() = default;
  explicit ScoreCache(std::filesystem::path path);

  std::optional<double> get(std::string_view model, std::string_view prompt,
                            std::string_view answer) const;
  void put(std::string_view model, std::string_view prompt, std::string_view answer, double value);
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::uint64_t, std::string>;
  mutable std::mutex mu_;
  std::map<Key, double> entries_;
  std::optional<std::filesystem::path> path_;
};

/// Answer log-likelihood from a completion endpoint, with up to
/// max_in_flight concurrent requests.
class CompletionScorer final : public RelevanceScorer {
 public:
  CompletionScorer(CompletionClient& client, PromptTemplate tmpl,
                   std::shared_ptr<ScoreCache> cache = nullptr);

  ScoreFamily family() const override { return ScoreFamily::LogLikelihood; }
  std::string identifier() const override;
  std::vector<double> score_batch(std::span<const ScoreQuery> queries) override;

 private:
  CompletionClient& client_;
  PromptTemplate template_;
  std::shared_ptr<ScoreCache> cache_;
};

// ---------------------------------------------------------------------------
// Generation

class AnswerGenerator {
 public:
  virtual ~AnswerGenerator() = default;
  virtual std::string identifier() const = 0;
  /// Throws InvalidArgument if max_tokens < 1, DataError on an empty
  /// completion, TransportError on transport failure.
  virtual std::string generate(const std::string& prompt, int max_tokens) = 0;
};

inline constexpr int kDefaultMaxAnswerTokens = 20;

/// Deterministic offline generator: echoes the first sentence of the first
/// passage block in the prompt, cut to max_tokens whitespace-separated words.
/// Without a passage it answers "I do not know."
class MockGenerator final : public AnswerGenerator {
 public:
  explicit MockGenerator(PromptTemplate tmpl = {}) : template_(std::move(tmpl)) {}
  std::string identifier() const override { return "echo-mock"; }
  std::string generate(const std::string& prompt, int max_tokens) override;

 private:
  PromptTemplate template_;
};

class CompletionGenerator final : public AnswerGenerator {
 public:
  explicit CompletionGenerator(CompletionClient& client) : client_(client) {}
  std::string identifier() const override;
  std::string generate(const std::string& prompt, int max_tokens) override;

 private:
  CompletionClient& client_;
};

/// Validates max_tokens and the completion, then returns it trimmed.
std::string generate_answer(AnswerGenerator& generator, const std::string& prompt,
                            int max_tokens = kDefaultMaxAnswerTokens);

}  // namespace wrag
