// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/llm_gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "wrag/errors.hpp"
#include "wrag/hash.hpp"
#include "wrag/tokenizer.hpp"

namespace wrag {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Prompts

std::string_view to_string(PromptOrdering ordering) {
  switch (ordering) {
    case PromptOrdering::PassageQuestionInstruction:
      return "passage-question-instruction";
    case PromptOrdering::PassageInstructionQuestion:
      return "passage-instruction-question";
    case PromptOrdering::InstructionPassageQuestion:
      return "instruction-passage-question";
  }
  return "unknown";
}

PromptOrdering parse_prompt_ordering(std::string_view name) {
  std::string norm;
  for (char c : name) norm.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (auto o : {PromptOrdering::PassageQuestionInstruction, PromptOrdering::PassageInstructionQuestion,
                 PromptOrdering::InstructionPassageQuestion}) {
    if (norm == to_string(o)) return o;
  }
  throw InvalidArgument("unknown prompt ordering \"" + std::string(name) + "\"");
}

void PromptTemplate::validate() const {
  if (passage_label.empty() || question_label.empty() || instruction_label.empty() ||
      answer_label.empty()) {
    throw InvalidArgument("prompt labels must be non-empty");
  }
}

std::uint64_t PromptTemplate::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (std::string_view part : {std::string_view(passage_label), std::string_view(question_label),
                                std::string_view(instruction_label), std::string_view(answer_label),
                                to_string(score_ordering), std::string_view(score_instruction),
                                std::string_view(qa_instruction), std::string_view(example)}) {
    h = fnv1a64(part, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  }
  return h;
}

namespace {

std::string section(std::string_view label, std::string_view body) {
  std::string out(label);
  out += ": ";
  out += body;
  return out;
}

std::string join_blocks(const std::vector<std::string>& blocks) {
  std::string out;
  for (const auto& b : blocks) {
    out += b;
    out += "\n\n";
  }
  return out;
}

}  // namespace

std::string build_score_prompt(std::string_view passage, std::string_view question,
                               const PromptTemplate& tmpl) {
  tmpl.validate();
  if (passage.empty()) throw InvalidArgument("scoring prompt needs a non-empty passage");
  if (question.empty()) throw InvalidArgument("scoring prompt needs a non-empty question");
  const std::string p = section(tmpl.passage_label, passage);
  const std::string q = section(tmpl.question_label, question);
  const std::string i = section(tmpl.instruction_label, tmpl.score_instruction);
  std::vector<std::string> blocks;
  if (!tmpl.example.empty()) blocks.push_back(tmpl.example);
  switch (tmpl.score_ordering) {
    case PromptOrdering::PassageQuestionInstruction:
      blocks.insert(blocks.end(), {p, q, i});
      break;
    case PromptOrdering::PassageInstructionQuestion:
      blocks.insert(blocks.end(), {p, i, q});
      break;
    case PromptOrdering::InstructionPassageQuestion:
      blocks.insert(blocks.end(), {i, p, q});
      break;
  }
  return join_blocks(blocks) + tmpl.answer_label + ":";
}

std::string build_qa_prompt(std::span<const std::string> passages, std::string_view question,
                            const PromptTemplate& tmpl) {
  tmpl.validate();
  std::vector<std::string> blocks;
  if (!tmpl.example.empty()) blocks.push_back(tmpl.example);
  for (const std::string& passage : passages) blocks.push_back(section(tmpl.passage_label, passage));
  blocks.push_back(section(tmpl.question_label, question));
  blocks.push_back(section(tmpl.instruction_label, tmpl.qa_instruction));
  return join_blocks(blocks) + tmpl.answer_label + ":";
}

std::string answer_continuation(std::string_view answer) {
  std::string out(" ");
  out += answer;
  return out;
}

// ---------------------------------------------------------------------------
// Log-probabilities

double mean_log_likelihood(std::span<const TokenLogProb> tokens) {
  if (tokens.empty()) throw DataError("service reported zero answer tokens");
  double sum = 0.0;
  for (const TokenLogProb& t : tokens) {
    if (!std::isfinite(t.logprob)) throw DataError("non-finite log-probability for token \"" + t.token + "\"");
    if (t.logprob > 0.0) throw DataError("positive log-probability for token \"" + t.token + "\"");
    sum += t.logprob;
  }
  return sum / static_cast<double>(tokens.size());
}

namespace {

const json& logprobs_block(const json& response) {
  if (!response.is_object() || !response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    throw DataError("completion response has no choices");
  }
  const json& choice = response["choices"][0];
  if (!choice.contains("logprobs") || !choice["logprobs"].is_object()) {
    throw DataError("completion response is missing log-probabilities");
  }
  const json& lp = choice["logprobs"];
  if (!lp.contains("tokens") || !lp.contains("token_logprobs") || !lp["tokens"].is_array() ||
      !lp["token_logprobs"].is_array() || lp["tokens"].size() != lp["token_logprobs"].size()) {
    throw DataError("completion response is missing log-probabilities");
  }
  return lp;
}

TokenLogProb token_at(const json& lp, std::size_t i) {
  const json& value = lp["token_logprobs"][i];
  if (!value.is_number()) {
    throw DataError("completion response is missing the log-probability of answer token " +
                    std::to_string(i));
  }
  return TokenLogProb{lp["tokens"][i].get<std::string>(), value.get<double>()};
}

}  // namespace

std::vector<TokenLogProb> answer_logprobs_from_response(const json& response,
                                                        std::size_t answer_begin,
                                                        std::size_t answer_end) {
  const json& lp = logprobs_block(response);
  const json& tokens = lp["tokens"];
  std::vector<std::size_t> offsets;
  if (lp.contains("text_offset") && lp["text_offset"].is_array() &&
      lp["text_offset"].size() == tokens.size()) {
    for (const json& o : lp["text_offset"]) offsets.push_back(o.get<std::size_t>());
  } else {
    throw DataError("completion response is missing text offsets");
  }
  std::vector<TokenLogProb> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t begin = offsets[i];
    const std::size_t end = begin + tokens[i].get<std::string>().size();
    const bool overlaps = begin < answer_end && end > answer_begin;
    // Zero-width tokens at the answer start (e.g. BOS markers) are not part of it.
    if (overlaps && end > begin) out.push_back(token_at(lp, i));
  }
  return out;
}

std::vector<TokenLogProb> parse_logprob_fixture(const json& fixture) {
  if (!fixture.is_array()) throw DataError("logprob fixture must be a JSON array");
  std::vector<TokenLogProb> out;
  for (const json& item : fixture) {
    if (!item.is_object() || !item.contains("token") || !item.contains("logprob") ||
        !item["token"].is_string() || !item["logprob"].is_number()) {
      throw DataError("logprob fixture entries need string \"token\" and numeric \"logprob\"");
    }
    out.push_back(TokenLogProb{item["token"].get<std::string>(), item["logprob"].get<double>()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CompletionClient

void EndpointConfig::validate() const {
  if (!(timeout_seconds > 0)) throw InvalidArgument("endpoint timeout must be > 0");
  if (max_in_flight < 1) throw InvalidArgument("endpoint max_in_flight must be >= 1");
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw InvalidArgument("endpoint base_url must start with http:// or https://");
  }
}

struct CompletionClient::Impl {
  std::string scheme_host_port;
  std::string path_prefix;
  std::string api_key;
  std::atomic<std::size_t> requests{0};
};

CompletionClient::CompletionClient(EndpointConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  config_.validate();
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, url_re)) {
    throw InvalidArgument("malformed endpoint base_url " + config_.base_url);
  }
  impl_->scheme_host_port = m[1].str();
  impl_->path_prefix = m[2].matched ? m[2].str() : "";
  while (!impl_->path_prefix.empty() && impl_->path_prefix.back() == '/') impl_->path_prefix.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (config_.base_url.rfind("https://", 0) == 0) {
    throw InvalidArgument("this build has no TLS support; use an http:// endpoint");
  }
#endif
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) impl_->api_key = key;
  }
}

CompletionClient::~CompletionClient() = default;

std::size_t CompletionClient::request_count() const { return impl_->requests.load(); }

json CompletionClient::post(const json& body) {
  const std::string path = impl_->path_prefix + "/completions";
  const std::string payload = body.dump();
  const auto seconds = static_cast<time_t>(config_.timeout_seconds);
  const auto micros = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(seconds)) * 1e6);
  httplib::Headers headers;
  if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);

  std::string last_error;
  for (std::size_t attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      const double delay = config_.backoff_seconds * std::pow(2.0, static_cast<double>(attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    httplib::Client client(impl_->scheme_host_port);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    ++impl_->requests;
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError("endpoint rejected request with HTTP " + std::to_string(res->status) +
                           ": " + res->body.substr(0, 200));
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw DataError(std::string("endpoint returned invalid JSON: ") + e.what());
    }
  }
  throw TransportError("request to " + config_.base_url + " failed after " +
                       std::to_string(config_.retries + 1) + " attempts: " + last_error);
}

std::vector<TokenLogProb> CompletionClient::answer_token_logprobs(const std::string& prompt,
                                                                  const std::string& continuation) {
  if (continuation.empty()) throw InvalidArgument("answer continuation is empty");
  const std::string full = prompt + continuation;
  json body = {{"model", config_.model}, {"prompt", full},   {"max_tokens", 1},
               {"echo", true},           {"logprobs", 1},    {"temperature", 0}};
  const json response = post(body);
  const json& lp = logprobs_block(response);
  if (lp.contains("text_offset") && lp["text_offset"].is_array() &&
      lp["text_offset"].size() == lp["tokens"].size()) {
    return answer_logprobs_from_response(response, prompt.size(), full.size());
  }

  // No offsets: count the prompt's own tokens with a second request. Both
  // responses end with the generated tokens reported in usage (default 1).
  auto generated = [](const json& r) -> std::size_t {
    if (r.contains("usage") && r["usage"].is_object() && r["usage"].contains("completion_tokens")) {
      return r["usage"]["completion_tokens"].get<std::size_t>();
    }
    return 1;
  };
  json prompt_body = body;
  prompt_body["prompt"] = prompt;
  const json prompt_response = post(prompt_body);
  const json& plp = logprobs_block(prompt_response);
  const std::size_t n_prompt = plp["tokens"].size() - std::min(plp["tokens"].size(), generated(prompt_response));
  const std::size_t n_full = lp["tokens"].size() - std::min(lp["tokens"].size(), generated(response));
  std::vector<TokenLogProb> out;
  for (std::size_t i = n_prompt; i < n_full; ++i) out.push_back(token_at(lp, i));
  return out;
}

std::string CompletionClient::complete(const std::string& prompt, int max_tokens) {
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  json body = {{"model", config_.model}, {"prompt", prompt}, {"max_tokens", max_tokens},
               {"temperature", 0}};
  const json response = post(body);
  if (!response.contains("choices") || !response["choices"].is_array() || response["choices"].empty() ||
      !response["choices"][0].contains("text") || !response["choices"][0]["text"].is_string()) {
    throw DataError("completion response has no text");
  }
  return response["choices"][0]["text"].get<std::string>();
}

double score_answer_loglik(CompletionClient& client, const std::string& prompt,
                           std::string_view answer) {
  if (answer.empty()) throw InvalidArgument("answer must be non-empty");
  const auto tokens = client.answer_token_logprobs(prompt, answer_continuation(answer));
  return mean_log_likelihood(tokens);
}

// ---------------------------------------------------------------------------
// Scorers

double RelevanceScorer::score(std::string_view passage, std::string_view question,
                              std::string_view answer) {
  const ScoreQuery q{passage, question, answer};
  return score_batch(std::span<const ScoreQuery>(&q, 1)).front();
}

double mock_containment_score(std::string_view passage, std::string_view /*question*/,
                              std::string_view answer) {
  const TokenSeq answer_tokens = tokenize(answer);
  const std::set<std::string> wanted(answer_tokens.begin(), answer_tokens.end());
  if (wanted.empty()) return 0.0;
  const TokenSeq passage_tokens = tokenize(passage);
  const std::set<std::string> present(passage_tokens.begin(), passage_tokens.end());
  std::size_t hits = 0;
  for (const auto& t : wanted) hits += present.count(t);
  return static_cast<double>(hits) / static_cast<double>(wanted.size());
}

std::vector<double> ContainmentScorer::score_batch(std::span<const ScoreQuery> queries) {
  count_invocations(queries.size());
  std::vector<double> out;
  out.reserve(queries.size());
  for (const ScoreQuery& q : queries) out.push_back(mock_containment_score(q.passage, q.question, q.answer));
  return out;
}

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      entries_[Key{j.at("model").get<std::string>(), j.at("prompt_hash").get<std::uint64_t>(),
                   j.at("answer").get<std::string>()}] = j.at("score").get<double>();
    } catch (const std::exception&) {
      // A torn final line from an interrupted run; the entry is recomputed.
    }
  }
}

std::optional<double> ScoreCache::get(std::string_view model, std::string_view prompt,
                                      std::string_view answer) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(Key{std::string(model), fnv1a64(prompt), std::string(answer)});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::put(std::string_view model, std::string_view prompt, std::string_view answer,
                     double value) {
  std::lock_guard lock(mu_);
  const std::uint64_t prompt_hash = fnv1a64(prompt);
  entries_[Key{std::string(model), prompt_hash, std::string(answer)}] = value;
  if (path_) {
    std::ofstream out(*path_, std::ios::app);
    out << json{{"model", model}, {"prompt_hash", prompt_hash}, {"answer", answer}, {"score", value}}.dump()
        << '\n';
  }
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

CompletionScorer::CompletionScorer(CompletionClient& client, PromptTemplate tmpl,
                                   std::shared_ptr<ScoreCache> cache)
    : client_(client), template_(std::move(tmpl)), cache_(std::move(cache)) {
  template_.validate();
}

std::string CompletionScorer::identifier() const { return "completion-loglik:" + client_.config().model; }

std::vector<double> CompletionScorer::score_batch(std::span<const ScoreQuery> queries) {
  count_invocations(queries.size());
  std::vector<double> results(queries.size(), 0.0);
  std::vector<std::string> prompts(queries.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].answer.empty()) throw InvalidArgument("answer must be non-empty");
    prompts[i] = build_score_prompt(queries[i].passage, queries[i].question, template_);
    if (cache_) {
      if (auto hit = cache_->get(client_.config().model, prompts[i], queries[i].answer)) {
        results[i] = *hit;
        continue;
      }
    }
    pending.push_back(i);
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      {
        std::lock_guard lock(error_mu);
        if (first_error) return;
      }
      const std::size_t i = pending[k];
      try {
        const double value = score_answer_loglik(client_, prompts[i], queries[i].answer);
        results[i] = value;
        if (cache_) cache_->put(client_.config().model, prompts[i], queries[i].answer, value);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min(client_.config().max_in_flight, pending.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string first_sentence(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      return std::string(text.substr(0, i + 1));
    }
  }
  return std::string(text);
}

std::string first_words(std::string_view text, int max_words) {
  std::istringstream in{std::string(text)};
  std::string word, out;
  for (int n = 0; n < max_words && (in >> word); ++n) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

}  // namespace

std::string MockGenerator::generate(const std::string& prompt, int max_tokens) {
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  std::size_t from = 0;
  if (!template_.example.empty() && prompt.rfind(template_.example, 0) == 0) from = template_.example.size();
  const std::string marker = template_.passage_label + ": ";
  std::size_t pos = prompt.find(marker, from);
  while (pos != std::string::npos && pos != from && prompt[pos - 1] != '\n') pos = prompt.find(marker, pos + 1);
  if (pos == std::string::npos) return "I do not know.";
  const std::size_t begin = pos + marker.size();
  std::size_t end = prompt.find("\n\n", begin);
  if (end == std::string::npos) end = prompt.size();
  const std::string sentence = first_sentence(trim(std::string_view(prompt).substr(begin, end - begin)));
  const std::string answer = first_words(sentence, max_tokens);
  return answer.empty() ? "I do not know." : answer;
}

std::string CompletionGenerator::identifier() const { return "completion:" + client_.config().model; }

std::string CompletionGenerator::generate(const std::string& prompt, int max_tokens) {
  return client_.complete(prompt, max_tokens);
}

std::string generate_answer(AnswerGenerator& generator, const std::string& prompt, int max_tokens) {
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  std::string answer = trim(generator.generate(prompt, max_tokens));
  if (answer.empty()) throw DataError("generator returned an empty completion");
  return answer;
}

}  // namespace wrag
