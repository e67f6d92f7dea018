// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/rag_qa.hpp"

#include <chrono>
#include <fstream>
#include <set>

#include <json.hpp>

#include "wrag/errors.hpp"

namespace wrag {

std::string_view to_string(RetrieverKind kind) {
  switch (kind) {
    case RetrieverKind::Bm25: return "bm25";
    case RetrieverKind::TwoTower: return "two-tower";
    case RetrieverKind::LateInteraction: return "late-interaction";
    case RetrieverKind::None: return "none";
    case RetrieverKind::Gold: return "gold";
  }
  return "unknown";
}

RetrieverKind parse_retriever_kind(std::string_view name) {
  for (auto kind : {RetrieverKind::Bm25, RetrieverKind::TwoTower, RetrieverKind::LateInteraction,
                    RetrieverKind::None, RetrieverKind::Gold}) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidArgument("unknown retriever '" + std::string(name) +
                        "' (expected bm25, two-tower, late-interaction, none or gold)");
}

void QAConfig::validate() const {
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
}

namespace {

std::vector<std::string> pids_of(const std::vector<ScoredPid>& ranked) {
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (const auto& e : ranked) out.push_back(e.pid);
  return out;
}

}  // namespace

std::vector<std::string> Bm25Retriever::retrieve(const QAPair& qa, std::size_t n) {
  if (n == 0) return {};
  return pids_of(index_.retrieve_topk(qa.question, n));
}

std::vector<std::string> TwoTowerRetriever::retrieve(const QAPair& qa, std::size_t n) {
  if (n == 0) return {};
  return pids_of(search(model_, matrix_, qa.question, n));
}

std::vector<std::string> LateInteractionRetriever::retrieve(const QAPair& qa, std::size_t n) {
  if (n == 0) return {};
  return pids_of(search_maxsim(model_, store_, qa.question, n));
}

std::vector<std::string> GoldRetriever::retrieve(const QAPair& qa, std::size_t n) {
  auto it = qrels_.find(qa.qid);
  if (it == qrels_.end() || it->second.empty()) throw DataError("qid " + qa.qid + " missing from qrels");
  std::vector<std::string> out;
  for (const auto& pid : it->second) {
    if (out.size() == n) break;
    out.push_back(pid);
  }
  return out;
}

QAAnswer answer_question(const QAConfig& config, const QAPair& qa, Retriever& retriever, const Corpus& corpus,
                         AnswerGenerator& generator, const PromptTemplate& tmpl) {
  config.validate();
  if (retriever.kind() != config.retriever) {
    throw InvalidArgument("config selects " + std::string(to_string(config.retriever)) + " but the retriever is " +
                          std::string(to_string(retriever.kind())));
  }
  QAAnswer out;
  out.qid = qa.qid;
  out.used_pids = retriever.retrieve(qa, config.top_n);
  std::vector<std::string> passages;
  passages.reserve(out.used_pids.size());
  for (const auto& pid : out.used_pids) passages.push_back(corpus.at(pid).text);
  const std::string prompt = build_qa_prompt(passages, qa.question, tmpl);

  const auto start = std::chrono::steady_clock::now();
  out.answer = generate_answer(generator, prompt, config.max_tokens);
  out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double QABatchResult::mean_latency_ms() const {
  if (answers.empty()) return 0.0;
  double total = 0.0;
  for (const auto& a : answers) total += a.latency_ms;
  return total / static_cast<double>(answers.size());
}

namespace {

nlohmann::json to_json(const QAAnswer& a) {
  return {{"qid", a.qid}, {"answer", a.answer}, {"used_pids", a.used_pids}, {"latency_ms", a.latency_ms}};
}

std::filesystem::path partial_marker(const std::filesystem::path& output) {
  std::filesystem::path p = output;
  p += ".partial";
  return p;
}

}  // namespace

QABatchResult run_qa_batch(const QAConfig& config, std::span<const QAPair> qa_pairs, Retriever& retriever,
                           const Corpus& corpus, AnswerGenerator& generator, const PromptTemplate& tmpl,
                           const std::optional<std::filesystem::path>& output) {
  config.validate();
  std::map<std::string, QAAnswer, std::less<>> previous;
  std::ofstream sink;
  if (output) {
    if (std::filesystem::exists(*output)) {
      for (auto& a : load_generations(*output)) previous.emplace(a.qid, std::move(a));
    }
    std::ofstream(partial_marker(*output), std::ios::trunc) << "in progress\n";
    sink.open(*output, std::ios::binary | std::ios::app);
    if (!sink) throw DataError("cannot write " + output->string());
  }

  QABatchResult result;
  result.answers.reserve(qa_pairs.size());
  for (const QAPair& qa : qa_pairs) {
    if (auto it = previous.find(qa.qid); it != previous.end()) {
      result.answers.push_back(it->second);
      ++result.resumed;
      continue;
    }
    QAAnswer a = answer_question(config, qa, retriever, corpus, generator, tmpl);
    if (output) {
      sink << to_json(a).dump() << '\n';
      sink.flush();
    }
    result.answers.push_back(std::move(a));
    ++result.generated;
  }
  if (output) {
    sink.close();
    std::filesystem::remove(partial_marker(*output));
  }
  return result;
}

std::vector<QAAnswer> load_generations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open " + path.string());
  std::vector<QAAnswer> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(QAAnswer{j.at("qid").get<std::string>(), j.at("answer").get<std::string>(),
                             j.at("used_pids").get<std::vector<std::string>>(), j.at("latency_ms").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, std::string, std::less<>> generations_by_qid(std::span<const QAAnswer> answers) {
  std::map<std::string, std::string, std::less<>> out;
  for (const auto& a : answers) out[a.qid] = a.answer;
  return out;
}

}  // namespace wrag
