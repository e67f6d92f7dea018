// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/corpus_store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "wrag/errors.hpp"
#include "wrag/random.hpp"

namespace wrag {
namespace {

using nlohmann::json;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string required_string(const json& record, const char* key, const std::string& loc) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw DataError(loc + ": missing string field \"" + key + "\"");
  }
  return it->get<std::string>();
}

}  // namespace

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
  std::sort(passages_.begin(), passages_.end(),
            [](const Passage& a, const Passage& b) { return a.pid < b.pid; });
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    if (passages_[i].pid.empty()) throw DataError("passage with empty pid");
    if (passages_[i].text.empty()) throw DataError("passage " + passages_[i].pid + " has empty text");
    if (i > 0 && passages_[i].pid == passages_[i - 1].pid) {
      throw DataError("duplicate pid " + passages_[i].pid);
    }
  }
}

std::size_t Corpus::index_of(std::string_view pid) const {
  auto it = std::lower_bound(passages_.begin(), passages_.end(), pid,
                             [](const Passage& p, std::string_view key) { return p.pid < key; });
  if (it == passages_.end() || it->pid != pid) return passages_.size();
  return static_cast<std::size_t>(it - passages_.begin());
}

const Passage* Corpus::find(std::string_view pid) const {
  const std::size_t i = index_of(pid);
  return i == passages_.size() ? nullptr : &passages_[i];
}

const Passage& Corpus::at(std::string_view pid) const {
  const Passage* p = find(pid);
  if (p == nullptr) throw DataError("unknown pid " + std::string(pid));
  return *p;
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<Passage> passages;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const std::string loc = where(path, line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(loc + ": malformed record: " + e.what());
    }
    if (!record.is_object()) throw DataError(loc + ": record is not an object");
    Passage p{required_string(record, "_id", loc), required_string(record, "text", loc)};
    if (p.pid.empty()) throw DataError(loc + ": empty _id");
    if (p.text.empty()) throw DataError(loc + ": empty text for " + p.pid);
    if (!seen.insert(p.pid).second) throw DataError(loc + ": duplicate pid " + p.pid);
    passages.push_back(std::move(p));
  }
  if (passages.empty()) throw DataError(path.string() + ": empty corpus file");
  return Corpus(std::move(passages));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const Passage& p : corpus.passages()) {
    out << json{{"_id", p.pid}, {"text", p.text}}.dump() << '\n';
  }
}

std::vector<QAPair> load_qa_pairs(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<QAPair> pairs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const std::string loc = where(path, line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(loc + ": malformed record: " + e.what());
    }
    if (!record.is_object()) throw DataError(loc + ": record is not an object");
    QAPair qa{required_string(record, "qid", loc), required_string(record, "question", loc), {}};
    auto answers = record.find("answers");
    if (answers == record.end() || !answers->is_array()) {
      throw DataError(loc + ": missing answers array");
    }
    for (const json& a : *answers) {
      if (!a.is_string() || a.get<std::string>().empty()) {
        throw DataError(loc + ": answers must be non-empty strings");
      }
      qa.answers.push_back(a.get<std::string>());
    }
    if (qa.qid.empty()) throw DataError(loc + ": empty qid");
    if (qa.question.empty()) throw DataError(loc + ": empty question for " + qa.qid);
    if (qa.answers.empty()) throw DataError(loc + ": empty answer list for " + qa.qid);
    if (!seen.insert(qa.qid).second) throw DataError(loc + ": duplicate qid " + qa.qid);
    pairs.push_back(std::move(qa));
  }
  return pairs;
}

void save_qa_pairs(std::span<const QAPair> pairs, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const QAPair& qa : pairs) {
    out << json{{"qid", qa.qid}, {"question", qa.question}, {"answers", qa.answers}}.dump()
        << '\n';
  }
}

Qrels load_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    std::istringstream fields(line);
    std::string qid, iter, pid, rel_text, extra;
    if (!(fields >> qid >> iter >> pid >> rel_text) || (fields >> extra)) {
      throw DataError(where(path, line_no) + ": expected 4 columns `qid 0 pid relevance`");
    }
    double relevance = 0.0;
    try {
      std::size_t used = 0;
      relevance = std::stod(rel_text, &used);
      if (used != rel_text.size()) throw std::invalid_argument(rel_text);
    } catch (const std::exception&) {
      throw DataError(where(path, line_no) + ": non-numeric relevance " + rel_text);
    }
    auto& relevant = qrels[qid];
    if (relevance > 0) relevant.insert(pid);
  }
  for (const auto& [qid, pids] : qrels) {
    if (pids.empty()) throw DataError(path.string() + ": qid " + qid + " has no relevant pid");
  }
  return qrels;
}

void save_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& [qid, pids] : qrels) {
    for (const auto& pid : pids) out << qid << "\t0\t" << pid << "\t1\n";
  }
}

void validate_qrels(const Qrels& qrels, const Corpus& corpus) {
  for (const auto& [qid, pids] : qrels) {
    if (pids.empty()) throw DataError("qid " + qid + " has no relevant pid");
    for (const auto& pid : pids) {
      if (!corpus.contains(pid)) throw DataError("qrels for " + qid + " reference unknown pid " + pid);
    }
  }
}

DatasetSplit split_qa(std::span<const QAPair> pairs, std::uint64_t seed, SplitSizes sizes) {
  const std::size_t wanted = sizes.train + sizes.validation + sizes.test;
  if (wanted > pairs.size()) {
    throw InvalidArgument("split sizes sum to " + std::to_string(wanted) + " but only " +
                          std::to_string(pairs.size()) + " pairs are available");
  }
  // Canonical order first so the sample is a function of the set alone.
  std::vector<const QAPair*> order;
  order.reserve(pairs.size());
  for (const QAPair& qa : pairs) order.push_back(&qa);
  std::sort(order.begin(), order.end(),
            [](const QAPair* a, const QAPair* b) { return a->qid < b->qid; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->qid == order[i - 1]->qid) throw DataError("duplicate qid " + order[i]->qid);
  }
  Rng rng(seed);
  shuffle(order, rng);

  DatasetSplit split;
  auto take = [&, next = std::size_t{0}](std::vector<QAPair>& dst, std::size_t n) mutable {
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) dst.push_back(*order[next++]);
  };
  take(split.train, sizes.train);
  take(split.validation, sizes.validation);
  take(split.test, sizes.test);
  return split;
}

void validate_ranked_list(const RankedList& list) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    if (!seen.insert(list.entries[i].pid).second) {
      throw DataError("ranked list " + list.qid + " repeats pid " + list.entries[i].pid);
    }
    if (i > 0 && list.entries[i].score > list.entries[i - 1].score) {
      throw DataError("ranked list " + list.qid + " is not sorted by descending score");
    }
  }
}

void write_run(std::span<const RankedList> run, const std::filesystem::path& path,
               std::string_view tag) {
  auto out = open_output(path);
  char score[64];
  for (const RankedList& list : run) {
    validate_ranked_list(list);
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
      std::snprintf(score, sizeof(score), "%.6f", list.entries[i].score);
      out << list.qid << " Q0 " << list.entries[i].pid << ' ' << (i + 1) << ' ' << score << ' '
          << tag << '\n';
    }
  }
}

Run read_run(const std::filesystem::path& path) {
  auto in = open_input(path);
  Run run;
  std::map<std::string, std::size_t, std::less<>> position;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const std::string loc = where(path, line_no);
    std::istringstream fields(line);
    std::string qid, q0, pid, rank_text, score_text, tag, extra;
    if (!(fields >> qid >> q0 >> pid >> rank_text >> score_text >> tag) || (fields >> extra)) {
      throw DataError(loc + ": expected 6 columns `qid Q0 pid rank score tag`");
    }
    double score = 0.0;
    long rank = 0;
    try {
      std::size_t used = 0;
      score = std::stod(score_text, &used);
      if (used != score_text.size()) throw std::invalid_argument(score_text);
    } catch (const std::exception&) {
      throw DataError(loc + ": non-numeric score " + score_text);
    }
    try {
      std::size_t used = 0;
      rank = std::stol(rank_text, &used);
      if (used != rank_text.size()) throw std::invalid_argument(rank_text);
    } catch (const std::exception&) {
      throw DataError(loc + ": non-numeric rank " + rank_text);
    }
    auto [it, inserted] = position.try_emplace(qid, run.size());
    if (inserted) run.push_back(RankedList{qid, {}});
    RankedList& list = run[it->second];
    if (rank != static_cast<long>(list.entries.size()) + 1) {
      throw DataError(loc + ": rank " + rank_text + " inconsistent with order for " + qid);
    }
    list.entries.push_back(ScoredPid{pid, score});
  }
  for (const RankedList& list : run) validate_ranked_list(list);
  return run;
}

}  // namespace wrag
