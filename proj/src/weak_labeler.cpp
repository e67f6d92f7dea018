// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/weak_labeler.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <json.hpp>

#include "wrag/errors.hpp"
#include "wrag/hash.hpp"

namespace wrag {

using nlohmann::json;

std::string_view to_string(AnswerMode mode) { return mode == AnswerMode::Max ? "max" : "first"; }

AnswerMode parse_answer_mode(std::string_view name) {
  if (name == "max") return AnswerMode::Max;
  if (name == "first") return AnswerMode::First;
  throw InvalidArgument("unknown answer mode \"" + std::string(name) + "\" (expected max or first)");
}

WeakLabelRecord rerank_candidates(RelevanceScorer& scorer, const QAPair& qa,
                                  const RankedList& candidates, const Corpus& corpus,
                                  const RerankOptions& options) {
  if (candidates.entries.empty()) throw InvalidArgument("no candidates to rerank for " + qa.qid);
  if (qa.answers.empty()) throw InvalidArgument("question " + qa.qid + " has no answers");

  const std::size_t n_answers = options.answer_mode == AnswerMode::Max ? qa.answers.size() : 1;
  std::vector<ScoreQuery> queries;
  queries.reserve(candidates.entries.size() * n_answers);
  for (const ScoredPid& c : candidates.entries) {
    const Passage& passage = corpus.at(c.pid);
    for (std::size_t a = 0; a < n_answers; ++a) {
      queries.push_back(ScoreQuery{passage.text, qa.question, qa.answers[a]});
    }
  }
  const std::vector<double> raw = scorer.score_batch(queries);

  WeakLabelRecord record;
  record.qid = qa.qid;
  record.question = qa.question;
  record.candidates.reserve(candidates.entries.size());
  for (std::size_t i = 0; i < candidates.entries.size(); ++i) {
    const auto first = raw.begin() + static_cast<std::ptrdiff_t>(i * n_answers);
    const double best = *std::max_element(first, first + static_cast<std::ptrdiff_t>(n_answers));
    record.candidates.push_back(ScoredCandidate{candidates.entries[i].pid, best, i + 1});
  }
  std::stable_sort(record.candidates.begin(), record.candidates.end(),
                   [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.score > b.score; });
  record.positive_pid = record.candidates.front().pid;
  const std::size_t m = std::min(options.hard_negatives, record.candidates.size() - 1);
  for (std::size_t i = 1; i <= m; ++i) record.hard_negative_pids.push_back(record.candidates[i].pid);
  return record;
}

LabelingOutcome label_questions(RelevanceScorer& scorer, std::span<const QAPair> questions,
                                const Run& first_stage, const Corpus& corpus,
                                const PromptTemplate& tmpl, const RerankOptions& options) {
  std::unordered_map<std::string_view, const RankedList*> by_qid;
  for (const RankedList& list : first_stage) by_qid.emplace(list.qid, &list);

  LabelingOutcome outcome;
  outcome.labels.provenance = LabelProvenance{scorer.identifier(), to_hex(tmpl.fingerprint())};
  for (const QAPair& qa : questions) {
    auto it = by_qid.find(qa.qid);
    if (it == by_qid.end() || it->second->entries.empty()) {
      outcome.dropped_qids.push_back(qa.qid);
      continue;
    }
    try {
      outcome.labels.records.push_back(rerank_candidates(scorer, qa, *it->second, corpus, options));
    } catch (const TransportError& e) {
      std::cerr << "warning: dropping " << qa.qid << ": " << e.what() << '\n';
      outcome.dropped_qids.push_back(qa.qid);
    } catch (const DataError& e) {
      std::cerr << "warning: dropping " << qa.qid << ": " << e.what() << '\n';
      outcome.dropped_qids.push_back(qa.qid);
    }
  }
  return outcome;
}

std::vector<TrainingPair> extract_two_tower_pairs(const WeakLabelSet& labels, const Corpus& corpus) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(labels.records.size());
  for (const WeakLabelRecord& r : labels.records) {
    if (r.candidates.empty()) throw DataError("weak label record " + r.qid + " is empty");
    const std::string& pid = r.candidates.front().pid;
    pairs.push_back(TrainingPair{r.qid, r.question, pid, corpus.at(pid).text});
  }
  return pairs;
}

TripletExtraction extract_triplets(const WeakLabelSet& labels, const Corpus& corpus, std::size_t m) {
  if (m < 1) throw InvalidArgument("hard negative count m must be >= 1");
  TripletExtraction out;
  for (const WeakLabelRecord& r : labels.records) {
    if (r.candidates.size() < m + 1) {
      ++out.skipped_records;
      continue;
    }
    const std::string& pos = r.candidates.front().pid;
    const std::string& pos_text = corpus.at(pos).text;
    for (std::size_t i = 1; i <= m; ++i) {
      const std::string& neg = r.candidates[i].pid;
      out.triplets.push_back(Triplet{r.qid, r.question, pos, pos_text, neg, corpus.at(neg).text});
    }
  }
  if (out.skipped_records > 0) {
    std::cerr << "warning: skipped " << out.skipped_records << " weak label record(s) with fewer than "
              << (m + 1) << " candidates\n";
  }
  return out;
}

RankedList first_stage_order(const WeakLabelRecord& record) {
  std::vector<const ScoredCandidate*> order;
  for (const auto& c : record.candidates) order.push_back(&c);
  std::sort(order.begin(), order.end(),
            [](const ScoredCandidate* a, const ScoredCandidate* b) { return a->bm25_rank < b->bm25_rank; });
  RankedList list{record.qid, {}};
  // Scores are synthetic (descending by position) so the list stays valid.
  for (std::size_t i = 0; i < order.size(); ++i) {
    list.entries.push_back(ScoredPid{order[i]->pid, static_cast<double>(order.size() - i)});
  }
  return list;
}

RankedList reranked_order(const WeakLabelRecord& record) {
  RankedList list{record.qid, {}};
  for (const auto& c : record.candidates) list.entries.push_back(ScoredPid{c.pid, c.score});
  return list;
}

namespace {

double recall_of(const RankedList& list, const std::set<std::string>& relevant, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, list.entries.size()); ++i) hits += relevant.count(list.entries[i].pid);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

}  // namespace

RecallComparison evaluate_weak_labels(const WeakLabelSet& labels, const Qrels& qrels,
                                      std::span<const std::size_t> ks) {
  RecallComparison out;
  out.ks.assign(ks.begin(), ks.end());
  out.first_stage.assign(ks.size(), 0.0);
  out.reranked.assign(ks.size(), 0.0);
  if (labels.records.empty()) return out;
  for (const WeakLabelRecord& r : labels.records) {
    auto it = qrels.find(r.qid);
    if (it == qrels.end() || it->second.empty()) throw DataError("qid " + r.qid + " missing from qrels");
    const RankedList before = first_stage_order(r);
    const RankedList after = reranked_order(r);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      out.first_stage[i] += recall_of(before, it->second, ks[i]);
      out.reranked[i] += recall_of(after, it->second, ks[i]);
    }
  }
  const auto n = static_cast<double>(labels.records.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out.first_stage[i] /= n;
    out.reranked[i] /= n;
  }
  return out;
}

void save_weak_labels(const WeakLabelSet& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const WeakLabelRecord& r : labels.records) {
    json candidates = json::array();
    for (const auto& c : r.candidates) {
      candidates.push_back({{"pid", c.pid}, {"score", c.score}, {"bm25_rank", c.bm25_rank}});
    }
    json line = {{"qid", r.qid},
                 {"question", r.question},
                 {"candidates", std::move(candidates)},
                 {"positive", r.positive_pid},
                 {"negatives", r.hard_negative_pids},
                 {"provenance", {{"scorer", labels.provenance.scorer},
                                 {"template_hash", labels.provenance.template_hash}}}};
    out << line.dump() << '\n';
  }
}

WeakLabelSet load_weak_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  WeakLabelSet labels;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string loc = path.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      WeakLabelRecord r;
      r.qid = j.at("qid").get<std::string>();
      r.question = j.at("question").get<std::string>();
      for (const json& c : j.at("candidates")) {
        r.candidates.push_back(ScoredCandidate{c.at("pid").get<std::string>(), c.at("score").get<double>(),
                                               c.at("bm25_rank").get<std::size_t>()});
      }
      r.positive_pid = j.at("positive").get<std::string>();
      r.hard_negative_pids = j.at("negatives").get<std::vector<std::string>>();
      LabelProvenance prov{j.at("provenance").at("scorer").get<std::string>(),
                           j.at("provenance").at("template_hash").get<std::string>()};
      if (labels.records.empty()) {
        labels.provenance = prov;
      } else if (!(prov == labels.provenance)) {
        throw DataError(loc + ": mixed provenance within one weak label set");
      }
      if (r.candidates.empty() || r.positive_pid != r.candidates.front().pid) {
        throw DataError(loc + ": positive must be the rank-1 candidate");
      }
      for (std::size_t i = 1; i < r.candidates.size(); ++i) {
        if (r.candidates[i].score > r.candidates[i - 1].score) {
          throw DataError(loc + ": candidate scores are not sorted");
        }
      }
      if (!seen.insert(r.qid).second) throw DataError(loc + ": duplicate qid " + r.qid);
      labels.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(loc + ": malformed weak label record: " + e.what());
    }
  }
  return labels;
}

}  // namespace wrag
