// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "binary_io.hpp"
#include "wrag/errors.hpp"
#include "wrag/ranking.hpp"
#include "wrag/tokenizer.hpp"

namespace wrag {
namespace {

constexpr std::string_view kMagic = "WRAGBM25";
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

Bm25Index Bm25Index::build(const Corpus& corpus, Bm25Params params) {
  if (corpus.empty()) throw InvalidArgument("cannot index an empty corpus");
  Bm25Index index;
  index.params_ = params;
  index.pids_.reserve(corpus.size());
  index.doc_lengths_.reserve(corpus.size());

  std::map<std::string, std::vector<Posting>, std::less<>> postings;
  std::uint64_t total_length = 0;
  for (const Passage& passage : corpus.passages()) {
    const auto doc = static_cast<std::uint32_t>(index.pids_.size());
    TokenSeq tokens = tokenize(passage.text);
    std::sort(tokens.begin(), tokens.end());
    for (std::size_t i = 0; i < tokens.size();) {
      std::size_t j = i;
      while (j < tokens.size() && tokens[j] == tokens[i]) ++j;
      postings[tokens[i]].push_back(Posting{doc, static_cast<std::uint32_t>(j - i)});
      i = j;
    }
    index.pids_.push_back(passage.pid);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    total_length += tokens.size();
  }
  const double n_docs = static_cast<double>(index.pids_.size());
  index.avgdl_ = static_cast<double>(total_length) / n_docs;

  double idf_sum = 0.0;
  index.terms_.reserve(postings.size());
  for (auto& [text, list] : postings) {
    const double df = static_cast<double>(list.size());
    Term term;
    term.text = text;
    term.raw_idf = std::log((n_docs - df + 0.5) / (df + 0.5));
    term.postings = std::move(list);
    idf_sum += term.raw_idf;
    index.terms_.push_back(std::move(term));
  }
  index.average_raw_idf_ = index.terms_.empty() ? 0.0 : idf_sum / static_cast<double>(index.terms_.size());
  const double floor_idf = params.epsilon * index.average_raw_idf_;
  for (Term& term : index.terms_) term.idf = term.raw_idf < 0 ? floor_idf : term.raw_idf;
  index.rebuild_lookup();
  return index;
}

void Bm25Index::rebuild_lookup() {
  lookup_.clear();
  lookup_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    lookup_.emplace(terms_[i].text, static_cast<std::uint32_t>(i));
  }
}

const Bm25Index::Term* Bm25Index::find_term(std::string_view term) const {
  auto it = lookup_.find(std::string(term));
  return it == lookup_.end() ? nullptr : &terms_[it->second];
}

double Bm25Index::idf(std::string_view term) const {
  const Term* t = find_term(term);
  return t ? t->idf : 0.0;
}

double Bm25Index::raw_idf(std::string_view term) const {
  const Term* t = find_term(term);
  return t ? t->raw_idf : 0.0;
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
  const Term* t = find_term(term);
  return t ? t->postings.size() : 0;
}

std::span<const Bm25Index::Posting> Bm25Index::postings(std::string_view term) const {
  const Term* t = find_term(term);
  if (t == nullptr) return {};
  return t->postings;
}

double Bm25Index::term_weight(const Term& term, const Posting& p) const {
  const double tf = static_cast<double>(p.tf);
  const double norm =
      params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(doc_lengths_[p.doc]) / avgdl_);
  return term.idf * (tf * (params_.k1 + 1.0)) / (tf + norm);
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::string_view pid) const {
  auto it = std::lower_bound(pids_.begin(), pids_.end(), pid,
                             [](const std::string& a, std::string_view b) { return a < b; });
  if (it == pids_.end() || *it != pid) throw DataError("unknown pid " + std::string(pid));
  const auto doc = static_cast<std::uint32_t>(it - pids_.begin());
  double total = 0.0;
  for (const std::string& token : query_tokens) {
    const Term* term = find_term(token);
    if (term == nullptr) continue;
    auto p = std::lower_bound(term->postings.begin(), term->postings.end(), doc,
                              [](const Posting& a, std::uint32_t d) { return a.doc < d; });
    if (p != term->postings.end() && p->doc == doc) total += term_weight(*term, *p);
  }
  return total;
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query_tokens) const {
  std::vector<double> scores(pids_.size(), 0.0);
  for (const std::string& token : query_tokens) {
    const Term* term = find_term(token);
    if (term == nullptr) continue;
    for (const Posting& p : term->postings) scores[p.doc] += term_weight(*term, p);
  }
  return scores;
}

std::vector<ScoredPid> Bm25Index::retrieve_topk(std::string_view question, std::size_t k) const {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  const TokenSeq tokens = tokenize(question);
  const std::vector<double> scores = score_all(tokens);
  return top_k(scores, pids_, k);
}

Run Bm25Index::retrieve_run(std::span<const QAPair> questions, std::size_t k) const {
  Run run;
  run.reserve(questions.size());
  for (const QAPair& qa : questions) run.push_back(RankedList{qa.qid, retrieve_topk(qa.question, k)});
  return run;
}

void Bm25Index::save(const std::filesystem::path& path) const {
  io::BinaryWriter out(path, kMagic, kFormatVersion);
  out.put(params_.k1);
  out.put(params_.b);
  out.put(params_.epsilon);
  out.put(avgdl_);
  out.put(average_raw_idf_);
  out.put(static_cast<std::uint64_t>(pids_.size()));
  for (const std::string& pid : pids_) out.put(std::string_view(pid));
  out.put(doc_lengths_);
  out.put(static_cast<std::uint64_t>(terms_.size()));
  std::vector<std::uint32_t> flat;
  for (const Term& term : terms_) {
    out.put(std::string_view(term.text));
    out.put(term.raw_idf);
    out.put(term.idf);
    flat.clear();
    for (const Posting& p : term.postings) {
      flat.push_back(p.doc);
      flat.push_back(p.tf);
    }
    out.put(flat);
  }
  out.finish();
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  io::BinaryReader in(path, kMagic);
  if (in.version() != kFormatVersion) {
    throw DataError(path.string() + ": unsupported index version " + std::to_string(in.version()));
  }
  Bm25Index index;
  index.params_.k1 = in.get<double>();
  index.params_.b = in.get<double>();
  index.params_.epsilon = in.get<double>();
  index.avgdl_ = in.get<double>();
  index.average_raw_idf_ = in.get<double>();
  const auto n_docs = in.get<std::uint64_t>();
  index.pids_.reserve(n_docs);
  for (std::uint64_t i = 0; i < n_docs; ++i) index.pids_.push_back(in.get_string());
  index.doc_lengths_ = in.get_vector<std::uint32_t>();
  if (index.doc_lengths_.size() != n_docs) throw DataError(path.string() + ": corrupt document table");
  const auto n_terms = in.get<std::uint64_t>();
  index.terms_.reserve(n_terms);
  for (std::uint64_t i = 0; i < n_terms; ++i) {
    Term term;
    term.text = in.get_string();
    term.raw_idf = in.get<double>();
    term.idf = in.get<double>();
    const auto flat = in.get_vector<std::uint32_t>();
    if (flat.size() % 2 != 0) throw DataError(path.string() + ": corrupt postings");
    for (std::size_t j = 0; j < flat.size(); j += 2) {
      if (flat[j] >= n_docs) throw DataError(path.string() + ": posting out of range");
      term.postings.push_back(Posting{flat[j], flat[j + 1]});
    }
    index.terms_.push_back(std::move(term));
  }
  in.expect_end();
  index.rebuild_lookup();
  return index;
}

}  // namespace wrag
