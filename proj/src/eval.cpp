// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "wrag/errors.hpp"
#include "wrag/tokenizer.hpp"

namespace wrag {
namespace {

const std::set<std::string>& relevant_for(const Qrels& qrels, const std::string& qid) {
  auto it = qrels.find(qid);
  if (it == qrels.end() || it->second.empty()) throw DataError("qid " + qid + " missing from qrels");
  return it->second;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::unordered_map<std::string, std::size_t> counts(const TokenSeq& tokens) {
  std::unordered_map<std::string, std::size_t> c;
  for (const auto& t : tokens) ++c[t];
  return c;
}

std::size_t clipped_overlap(const TokenSeq& generated, const TokenSeq& reference) {
  const auto ref = counts(reference);
  std::size_t overlap = 0;
  for (const auto& [tok, n] : counts(generated)) {
    auto it = ref.find(tok);
    if (it != ref.end()) overlap += std::min(n, it->second);
  }
  return overlap;
}

double harmonic(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<double> recall_per_question(const Run& run, const Qrels& qrels, std::size_t k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  std::vector<double> out;
  out.reserve(run.size());
  for (const RankedList& list : run) {
    const auto& relevant = relevant_for(qrels, list.qid);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, list.entries.size()); ++i) hits += relevant.count(list.entries[i].pid);
    out.push_back(static_cast<double>(hits) / static_cast<double>(relevant.size()));
  }
  return out;
}

double recall_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  return mean_of(recall_per_question(run, qrels, k));
}

std::vector<double> mrr_per_question(const Run& run, const Qrels& qrels, std::size_t k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  std::vector<double> out;
  out.reserve(run.size());
  for (const RankedList& list : run) {
    const auto& relevant = relevant_for(qrels, list.qid);
    double rr = 0.0;
    for (std::size_t i = 0; i < std::min(k, list.entries.size()); ++i) {
      if (relevant.count(list.entries[i].pid)) {
        rr = 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
    out.push_back(rr);
  }
  return out;
}

double mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  return mean_of(mrr_per_question(run, qrels, k));
}

double token_f1(std::string_view generated, std::string_view reference) {
  const TokenSeq gen = tokenize(generated);
  const TokenSeq ref = tokenize(reference);
  if (gen.empty() || ref.empty()) return 0.0;
  const auto overlap = static_cast<double>(clipped_overlap(gen, ref));
  return harmonic(overlap / static_cast<double>(gen.size()), overlap / static_cast<double>(ref.size()));
}

double rouge_l(std::string_view generated, std::string_view reference) {
  const TokenSeq gen = tokenize(generated);
  const TokenSeq ref = tokenize(reference);
  if (gen.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(gen, ref));
  return harmonic(lcs / static_cast<double>(gen.size()), lcs / static_cast<double>(ref.size()));
}

double bleu_1(std::string_view generated, std::string_view reference) {
  const TokenSeq gen = tokenize(generated);
  const TokenSeq ref = tokenize(reference);
  if (gen.empty() || ref.empty()) return 0.0;
  const double precision = static_cast<double>(clipped_overlap(gen, ref)) / static_cast<double>(gen.size());
  const double brevity =
      std::min(1.0, std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(gen.size())));
  return precision * brevity;
}

AnswerScores best_answer_scores(std::string_view generated, std::span<const std::string> answers) {
  if (answers.empty()) throw InvalidArgument("no reference answers");
  AnswerScores best;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    AnswerScores s{token_f1(generated, answers[i]), rouge_l(generated, answers[i]),
                   bleu_1(generated, answers[i]), i};
    if (i == 0 || s.total() > best.total()) best = s;
  }
  return best;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("paired t-test needs equal-length samples");
  if (a.size() < 2) throw InvalidArgument("paired t-test needs at least 2 pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult r;
  r.n = n;
  if (sd == 0.0) {
    if (mean == 0.0) return r;
    r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

double MetricReport::mean(std::string_view metric) const { return mean_of(scores(metric)); }

const std::vector<double>& MetricReport::scores(std::string_view metric) const {
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (metrics[i] == metric) return per_question[i];
  }
  throw InvalidArgument("report has no metric " + std::string(metric));
}

MetricReport evaluate_retrieval(const Run& run, const Qrels& qrels, std::span<const std::size_t> recall_ks,
                                std::span<const std::size_t> mrr_ks, std::string label) {
  MetricReport report;
  report.label = std::move(label);
  for (const RankedList& list : run) report.qids.push_back(list.qid);
  for (std::size_t k : recall_ks) {
    report.metrics.push_back("recall@" + std::to_string(k));
    report.per_question.push_back(recall_per_question(run, qrels, k));
  }
  for (std::size_t k : mrr_ks) {
    report.metrics.push_back("mrr@" + std::to_string(k));
    report.per_question.push_back(mrr_per_question(run, qrels, k));
  }
  return report;
}

MetricReport evaluate_qa(const std::map<std::string, std::string, std::less<>>& generations,
                         std::span<const QAPair> qa_pairs, std::string label) {
  MetricReport report;
  report.label = std::move(label);
  report.metrics = {"f1", "rouge_l", "bleu_1"};
  report.per_question.assign(3, {});
  for (const QAPair& qa : qa_pairs) {
    auto it = generations.find(qa.qid);
    if (it == generations.end()) throw DataError("no generation for " + qa.qid);
    const AnswerScores s = best_answer_scores(it->second, qa.answers);
    report.qids.push_back(qa.qid);
    report.per_question[0].push_back(s.f1);
    report.per_question[1].push_back(s.rouge_l);
    report.per_question[2].push_back(s.bleu_1);
  }
  return report;
}

void annotate_against(MetricReport& report, const MetricReport& baseline) {
  std::unordered_map<std::string, std::size_t> base_pos;
  for (std::size_t i = 0; i < baseline.qids.size(); ++i) base_pos.emplace(baseline.qids[i], i);
  for (std::size_t m = 0; m < report.metrics.size(); ++m) {
    auto mit = std::find(baseline.metrics.begin(), baseline.metrics.end(), report.metrics[m]);
    if (mit == baseline.metrics.end()) continue;
    const auto& base_scores = baseline.per_question[static_cast<std::size_t>(mit - baseline.metrics.begin())];
    std::vector<double> a, b;
    for (std::size_t q = 0; q < report.qids.size(); ++q) {
      auto it = base_pos.find(report.qids[q]);
      if (it == base_pos.end()) continue;
      a.push_back(report.per_question[m][q]);
      b.push_back(base_scores[it->second]);
    }
    if (a.size() < 2) continue;
    const TTestResult r = paired_t_test(a, b);
    report.comparisons.push_back(Comparison{report.metrics[m], baseline.label, r.t, r.p});
  }
}

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_report_tsv(std::span<const MetricReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "system\tmetric\tmean\tn\tbaseline\tt\tp\n";
  for (const MetricReport& r : reports) {
    for (const std::string& metric : r.metrics) {
      out << r.label << '\t' << metric << '\t' << fmt6(r.mean(metric)) << '\t' << r.qids.size();
      auto c = std::find_if(r.comparisons.begin(), r.comparisons.end(),
                            [&](const Comparison& x) { return x.metric == metric; });
      if (c != r.comparisons.end()) {
        out << '\t' << c->baseline << '\t' << fmt6(c->t) << '\t' << fmt6(c->p);
      } else {
        out << "\t\t\t";
      }
      out << '\n';
    }
  }
}

void write_report_json(std::span<const MetricReport> reports, const std::filesystem::path& path) {
  using nlohmann::json;
  json all = json::array();
  for (const MetricReport& r : reports) {
    json means = json::object();
    json per_question = json::object();
    for (std::size_t m = 0; m < r.metrics.size(); ++m) {
      means[r.metrics[m]] = r.mean(r.metrics[m]);
      per_question[r.metrics[m]] = r.per_question[m];
    }
    json comparisons = json::array();
    for (const Comparison& c : r.comparisons) {
      // JSON has no infinity; an unbounded t is written as null.
      comparisons.push_back({{"metric", c.metric},
                             {"baseline", c.baseline},
                             {"t", std::isfinite(c.t) ? json(c.t) : json(nullptr)},
                             {"p", c.p}});
    }
    all.push_back({{"system", r.label},
                   {"qids", r.qids},
                   {"means", means},
                   {"comparisons", comparisons},
                   {"per_question", per_question}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << all.dump(2) << '\n';
}

}  // namespace wrag
