// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "support.hpp"
#include "wrag/bm25.hpp"
#include "wrag/eval.hpp"
#include "wrag/late_interaction.hpp"
#include "wrag/synthetic.hpp"
#include "wrag/tokenizer.hpp"
#include "wrag/two_tower.hpp"
#include "wrag/weak_labeler.hpp"

using namespace wrag;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. gradients

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst_mnr = 0, worst_li = 0;
  std::size_t redraws = 0;
  EncoderConfig enc;
  enc.vocab_size = 64;
  enc.dim = 8;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    TwoTowerModel tt = TwoTowerModel::init(enc, seed, seed % 2 == 0);
    for (double& x : tt.query.projection()) x += uniform_real(rng, -0.3, 0.3);
    if (tt.passage) {
      for (double& x : tt.passage->projection()) x += uniform_real(rng, -0.3, 0.3);
    }
    std::vector<TrainingPair> batch;
    for (int i = 0; i < 4; ++i) {
      batch.push_back({"q", wrag::testing::random_text(rng, 1, 6), "p" + std::to_string(i),
                       wrag::testing::random_text(rng, 1, 10)});
    }
    const auto mnr = mnr_loss_and_grads(tt, batch, 20.0);
    const LossFunction q_loss = [&](std::span<const double> v) {
      TwoTowerModel m = tt;
      std::copy(v.begin(), v.end(), m.query.values.begin());
      return mnr_loss_and_grads(m, batch, 20.0).loss;
    };
    worst_mnr = std::max(worst_mnr, finite_diff_check(q_loss, tt.query.values, mnr.grads.query, 64, 1e-4, seed));
    if (tt.passage) {
      const LossFunction p_loss = [&](std::span<const double> v) {
        TwoTowerModel m = tt;
        std::copy(v.begin(), v.end(), m.passage->values.begin());
        return mnr_loss_and_grads(m, batch, 20.0).loss;
      };
      worst_mnr =
          std::max(worst_mnr, finite_diff_check(p_loss, tt.passage->values, mnr.grads.passage, 64, 1e-4, seed + 100));
    }

    LateInteractionModel li = LateInteractionModel::init(enc, seed);
    for (double& x : li.params.projection()) x += uniform_real(rng, -0.3, 0.3);
    Triplet t;
    for (;;) {
      t = Triplet{"q", wrag::testing::random_text(rng, 1, 4), "p", wrag::testing::random_text(rng, 1, 8), "n",
                  wrag::testing::random_text(rng, 1, 8)};
      const Matrix q = li.embed_question(t.question);
      if (maxsim_margin(q, li.embed_passage(t.positive_text)) >= 1e-3 &&
          maxsim_margin(q, li.embed_passage(t.negative_text)) >= 1e-3) {
        break;
      }
      ++redraws;
    }
    const auto pair = pairwise_loss_and_grads(li, t);
    const LossFunction li_loss = [&](std::span<const double> v) {
      LateInteractionModel m = li;
      std::copy(v.begin(), v.end(), m.params.values.begin());
      return pairwise_loss_and_grads(m, t).loss;
    };
    worst_li = std::max(worst_li, finite_diff_check(li_loss, li.params.values, pair.grads, 64, 1e-4, seed + 200));
  }
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", worst_mnr < 1e-4 && worst_li < 1e-4 && secs < 30,
         "20 seeds, max rel err MNR " + num(worst_mnr, 3) + ", pairwise " + num(worst_li, 3) + " (< 1e-4, h=1e-4, " +
             std::to_string(redraws) + " near-tie triplets redrawn), " + num(secs, 3) + " s");
}

// ---------------------------------------------------------------------------
// 2. loss identities

void criterion_loss_identities() {
  double worst = std::abs(mnr_loss_from_scores(Matrix(1, 1, {0.42}), 20.0));
  for (std::size_t n : {2, 3, 5}) {
    const Matrix flat(n, n, std::vector<double>(n * n, 0.37));
    worst = std::max(worst, std::abs(mnr_loss_from_scores(flat, 20.0) - static_cast<double>(n) * std::log(static_cast<double>(n))));
  }
  worst = std::max(worst, std::abs(pairwise_loss(0.8, 0.8) - std::log(2.0)));
  worst = std::max(worst, std::abs(pairwise_loss(11.5, 1.5) - std::log1p(std::exp(-10.0))));
  report(2, "loss identities", worst <= 1e-9, "max deviation " + num(worst, 3) + " (<= 1e-9)");
}

// ---------------------------------------------------------------------------
// 3. BM25 oracle

std::vector<ScoredPid> exhaustive_bm25(const Corpus& corpus, const std::string& question, const Bm25Params& p) {
  std::map<std::string, std::size_t> df;
  std::vector<TokenSeq> docs;
  double total = 0;
  for (const auto& passage : corpus.passages()) {
    docs.push_back(tokenize(passage.text));
    total += static_cast<double>(docs.back().size());
    std::set<std::string> uniq(docs.back().begin(), docs.back().end());
    for (const auto& t : uniq) ++df[t];
  }
  const double n = static_cast<double>(corpus.size());
  const double avgdl = total / n;
  std::map<std::string, double> idf;
  double sum = 0;
  for (const auto& [t, f] : df) {
    idf[t] = std::log((n - static_cast<double>(f) + 0.5) / (static_cast<double>(f) + 0.5));
    sum += idf[t];
  }
  const double floor = p.epsilon * sum / static_cast<double>(df.size());
  for (auto& [t, v] : idf) {
    if (v < 0) v = floor;
  }
  const TokenSeq q = tokenize(question);
  std::vector<ScoredPid> out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    double s = 0;
    for (const auto& t : q) {
      const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), t));
      if (tf > 0) {
        const double len = static_cast<double>(docs[d].size());
        s += idf[t] * tf * (p.k1 + 1) / (tf + p.k1 * (1 - p.b + p.b * len / avgdl));
      }
    }
    out.push_back({corpus[d].pid, s});
  }
  std::sort(out.begin(), out.end(), [](const ScoredPid& a, const ScoredPid& b) {
    return a.score != b.score ? a.score > b.score : a.pid < b.pid;
  });
  return out;
}

void criterion_bm25() {
  Rng rng(2024);
  std::size_t mismatches = 0, queries = 0, epsilon_corpora = 0;
  double worst = 0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t docs = 1 + uniform_index(rng, 200);
    const Corpus corpus = wrag::testing::random_corpus(rng, docs, 1, 12, 4 + uniform_index(rng, 6));
    const Bm25Index index = Bm25Index::build(corpus);
    bool negative = false;
    for (const auto& p : corpus.passages()) {
      for (const auto& t : tokenize(p.text)) negative = negative || index.raw_idf(t) < 0;
    }
    epsilon_corpora += negative;
    for (int q = 0; q < 10; ++q) {
      ++queries;
      const std::string question = wrag::testing::random_text(rng, 1, 5);
      const std::size_t k = 1 + uniform_index(rng, 100);
      const auto got = index.retrieve_topk(question, k);
      auto want = exhaustive_bm25(corpus, question, Bm25Params{});
      want.resize(std::min(k, want.size()));
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].pid == want[i].pid && std::abs(got[i].score - want[i].score) <= 1e-9;
        worst = std::max(worst, std::abs(got[i].score - want[i].score));
      }
      mismatches += !same;
    }
  }
  const Bm25Index animals =
      Bm25Index::build(Corpus({Passage{"d1", "cat sat"}, Passage{"d2", "cat cat ran"}, Passage{"d3", "dog ran"}}));
  const double dog = animals.score(TokenSeq{"dog"}, "d3");
  report(3, "BM25 oracle equivalence",
         mismatches == 0 && epsilon_corpora > 0 && std::abs(dog - 0.546) <= 1e-3,
         std::to_string(queries) + " queries on 50 corpora, " + std::to_string(mismatches) +
             " mismatches, max score diff " + num(worst, 3) + ", " + std::to_string(epsilon_corpora) +
             " corpora on the epsilon path; dog example " + num(dog, 6));
}

// ---------------------------------------------------------------------------
// 4-6. synthetic training

struct SyntheticFixture {
  SyntheticDataset data;
  Run first_stage;
  LabelingOutcome labels;
  DatasetSplit split;
  WeakLabelSet train_labels;
  WeakLabelSet test_labels;
  double label_seconds = 0;
};

WeakLabelSet restrict_to(const WeakLabelSet& all, std::span<const QAPair> subset) {
  std::set<std::string> keep;
  for (const auto& q : subset) keep.insert(q.qid);
  WeakLabelSet out;
  out.provenance = all.provenance;
  for (const auto& r : all.records) {
    if (keep.count(r.qid)) out.records.push_back(r);
  }
  return out;
}

SyntheticFixture make_fixture() {
  SyntheticFixture f;
  const auto t0 = Clock::now();
  f.data = make_synthetic(SyntheticConfig{});
  const Bm25Index index = Bm25Index::build(f.data.corpus);
  f.first_stage = index.retrieve_run(f.data.qa_pairs, 100);
  ContainmentScorer scorer;
  f.labels = label_questions(scorer, f.data.qa_pairs, f.first_stage, f.data.corpus, PromptTemplate{}, RerankOptions{});
  f.label_seconds = seconds_since(t0);
  f.split = split_qa(f.data.qa_pairs, 13, SplitSizes{120, 40, 40});
  f.train_labels = restrict_to(f.labels.labels, f.split.train);
  f.test_labels = restrict_to(f.labels.labels, f.split.test);
  return f;
}

void criterion_rerank_lift(const SyntheticFixture& f) {
  const std::vector<std::size_t> ks = {1};
  const auto cmp = evaluate_weak_labels(f.labels.labels, f.data.qrels, ks);
  const bool offline = f.labels.dropped_qids.empty() && f.labels.labels.size() == 200;
  report(4, "rerank lift", offline && cmp.reranked[0] >= cmp.first_stage[0] + 0.20 && f.label_seconds < 120,
         "200 questions / " + std::to_string(f.data.corpus.size()) + " passages, BM25 R@1 " +
             num(cmp.first_stage[0], 4) + " -> containment rerank R@1 " + num(cmp.reranked[0], 4) +
             " (need +0.20), " + num(f.label_seconds, 3) + " s");
}

void criterion_two_tower(const SyntheticFixture& f) {
  const auto t0 = Clock::now();
  TwoTowerTrainingConfig config;
  const auto pairs = extract_two_tower_pairs(f.train_labels, f.data.corpus);
  const TwoTowerModel untrained = TwoTowerModel::init(config.encoder, config.seed);
  const double r0 =
      recall_at_k(search_run(untrained, encode_corpus(untrained, f.data.corpus), f.split.test, 5), f.data.qrels, 5);
  const ValidationSet validation{f.split.validation, &f.data.qrels, &f.data.corpus};
  const auto trained = train_two_tower(config, pairs, validation);
  const double r1 =
      recall_at_k(search_run(trained.model, encode_corpus(trained.model, f.data.corpus), f.split.test, 5), f.data.qrels, 5);
  const double first = trained.log.epochs.front().mean_loss, last = trained.log.epochs.back().mean_loss;
  const double secs = seconds_since(t0);
  report(5, "two-tower weak training", r1 >= 2 * r0 && r0 >= 0 && last < first && secs < 300,
         "held-out R@5 untrained " + num(r0, 4) + " -> trained " + num(r1, 4) + " (need >= 2x), epoch loss " +
             num(first, 4) + " -> " + num(last, 4) + ", kept epoch " + std::to_string(trained.log.best_epoch) + ", " +
             num(secs, 3) + " s");
}

void criterion_late_interaction(const SyntheticFixture& f) {
  const auto t0 = Clock::now();
  LateInteractionTrainingConfig config;
  config.hard_negatives = 10;
  const auto triplets = extract_triplets(f.train_labels, f.data.corpus, config.hard_negatives).triplets;
  const ValidationSet validation{f.split.validation, &f.data.qrels, &f.data.corpus};
  const auto trained = train_late_interaction(config, triplets, validation);

  const std::size_t steps = (triplets.size() + config.batch_size - 1) / config.batch_size;
  std::vector<double> running;
  double sum = 0;
  for (std::size_t i = 0; i < steps; ++i) {
    sum += trained.log.step_losses[i];
    running.push_back(sum / static_cast<double>(i + 1));
  }
  const std::size_t quarter = steps / 4;
  double early = 0, late = 0;
  for (std::size_t i = 0; i < quarter; ++i) {
    early += running[i];
    late += running[steps - 1 - i];
  }
  early /= static_cast<double>(quarter);
  late /= static_cast<double>(quarter);

  const auto held_out = extract_triplets(f.test_labels, f.data.corpus, config.hard_negatives).triplets;
  std::size_t wins = 0;
  for (const auto& t : held_out) {
    const Matrix q = trained.model.embed_question(t.question);
    wins += maxsim_score(q, trained.model.embed_passage(t.positive_text)) >
            maxsim_score(q, trained.model.embed_passage(t.negative_text));
  }
  const double rate = static_cast<double>(wins) / static_cast<double>(held_out.size());
  report(6, "late-interaction training", quarter > 0 && late < early && rate >= 0.80,
         "first-epoch running-mean loss, first quartile " + num(early, 4) + " -> last quartile " + num(late, 4) +
             " over " + std::to_string(steps) + " steps (m=10); held-out R+ > R- on " + std::to_string(wins) + "/" +
             std::to_string(held_out.size()) + " = " + num(rate, 4) + " (need >= 0.80), " + num(seconds_since(t0), 3) +
             " s");
}

// ---------------------------------------------------------------------------
// 7. metrics

void criterion_metrics() {
  const double f1 = token_f1("2018 winter olympics", "2018");
  const double rl = rouge_l("a b c", "a c");
  const double b1 = bleu_1("a b", "a c");
  const double b2 = bleu_1("a", "a c");
  const Qrels qrels{{"q", {"c"}}};
  const Run run = {RankedList{"q", {{"a", 3}, {"b", 2}, {"c", 1}}}};
  const double mrr = mrr_at_k(run, qrels, 5);
  const std::vector<double> d = {1, 2, 3, 4, 5}, z = {0, 0, 0, 0, 0};
  const auto t = paired_t_test(d, z);
  const bool ok = std::abs(f1 - 0.5) <= 1e-9 && std::abs(rl - 0.8) <= 1e-9 && std::abs(b1 - 0.5) <= 1e-9 &&
                  std::abs(b2 - std::exp(-1.0)) <= 1e-6 && std::abs(mrr - 1.0 / 3) <= 1e-9 &&
                  std::abs(t.t - 4.2426) <= 1e-3 && std::abs(t.p - 0.0132) <= 1e-3;
  report(7, "metric exactness", ok,
         "f1 " + num(f1) + ", rouge_l " + num(rl) + ", bleu_1 " + num(b1) + " / " + num(b2, 7) + ", mrr " + num(mrr) +
             ", t " + num(t.t, 7) + " p " + num(t.p, 5));
}

// ---------------------------------------------------------------------------
// 8-9. end-to-end

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(WRAG_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Artifact bytes by relative path; generation lines lose their latency.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), root).string();
    std::string bytes = wrag::testing::read_text(entry.path());
    if (rel.rfind("generations-", 0) == 0) {
      std::istringstream in(bytes);
      std::string line, stripped;
      while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        j.erase("latency_ms");
        stripped += j.dump() + "\n";
      }
      bytes = stripped;
    }
    out[rel] = bytes;
  }
  return out;
}

void criterion_e2e(const fs::path& scratch) {
  const auto t0 = Clock::now();
  const fs::path work = scratch / "e2e";
  const int code = run_cli("e2e -w " + work.string(), scratch / "e2e.log");
  const double secs = seconds_since(t0);
  double naive = -1, best_trained = -1;
  std::string detail;
  if (code == 0 && fs::exists(work / "report.json")) {
    const auto reports = nlohmann::json::parse(wrag::testing::read_text(work / "report.json"));
    for (const auto& r : reports) {
      if (!r["means"].contains("f1")) continue;
      const std::string system = r["system"];
      const double f1 = r["means"]["f1"];
      detail += " " + system + " " + num(f1, 4);
      if (system == "none") naive = f1;
      if (system == "two-tower" || system == "late-interaction") best_trained = std::max(best_trained, f1);
    }
  }
  report(8, "end-to-end offline pipeline", code == 0 && naive >= 0 && best_trained >= naive,
         "exit " + std::to_string(code) + " in " + num(secs, 3) + " s; QA F1" + detail);

  // Determinism: the same stages in a fresh workdir, and a rerun in place.
  const auto first = snapshot(work);
  const fs::path again = scratch / "e2e-again";
  const int code2 = run_cli("e2e -w " + again.string(), scratch / "e2e-again.log");
  const auto second = snapshot(again);
  std::size_t differing = 0;
  std::string example;
  for (const auto& [rel, bytes] : first) {
    auto it = second.find(rel);
    if (it == second.end() || it->second != bytes) {
      ++differing;
      if (example.empty()) example = rel;
    }
  }
  differing += second.size() > first.size() ? second.size() - first.size() : 0;
  const int code3 = run_cli("e2e -w " + work.string(), scratch / "e2e-rerun.log");
  const auto rerun = snapshot(work);
  std::size_t changed = 0;
  for (const auto& [rel, bytes] : first) {
    auto it = rerun.find(rel);
    changed += it == rerun.end() || it->second != bytes;
  }
  report(9, "determinism", code2 == 0 && code3 == 0 && differing == 0 && changed == 0,
         std::to_string(first.size()) + " artifacts compared across fresh workdirs, " + std::to_string(differing) +
             " differ" + (example.empty() ? "" : " (e.g. " + example + ")") + "; in-place rerun changed " +
             std::to_string(changed));
}

}  // namespace

int main() {
  std::cout << std::unitbuf;
  const wrag::testing::TempDir scratch("wrag-acceptance");
  try {
    criterion_gradients();
    criterion_loss_identities();
    criterion_bm25();
    const SyntheticFixture fixture = make_fixture();
    criterion_rerank_lift(fixture);
    criterion_two_tower(fixture);
    criterion_late_interaction(fixture);
    criterion_metrics();
    criterion_e2e(scratch.path());
  } catch (const std::exception& e) {
    std::cout << "FAIL  acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
