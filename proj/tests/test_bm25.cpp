// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "support.hpp"
#include "wrag/bm25.hpp"
#include "wrag/errors.hpp"
#include "wrag/tokenizer.hpp"

using namespace wrag;
using wrag::testing::TempDir;

namespace {

Corpus animals() {
  return Corpus({Passage{"d1", "cat sat"}, Passage{"d2", "cat cat ran"}, Passage{"d3", "dog ran"}});
}

// Straight from the formula, recomputing every statistic per call.
struct Oracle {
  const Corpus& corpus;
  Bm25Params params;

  double idf(const std::string& term) const {
    std::map<std::string, std::size_t> df;
    for (const auto& p : corpus.passages()) {
      auto toks = tokenize(p.text);
      std::sort(toks.begin(), toks.end());
      toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
      for (const auto& t : toks) ++df[t];
    }
    const double n = static_cast<double>(corpus.size());
    double sum = 0.0;
    for (const auto& [t, f] : df) sum += std::log((n - f + 0.5) / (f + 0.5));
    const double mean = sum / static_cast<double>(df.size());
    const auto it = df.find(term);
    if (it == df.end()) return 0.0;
    const double raw = std::log((n - it->second + 0.5) / (it->second + 0.5));
    return raw < 0 ? params.epsilon * mean : raw;
  }

  double score(const TokenSeq& query, const Passage& p) const {
    double total_len = 0.0;
    for (const auto& q : corpus.passages()) total_len += static_cast<double>(tokenize(q.text).size());
    const double avgdl = total_len / static_cast<double>(corpus.size());
    const TokenSeq doc = tokenize(p.text);
    double s = 0.0;
    for (const auto& t : query) {
      const double tf = static_cast<double>(std::count(doc.begin(), doc.end(), t));
      if (tf == 0) continue;
      const double len = static_cast<double>(doc.size());
      s += idf(t) * tf * (params.k1 + 1) / (tf + params.k1 * (1 - params.b + params.b * len / avgdl));
    }
    return s;
  }

  std::vector<ScoredPid> ranking(const std::string& question) const {
    const TokenSeq q = tokenize(question);
    std::vector<ScoredPid> all;
    for (const auto& p : corpus.passages()) all.push_back({p.pid, score(q, p)});
    std::sort(all.begin(), all.end(), [](const ScoredPid& a, const ScoredPid& b) {
      return a.score != b.score ? a.score > b.score : a.pid < b.pid;
    });
    return all;
  }
};

void check_prefix(const std::vector<ScoredPid>& got, const std::vector<ScoredPid>& full, std::size_t k) {
  REQUIRE(got.size() == std::min(k, full.size()));
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].pid == full[i].pid);
    CHECK(std::abs(got[i].score - full[i].score) <= 1e-9);
  }
}

}  // namespace

TEST_SUITE("bm25") {
  TEST_CASE("default parameters") {
    const Bm25Params p;
    CHECK(p.k1 == 1.5);
    CHECK(p.b == 0.75);
    CHECK(p.epsilon == 0.25);
  }

  TEST_CASE("idf and epsilon substitution on the worked corpus") {
    const Bm25Index index = Bm25Index::build(animals());
    CHECK(index.idf("dog") == doctest::Approx(std::log(2.5 / 1.5)).epsilon(1e-12));
    CHECK(index.idf("dog") == doctest::Approx(0.5108).epsilon(1e-4));
    CHECK(index.raw_idf("cat") == doctest::Approx(std::log(0.6)));
    CHECK(index.raw_idf("cat") < 0);
    const double mean = (std::log(2.5 / 1.5) * 2 + std::log(0.6) * 2) / 4.0;  // cat, sat, ran, dog
    CHECK(index.average_raw_idf() == doctest::Approx(mean));
    CHECK(index.idf("cat") == doctest::Approx(0.25 * mean));
    CHECK(index.idf("ran") == doctest::Approx(0.25 * mean));
    CHECK(index.idf("zebra") == 0.0);
    CHECK(index.document_count() == 3);
    CHECK(index.average_length() == doctest::Approx(7.0 / 3.0));
  }

  TEST_CASE("worked dog score and k1 sensitivity") {
    const Bm25Index index = Bm25Index::build(animals());
    const TokenSeq q{"dog"};
    const double dog = index.score(q, "d3");
    CHECK(dog == doctest::Approx(0.5108 * 2.5 / 2.3393).epsilon(1e-3));
    CHECK(std::abs(dog - 0.546) < 1e-3);
    CHECK(index.score(q, "d1") == 0.0);

    // d3 is shorter than average, so saturation matters less as k1 grows.
    const Bm25Index doubled = Bm25Index::build(animals(), Bm25Params{3.0, 0.75, 0.25});
    CHECK(doubled.score(q, "d3") == doctest::Approx(0.5108 * 4.0 / (1 + 3.0 * (0.25 + 0.75 * 2 / (7.0 / 3)))).epsilon(1e-3));
    CHECK(doubled.score(q, "d3") > dog);
    CHECK_THROWS_AS(index.score(q, "d9"), DataError);
  }

  TEST_CASE("absent terms score zero everywhere and ties are pid-ordered") {
    const Bm25Index index = Bm25Index::build(animals());
    for (double s : index.score_all(TokenSeq{"zebra"})) CHECK(s == 0.0);
    const auto top = index.retrieve_topk("zebra unicorn", 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0].pid == "d1");
    CHECK(top[1].pid == "d2");
    CHECK(top[0].score == 0.0);
    CHECK(index.retrieve_topk("zebra", 10).size() == 3);
    CHECK_THROWS_AS((void)index.retrieve_topk("dog", 0), InvalidArgument);
    CHECK_THROWS_AS((void)Bm25Index::build(Corpus{}), InvalidArgument);
  }

  TEST_CASE("1,000-passage corpus matches exhaustive scoring") {
    Rng rng(21);
    const Corpus corpus = wrag::testing::random_corpus(rng, 1000, 1, 20, 8);
    const Bm25Index index = Bm25Index::build(corpus);
    const Oracle oracle{corpus, {}};
    for (int q = 0; q < 5; ++q) {
      const std::string question = wrag::testing::random_text(rng, 1, 6, 8);
      check_prefix(index.retrieve_topk(question, 100), oracle.ranking(question), 100);
    }
  }

  TEST_CASE("property: top-k is a prefix of the exhaustive ranking") {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
      const Corpus corpus = wrag::testing::random_corpus(rng, 1 + uniform_index(rng, 40));
      const Bm25Params params{uniform_real(rng, 0.1, 3.0), uniform_real(rng, 0.0, 1.0), uniform_real(rng, 0.0, 1.0)};
      const Bm25Index index = Bm25Index::build(corpus, params);
      const Oracle oracle{corpus, params};
      const std::string question = wrag::testing::random_text(rng, 1, 5);
      const std::size_t k = 1 + uniform_index(rng, 50);
      check_prefix(index.retrieve_topk(question, k), oracle.ranking(question), k);
    }
  }

  TEST_CASE("property: query order invariance and per-occurrence multiplicity") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
      const Corpus corpus = wrag::testing::random_corpus(rng, 2 + uniform_index(rng, 30));
      const Bm25Index index = Bm25Index::build(corpus);
      TokenSeq q = tokenize(wrag::testing::random_text(rng, 1, 6));
      const auto base = index.score_all(q);
      TokenSeq shuffled = q;
      shuffle(shuffled, rng);
      const auto permuted = index.score_all(shuffled);
      TokenSeq twice = q;
      twice.push_back(q.front());
      const auto repeated = index.score_all(twice);
      const auto single = index.score_all(TokenSeq{q.front()});
      for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(permuted[i] == doctest::Approx(base[i]).epsilon(1e-12));
        CHECK(repeated[i] == doctest::Approx(base[i] + single[i]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("property: adding a document keeps existing term frequencies") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const Corpus small = wrag::testing::random_corpus(rng, 2 + uniform_index(rng, 10));
      std::vector<Passage> more(small.passages().begin(), small.passages().end());
      more.push_back(Passage{"z999", wrag::testing::random_text(rng, 1, 10)});
      const Bm25Index a = Bm25Index::build(small);
      const Bm25Index b = Bm25Index::build(Corpus(more));
      for (const auto& p : small.passages()) {
        for (const auto& t : tokenize(p.text)) {
          const auto find_tf = [&](const Bm25Index& idx) {
            const auto pids = idx.pids();
            const auto doc = static_cast<std::uint32_t>(std::find(pids.begin(), pids.end(), p.pid) - pids.begin());
            for (const auto& posting : idx.postings(t)) {
              if (posting.doc == doc) return posting.tf;
            }
            return 0u;
          };
          CHECK(find_tf(a) == find_tf(b));
        }
      }
    }
  }

  TEST_CASE("save and load preserve scores bit-exactly") {
    TempDir dir;
    Rng rng(2);
    const Corpus corpus = wrag::testing::random_corpus(rng, 200);
    const Bm25Index index = Bm25Index::build(corpus, Bm25Params{1.2, 0.6, 0.3});
    index.save(dir / "i.bin");
    const Bm25Index back = Bm25Index::load(dir / "i.bin");
    CHECK(back.params() == index.params());
    CHECK(back.average_raw_idf() == index.average_raw_idf());
    for (int q = 0; q < 10; ++q) {
      const std::string question = wrag::testing::random_text(rng, 1, 5);
      CHECK(back.retrieve_topk(question, 20) == index.retrieve_topk(question, 20));
    }
    wrag::testing::write_text(dir / "junk.bin", "not an index");
    CHECK_THROWS_AS((void)Bm25Index::load(dir / "junk.bin"), DataError);
  }

  TEST_CASE("retrieve_run keeps question order") {
    const Bm25Index index = Bm25Index::build(animals());
    const std::vector<QAPair> qs = {{"qb", "dog", {"x"}}, {"qa", "cat", {"x"}}};
    const Run run = index.retrieve_run(qs, 2);
    REQUIRE(run.size() == 2);
    CHECK(run[0].qid == "qb");
    CHECK(run[0].entries[0].pid == "d3");
    CHECK(run[1].qid == "qa");
  }
}
