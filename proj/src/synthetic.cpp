// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "wrag/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>

#include "wrag/errors.hpp"
#include "wrag/random.hpp"

namespace wrag {
namespace {

// (word used in questions, word used in passages)
constexpr std::array<std::pair<std::string_view, std::string_view>, 12> kRelations = {{
    {"hue", "color"},
    {"creator", "founder"},
    {"stature", "height"},
    {"emblem", "symbol"},
    {"slogan", "motto"},
    {"birthplace", "origin"},
    {"proprietor", "owner"},
    {"nemesis", "rival"},
    {"backer", "sponsor"},
    {"mascot", "totem"},
    {"capital", "seat"},
    {"wellspring", "source"},
}};

class NonceWords {
 public:
  explicit NonceWords(Rng& rng) : rng_(rng) {
    for (const auto& [q, p] : kRelations) {
      used_.emplace(q);
      used_.emplace(p);
    }
    for (auto w : {"what", "is", "the", "of"}) used_.insert(w);
  }

  std::string next(std::size_t syllables) {
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    for (;;) {
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kConsonants[uniform_index(rng_, kConsonants.size())];
        w += kVowels[uniform_index(rng_, kVowels.size())];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::unordered_set<std::string> used_;
};

std::size_t draw_length(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string sentence(Rng& rng, const std::vector<std::string>& vocab, std::size_t words) {
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += vocab[uniform_index(rng, vocab.size())];
  }
  return capitalized(std::move(s)) + '.';
}

std::string numbered(char prefix, std::size_t i, std::size_t width) {
  const std::string n = std::to_string(i);
  return prefix + std::string(width > n.size() ? width - n.size() : 0, '0') + n;
}

std::size_t digits(std::size_t n) {
  std::size_t d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return std::max<std::size_t>(d, 3);
}

}  // namespace

void SyntheticConfig::validate() const {
  if (questions == 0) throw InvalidArgument("synthetic dataset needs at least one question");
  if (passages < questions) throw InvalidArgument("passage count too small for the gold passages");
  if (relations_per_entity == 0 || relations_per_entity > kRelations.size()) {
    throw InvalidArgument("relations per entity must be in [1, " + std::to_string(kRelations.size()) + "]");
  }
  if (filler_vocabulary == 0 || gold_vocabulary == 0) throw InvalidArgument("vocabularies must be non-empty");
  if (answer_vocabulary < 2 || questions > answer_vocabulary * (answer_vocabulary - 1)) {
    throw InvalidArgument("answer vocabulary too small for distinct answers");
  }
  if (gold_filler_min > gold_filler_max || background_min > background_max || background_min == 0) {
    throw InvalidArgument("invalid synthetic length range");
  }
  if (!(second_answer_rate >= 0.0 && second_answer_rate <= 1.0)) {
    throw InvalidArgument("second answer rate must be in [0, 1]");
  }
}

SyntheticDataset make_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  NonceWords words(rng);
  std::vector<std::string> filler, gold_words;
  for (std::size_t i = 0; i < config.filler_vocabulary; ++i) filler.push_back(words.next(2));
  for (std::size_t i = 0; i < config.gold_vocabulary; ++i) gold_words.push_back(words.next(2));
  std::vector<std::string> answer_words;
  for (std::size_t i = 0; i < config.answer_vocabulary; ++i) answer_words.push_back(words.next(3));
  std::set<std::pair<std::size_t, std::size_t>> used_answers;

  struct Draft {
    std::string text;
    std::size_t question = SIZE_MAX;  // gold passage of this question
  };
  std::vector<Draft> drafts;
  drafts.reserve(config.passages);
  std::vector<QAPair> qa;
  qa.reserve(config.questions);
  const std::size_t qwidth = digits(config.questions);

  std::string entity;
  std::vector<std::size_t> relations(kRelations.size());
  for (std::size_t q = 0; q < config.questions; ++q) {
    const std::size_t slot = q % config.relations_per_entity;
    if (slot == 0) {
      entity = words.next(3) + " " + words.next(3);
      std::iota(relations.begin(), relations.end(), std::size_t{0});
      shuffle(relations, rng);
    }
    const auto& [asked, stated] = kRelations[relations[slot]];
    std::size_t a = 0, b = 0;
    do {
      a = uniform_index(rng, answer_words.size());
      b = uniform_index(rng, answer_words.size());
    } while (a == b || !used_answers.emplace(a, b).second);
    const std::string answer = answer_words[a] + " " + answer_words[b];

    QAPair pair;
    pair.qid = numbered('q', q, qwidth);
    pair.question = "What is the " + std::string(asked) + " of " + entity + "?";
    pair.answers.push_back(answer);
    if (uniform_unit(rng) < config.second_answer_rate) {
      pair.answers.push_back(answer + " " + entity.substr(0, entity.find(' ')));
    }
    qa.push_back(std::move(pair));

    std::string gold = "The " + std::string(stated) + " of " + entity + " is " + answer + ".";
    const std::size_t extra = draw_length(rng, config.gold_filler_min, config.gold_filler_max);
    if (extra > 0) gold += " " + sentence(rng, gold_words, extra);
    drafts.push_back(Draft{std::move(gold), q});
  }
  while (drafts.size() < config.passages) {
    drafts.push_back(Draft{sentence(rng, filler, draw_length(rng, config.background_min, config.background_max))});
  }

  shuffle(drafts, rng);
  SyntheticDataset out;
  std::vector<Passage> passages;
  passages.reserve(drafts.size());
  const std::size_t pwidth = digits(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    std::string pid = numbered('p', i, pwidth);
    if (drafts[i].question != SIZE_MAX) out.qrels[qa[drafts[i].question].qid].insert(pid);
    passages.push_back(Passage{std::move(pid), std::move(drafts[i].text)});
  }
  out.corpus = Corpus(std::move(passages));
  out.qa_pairs = std::move(qa);
  return out;
}

void save_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_corpus(dataset.corpus, dir / "corpus.jsonl");
  save_qa_pairs(dataset.qa_pairs, dir / "qa.jsonl");
  save_qrels(dataset.qrels, dir / "qrels.tsv");
}

}  // namespace wrag
