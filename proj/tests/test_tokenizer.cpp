// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "support.hpp"
#include "wrag/tokenizer.hpp"

using wrag::TokenSeq;
using wrag::tokenize;

TEST_SUITE("tokenizer") {
  TEST_CASE("splits on non-alphanumerics and lowercases") {
    CHECK(tokenize("Don't stop") == TokenSeq{"don", "t", "stop"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("Big Air Snowboarding, 2018!") == TokenSeq{"big", "air", "snowboarding", "2018"});
    CHECK(tokenize("  ...  ").empty());
  }

  TEST_CASE("unicode letters and case mapping") {
    CHECK(tokenize("Ünïcödé ÉTÉ") == TokenSeq{"ünïcödé", "été"});
    CHECK(tokenize("Straße—Köln") == TokenSeq{"straße", "köln"});
    CHECK(tokenize("東京 2020") == TokenSeq{"東京", "2020"});
  }

  TEST_CASE("invalid utf-8 bytes separate tokens") {
    const std::string text = std::string("ab") + '\xff' + "cd";
    CHECK(tokenize(text) == TokenSeq{"ab", "cd"});
  }

  TEST_CASE("property: idempotent on joined output and concatenation-compatible") {
    wrag::Rng rng(11);
    const std::string pieces[] = {"Alpha", "beta", "GAMMA", "42", "x-y", "don't", "é", ",", "  ", "Ωmega", "\t"};
    for (int trial = 0; trial < 300; ++trial) {
      std::string a, b;
      for (int i = 0; i < 6; ++i) a += pieces[wrag::uniform_index(rng, std::size(pieces))];
      for (int i = 0; i < 6; ++i) b += pieces[wrag::uniform_index(rng, std::size(pieces))];
      const TokenSeq ta = tokenize(a);
      std::string joined;
      for (std::size_t i = 0; i < ta.size(); ++i) joined += (i ? " " : "") + ta[i];
      CHECK(tokenize(joined) == ta);

      TokenSeq expected = ta;
      const TokenSeq tb = tokenize(b);
      expected.insert(expected.end(), tb.begin(), tb.end());
      CHECK(tokenize(a + " " + b) == expected);
      for (const auto& t : ta) CHECK_FALSE(t.empty());
    }
  }
}
