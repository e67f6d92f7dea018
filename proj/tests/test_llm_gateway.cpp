// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "fake_endpoint.hpp"
#include "support.hpp"
#include "wrag/errors.hpp"
#include "wrag/llm_gateway.hpp"
#include "wrag/tokenizer.hpp"

using namespace wrag;
using nlohmann::json;
using wrag::testing::FakeEndpoint;
using wrag::testing::FakeReply;

namespace {

json read_json(const std::string& name) {
  std::ifstream in(std::string(WRAG_TEST_DATA) + "/" + name);
  return json::parse(in);
}

EndpointConfig endpoint(const FakeEndpoint& server) {
  EndpointConfig c;
  c.base_url = server.base_url();
  c.model = "fake";
  c.timeout_seconds = 5;
  c.retries = 2;
  c.backoff_seconds = 0.01;
  return c;
}

FakeReply echo_reply(const json& request, bool offsets) {
  return FakeReply{200, wrag::testing::echo_response(request["prompt"].get<std::string>(), offsets).dump()};
}

// Mean over the answer's space tokens, computed from the answer alone.
double expected_mean(const std::string& answer) {
  double sum = 0;
  const auto toks = wrag::testing::space_tokens(" " + answer);
  for (const auto& t : toks) sum += wrag::testing::space_token_logprob(t);
  return sum / static_cast<double>(toks.size());
}

}  // namespace

TEST_SUITE("llm_gateway") {
  TEST_CASE("default scoring prompt orders passage, question, instruction") {
    const std::string p = build_score_prompt("The games were in 2018.", "When were the games?");
    const auto doc = p.find("DOCUMENT:");
    const auto q = p.find("QUESTION:");
    const auto inst = p.find("INSTRUCTION:");
    REQUIRE(doc != std::string::npos);
    CHECK(doc < q);
    CHECK(q < inst);
    CHECK(p.ends_with("ANSWER:"));
  }

  TEST_CASE("ordering and label overrides") {
    PromptTemplate t;
    t.score_ordering = PromptOrdering::InstructionPassageQuestion;
    const std::string p = build_score_prompt("passage", "question", t);
    CHECK(p.rfind("INSTRUCTION: " + t.score_instruction, 0) == 0);

    t.score_ordering = PromptOrdering::PassageInstructionQuestion;
    const std::string p2 = build_score_prompt("passage", "question", t);
    CHECK(p2.find("INSTRUCTION:") < p2.find("QUESTION:"));

    PromptTemplate relabeled;
    relabeled.passage_label = "PASSAGE";
    const std::string p3 = build_score_prompt("passage", "question", relabeled);
    CHECK(p3.find("PASSAGE:") != std::string::npos);
    CHECK(p3.find("DOCUMENT:") == std::string::npos);

    CHECK(parse_prompt_ordering("Instruction_Passage_Question") == PromptOrdering::InstructionPassageQuestion);
    CHECK_THROWS_AS(parse_prompt_ordering("question-first"), InvalidArgument);
    CHECK_THROWS_AS(build_score_prompt("", "q"), InvalidArgument);
    CHECK_THROWS_AS(build_score_prompt("p", ""), InvalidArgument);
    relabeled.passage_label.clear();
    CHECK_THROWS_AS(build_score_prompt("p", "q", relabeled), InvalidArgument);
  }

  TEST_CASE("qa prompt blocks") {
    const std::vector<std::string> none;
    const std::string naive = build_qa_prompt(none, "Who?");
    CHECK(naive.find("DOCUMENT:") == std::string::npos);
    CHECK(naive.find("QUESTION: Who?") != std::string::npos);
    CHECK(naive.find("internal knowledge") != std::string::npos);

    const std::vector<std::string> one = {"alpha"};
    const std::string single = build_qa_prompt(one, "Who?");
    CHECK(single.find("DOCUMENT:") == single.rfind("DOCUMENT:"));

    const std::vector<std::string> three = {"first", "second", "third"};
    const std::string p = build_qa_prompt(three, "Who?");
    const auto a = p.find("DOCUMENT: first");
    const auto b = p.find("DOCUMENT: second");
    const auto c = p.find("DOCUMENT: third");
    REQUIRE(a != std::string::npos);
    CHECK(a < b);
    CHECK(b < c);
    CHECK(c < p.find("QUESTION:"));
  }

  TEST_CASE("mean log-likelihood") {
    const std::vector<TokenLogProb> certain = {{"a", 0.0}, {"b", 0.0}};
    CHECK(mean_log_likelihood(certain) == 0.0);
    const std::vector<TokenLogProb> two = {{"a", -0.5}, {"b", -1.5}};
    CHECK(mean_log_likelihood(two) == -1.0);
    CHECK_THROWS_AS(mean_log_likelihood({}), DataError);
    const std::vector<TokenLogProb> positive = {{"a", 0.1}};
    CHECK_THROWS_AS(mean_log_likelihood(positive), DataError);
  }

  TEST_CASE("fixture replay: three-token answer") {
    const auto fixture = parse_logprob_fixture(read_json("answer_logprobs.json"));
    REQUIRE(fixture.size() == 3);
    const double hand = (-1.386294361 + -0.287682072 + -0.051293294) / 3.0;
    CHECK(std::abs(mean_log_likelihood(fixture) - hand) <= 1e-9);

    const json recorded = read_json("echo_response.json");
    const std::string prompt = recorded["prompt"];
    const std::string full = prompt + answer_continuation(recorded["answer"].get<std::string>());
    const auto span = answer_logprobs_from_response(recorded["response"], prompt.size(), full.size());
    REQUIRE(span.size() == 3);
    CHECK(span[0].token == " 2018");
    CHECK(span[2].token == " Games");
    CHECK(std::abs(mean_log_likelihood(span) - hand) <= 1e-9);

    json stripped = recorded["response"];
    stripped["choices"][0].erase("logprobs");
    CHECK_THROWS_AS(answer_logprobs_from_response(stripped, 0, 1), DataError);
  }

  TEST_CASE("containment mock") {
    CHECK(mock_containment_score("Held in 2018 in Korea.", "When?", "2018") == 1.0);
    CHECK(mock_containment_score("only a here", "q", "a b") == 0.5);
    CHECK(mock_containment_score("nothing shared", "q", "x y") == 0.0);
    CHECK(mock_containment_score("anything", "q", "...") == 0.0);
    ContainmentScorer scorer;
    CHECK(scorer.family() == ScoreFamily::Containment);
    CHECK(scorer.score("a b", "q", "b") == 1.0);
    CHECK(scorer.invocations() == 1);
  }

  TEST_CASE("property: containment is monotone in added answer tokens and stays in [0,1]") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
      std::string passage = wrag::testing::random_text(rng, 1, 10);
      const std::string answer = wrag::testing::random_text(rng, 1, 4);
      double before = mock_containment_score(passage, "q", answer);
      CHECK(before >= 0.0);
      CHECK(before <= 1.0);
      for (const auto& t : tokenize(answer)) {
        passage += " " + t;
        const double after = mock_containment_score(passage, "q", answer);
        CHECK(after >= before);
        before = after;
      }
      CHECK(before == 1.0);
    }
  }

  TEST_CASE("mock generator") {
    MockGenerator gen;
    const std::vector<std::string> docs = {"The color of Bo Ka is red. Other text.", "Second passage."};
    const std::string prompt = build_qa_prompt(docs, "What is the hue of Bo Ka?");
    CHECK(generate_answer(gen, prompt) == "The color of Bo Ka is red.");
    CHECK(generate_answer(gen, prompt) == generate_answer(gen, prompt));
    CHECK(generate_answer(gen, prompt, 3) == "The color of");
    CHECK(generate_answer(gen, build_qa_prompt({}, "Who?")) == "I do not know.");
    CHECK_THROWS_AS(generate_answer(gen, prompt, 0), InvalidArgument);
  }

  TEST_CASE("endpoint config validation") {
    EndpointConfig c;
    c.base_url = "http://localhost:1/v1";
    CHECK_NOTHROW(c.validate());
    c.timeout_seconds = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.timeout_seconds = 1;
    c.max_in_flight = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.max_in_flight = 1;
    c.base_url = "ftp://x";
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  }

  TEST_CASE("echo scoring reads the answer span by text offset") {
    FakeEndpoint server([](const json& r, std::size_t) { return echo_reply(r, true); });
    CompletionClient client(endpoint(server));
    const std::string prompt = build_score_prompt("p q", "r?");
    CHECK(score_answer_loglik(client, prompt, "red blue") == doctest::Approx(expected_mean("red blue")));
    const auto requests = server.requests();
    REQUIRE(requests.size() == 1);
    CHECK(requests[0]["echo"] == true);
    CHECK(requests[0]["prompt"] == prompt + " red blue");
    CHECK(requests[0]["temperature"] == 0);
    CHECK(requests[0]["model"] == "fake");
  }

  TEST_CASE("echo scoring falls back to a prompt-only request without offsets") {
    FakeEndpoint server([](const json& r, std::size_t) { return echo_reply(r, false); });
    CompletionClient client(endpoint(server));
    const std::string prompt = build_score_prompt("p q", "r?");
    CHECK(score_answer_loglik(client, prompt, "green tea leaf") ==
          doctest::Approx(expected_mean("green tea leaf")));
    const auto requests = server.requests();
    REQUIRE(requests.size() == 2);
    CHECK(requests[1]["prompt"] == prompt);
  }

  TEST_CASE("server errors are retried, client errors are not") {
    FakeEndpoint flaky([](const json& r, std::size_t call) {
      return call == 0 ? FakeReply{500, "{}"} : echo_reply(r, true);
    });
    CompletionClient client(endpoint(flaky));
    CHECK(score_answer_loglik(client, "ANSWER:", "x") == doctest::Approx(expected_mean("x")));
    CHECK(client.request_count() == 2);

    FakeEndpoint rejecting([](const json&, std::size_t) { return FakeReply{400, "{\"error\":\"bad\"}"}; });
    CompletionClient rejected(endpoint(rejecting));
    CHECK_THROWS_AS(score_answer_loglik(rejected, "ANSWER:", "x"), TransportError);
    CHECK(rejected.request_count() == 1);

    FakeEndpoint down([](const json&, std::size_t) { return FakeReply{503, "{}"}; });
    CompletionClient exhausted(endpoint(down));
    CHECK_THROWS_AS(exhausted.complete("hi", 5), TransportError);
    CHECK(exhausted.request_count() == 3);

    FakeEndpoint garbage([](const json&, std::size_t) { return FakeReply{200, "not json"}; });
    CompletionClient confused(endpoint(garbage));
    CHECK_THROWS_AS(confused.complete("hi", 5), DataError);
  }

  TEST_CASE("unreachable endpoint is a transport error") {
    EndpointConfig c;
    c.base_url = "http://127.0.0.1:1/v1";
    c.retries = 1;
    c.backoff_seconds = 0.01;
    c.timeout_seconds = 1;
    CompletionClient client(c);
    CHECK_THROWS_AS(client.complete("hi", 5), TransportError);
    CHECK(client.request_count() == 2);
  }

  TEST_CASE("generation requests twenty tokens at temperature zero") {
    FakeEndpoint server([](const json&, std::size_t) {
      return FakeReply{200, json{{"choices", {{{"text", "  Pyeongchang \n"}}}}}.dump()};
    });
    CompletionClient client(endpoint(server));
    CompletionGenerator gen(client);
    CHECK(generate_answer(gen, "QUESTION: where?\n\nANSWER:") == "Pyeongchang");
    const auto requests = server.requests();
    REQUIRE(requests.size() == 1);
    CHECK(requests[0]["max_tokens"] == 20);
    CHECK(requests[0]["temperature"] == 0);
    CHECK_THROWS_AS(generate_answer(gen, "x", 0), InvalidArgument);

    FakeEndpoint blank([](const json&, std::size_t) { return FakeReply{200, json{{"choices", {{{"text", " "}}}}}.dump()}; });
    CompletionClient blank_client(endpoint(blank));
    CompletionGenerator blank_gen(blank_client);
    CHECK_THROWS_AS(generate_answer(blank_gen, "x"), DataError);
  }

  TEST_CASE("concurrent scoring keeps query order and the cache avoids repeat requests") {
    FakeEndpoint server([](const json& r, std::size_t call) {
      std::this_thread::sleep_for(std::chrono::milliseconds((call * 7) % 13));
      return echo_reply(r, true);
    });
    EndpointConfig c = endpoint(server);
    c.max_in_flight = 4;
    CompletionClient client(c);
    wrag::testing::TempDir dir;
    auto cache = std::make_shared<ScoreCache>(dir / "cache.jsonl");
    CompletionScorer scorer(client, PromptTemplate{}, cache);
    CHECK(scorer.family() == ScoreFamily::LogLikelihood);

    std::vector<std::string> answers;
    for (int i = 0; i < 16; ++i) answers.push_back(std::string(static_cast<std::size_t>(i % 5 + 1), 'a') + " b" + std::to_string(i));
    std::vector<ScoreQuery> queries;
    for (const auto& a : answers) queries.push_back(ScoreQuery{"passage text", "question?", a});
    const auto scores = scorer.score_batch(queries);
    REQUIRE(scores.size() == answers.size());
    for (std::size_t i = 0; i < answers.size(); ++i) {
      CHECK(scores[i] == doctest::Approx(expected_mean(answers[i])));
      CHECK(scores[i] <= 0.0);
    }
    const std::size_t sent = client.request_count();
    CHECK(sent == answers.size());
    CHECK(scorer.score_batch(queries) == scores);
    CHECK(client.request_count() == sent);

    ScoreCache reloaded(dir / "cache.jsonl");
    CHECK(reloaded.size() == answers.size());
  }
}
