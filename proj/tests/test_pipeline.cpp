// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "support.hpp"
#include "wrag/errors.hpp"
#include "wrag/pipeline.hpp"

using namespace wrag;
using wrag::testing::TempDir;
using wrag::testing::read_text;
using wrag::testing::write_text;
namespace fs = std::filesystem;

namespace {

SyntheticConfig tiny_data() {
  SyntheticConfig c;
  c.questions = 40;
  c.passages = 400;
  return c;
}

PipelineConfig tiny_pipeline(const TempDir& dir) {
  const fs::path conf = write_synthetic_workspace(tiny_data(), dir.path());
  PipelineConfig c = load_config(conf);
  apply_config_text(c,
                    "encoder.vocab_size = 4096\n"
                    "encoder.dim = 16\n"
                    "two_tower.epochs = 2\n"
                    "two_tower.batch_size = 8\n"
                    "late_interaction.epochs = 1\n"
                    "late_interaction.batch_size = 8\n"
                    "weaklabel.hard_negatives = 3\n"
                    "retrieval.candidates = 20\n");
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WRAG_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("defaults materialize from an empty file plus paths") {
    TempDir dir;
    write_text(dir / "empty.conf", "");
    PipelineConfig c = load_config(dir / "empty.conf");
    apply_setting(c, "corpus", "/data/c.jsonl");
    CHECK(c.candidates == 100);
    CHECK(c.two_tower.alpha == 20.0);
    CHECK(c.rerank.hard_negatives == 10);
    CHECK(c.late_interaction.hard_negatives == 4);
    CHECK(c.qa_run.top_n == 1);
    CHECK(c.qa_run.max_tokens == 20);
    CHECK(c.bm25 == Bm25Params{1.5, 0.75, 0.25});
    CHECK(c.seed == 13);
    CHECK(c.corpus == "/data/c.jsonl");
  }

  TEST_CASE("file values, later overrides and path resolution") {
    TempDir dir;
    write_text(dir / "w.conf",
               "# comment\n"
               "corpus = data/corpus.jsonl\n"
               "two_tower.alpha = 20\n"
               "prompt.passage_label = \"PASSAGE\"\n"
               "eval.recall_ks = 1, 10\n");
    PipelineConfig c = load_config(dir / "w.conf");
    CHECK(c.corpus == dir.path() / "data/corpus.jsonl");
    CHECK(c.prompt.passage_label == "PASSAGE");
    CHECK(c.recall_ks == std::vector<std::size_t>{1, 10});
    CHECK(c.is_explicit("two_tower.alpha"));
    CHECK_FALSE(c.is_explicit("seed"));
    apply_setting(c, "two_tower.alpha", "10");
    CHECK(c.two_tower.alpha == 10.0);

    PipelineConfig round;
    apply_config_text(round, dump_config(c));
    CHECK(dump_config(round) == dump_config(c));
  }

  TEST_CASE("config errors name the key") {
    PipelineConfig c;
    CHECK_THROWS_WITH_AS(apply_setting(c, "foo", "1"), doctest::Contains("'foo'"), InvalidArgument);
    CHECK_THROWS_WITH_AS(apply_setting(c, "seed", "abc"), doctest::Contains("'seed'"), InvalidArgument);
    CHECK_THROWS_WITH_AS(apply_config_text(c, "seed = 1\nbogus\n", "x.conf"), doctest::Contains("x.conf:2"),
                         InvalidArgument);
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  }

  TEST_CASE("exit codes by error kind") {
    CHECK(exit_code_for(MissingArtifact("m")) == 2);
    CHECK(exit_code_for(TransportError("t")) == 3);
    CHECK(exit_code_for(DataError("d")) == 1);
    CHECK(exit_code_for(InvalidArgument("i")) == 1);
  }

  TEST_CASE("stages run in order, report missing upstream artifacts and are idempotent") {
    TempDir dir;
    std::ostringstream log;
    Pipeline p(tiny_pipeline(dir), log);
    CHECK_THROWS_WITH_AS(p.train(RetrieverKind::TwoTower), doctest::Contains("run weaklabel first"), MissingArtifact);
    CHECK_THROWS_WITH_AS(p.weaklabel_run(), doctest::Contains("run index first"), MissingArtifact);

    CHECK(p.index().status == StageStatus::Ran);
    const std::string index_bytes = read_text(p.artifact(artifacts::kIndex));
    CHECK(p.index().status == StageStatus::UpToDate);
    CHECK(read_text(p.artifact(artifacts::kIndex)) == index_bytes);

    CHECK(p.weaklabel_run().status == StageStatus::Ran);
    CHECK(p.weaklabel_run().status == StageStatus::UpToDate);
    const auto cmp = p.weaklabel_eval();
    CHECK(cmp.reranked.front() >= cmp.first_stage.front());

    CHECK_THROWS_WITH_AS(p.encode(RetrieverKind::TwoTower), doctest::Contains("run train two-tower first"),
                         MissingArtifact);
    CHECK(p.train(RetrieverKind::TwoTower).status == StageStatus::Ran);
    CHECK(p.train(RetrieverKind::TwoTower).status == StageStatus::UpToDate);
    CHECK(p.encode(RetrieverKind::TwoTower).status == StageStatus::Ran);
    CHECK(p.search(RetrieverKind::TwoTower).status == StageStatus::Ran);
    CHECK(p.search(RetrieverKind::Bm25).status == StageStatus::Ran);
    CHECK(p.qa(RetrieverKind::TwoTower).status == StageStatus::Ran);
    CHECK(p.qa(RetrieverKind::TwoTower).status == StageStatus::UpToDate);
    CHECK(p.qa(RetrieverKind::None).status == StageStatus::Ran);

    const auto retrieval = p.eval_retrieval();
    CHECK(retrieval.size() == 2);
    const auto qa = p.eval_qa();
    CHECK(qa.size() == 2);
    CHECK(fs::exists(p.artifact(artifacts::run(RetrieverKind::TwoTower))));
    CHECK(fs::exists(p.artifact(artifacts::generations(RetrieverKind::None))));
  }

  TEST_CASE("a changed key reruns only the stages that read it") {
    TempDir dir;
    std::ostringstream log;
    PipelineConfig config = tiny_pipeline(dir);
    {
      Pipeline p(config, log);
      p.index();
      p.weaklabel_run();
    }
    apply_setting(config, "bm25.k1", "1.2");
    Pipeline p(config, log);
    CHECK(p.index().status == StageStatus::Ran);
    CHECK(p.weaklabel_run().status == StageStatus::Ran);
    apply_setting(config, "two_tower.alpha", "10");
    Pipeline q(config, log);
    CHECK(q.index().status == StageStatus::UpToDate);
    CHECK(q.weaklabel_run().status == StageStatus::UpToDate);
  }

  TEST_CASE("cli exit codes") {
    TempDir dir;
    const fs::path conf = write_synthetic_workspace(tiny_data(), dir.path());
    const std::string base = "-c " + conf.string() + " -w " + (dir / "w").string();
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 1);
    CHECK(run_cli("config --set foo=1") == 1);
    CHECK(run_cli("search dpr") == 1);
    CHECK(run_cli("--corpus " + (dir / "missing.jsonl").string() + " index") == 1);
    CHECK(run_cli(base + " config") == 0);
    CHECK(run_cli(base + " train two-tower") == 2);
    CHECK(run_cli(base + " index") == 0);
    CHECK(run_cli(base + " --set retrieval.candidates=5 --set scorer.backend=endpoint"
                         " --set endpoint.base_url=http://127.0.0.1:1/v1 --set endpoint.retries=0 weaklabel") == 3);
  }
}
