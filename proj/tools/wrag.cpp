// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

// wrag: command-line driver for the weak-label RAG pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wrag/errors.hpp"
#include "wrag/pipeline.hpp"

namespace {

struct GlobalOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string corpus, qa, qrels, workdir;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
};

wrag::PipelineConfig resolve(const GlobalOptions& g) {
  wrag::PipelineConfig c = g.config.empty() ? wrag::PipelineConfig{} : wrag::load_config(g.config);
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw wrag::InvalidArgument("--set expects KEY=VALUE, got \"" + s + "\"");
    wrag::apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!g.corpus.empty()) wrag::apply_setting(c, "corpus", g.corpus);
  if (!g.qa.empty()) wrag::apply_setting(c, "qa", g.qa);
  if (!g.qrels.empty()) wrag::apply_setting(c, "qrels", g.qrels);
  if (!g.workdir.empty()) wrag::apply_setting(c, "workdir", g.workdir);
  if (g.seed) wrag::apply_setting(c, "seed", std::to_string(*g.seed));
  if (g.alpha) wrag::apply_setting(c, "two_tower.alpha", std::to_string(*g.alpha));
  return c;
}

const std::vector<std::string> kModels = {"two-tower", "late-interaction"};
const std::vector<std::string> kSearchers = {"bm25", "two-tower", "late-interaction"};
const std::vector<std::string> kAnswerers = {"none", "gold", "bm25", "two-tower", "late-interaction"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised retrieval for RAG: index, weak-label, train, search, answer, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("-c,--config", g.config, "key = value config file");
  app.add_option("--set", g.sets, "override one config key (KEY=VALUE, repeatable)");
  app.add_option("--corpus", g.corpus, "corpus JSONL");
  app.add_option("--qa", g.qa, "question/answer JSONL");
  app.add_option("--qrels", g.qrels, "qrels TSV");
  app.add_option("-w,--workdir", g.workdir, "artifact directory");
  app.add_option("--seed", g.seed, "seed for splits and training");
  app.add_option("--alpha", g.alpha, "two-tower similarity scale");

  auto* synth = app.add_subcommand("synth", "write the bundled synthetic dataset and a config for it");
  std::string synth_out = "wrag-synthetic";
  wrag::SyntheticConfig synth_config;
  synth->add_option("-o,--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--questions", synth_config.questions)->capture_default_str();
  synth->add_option("--passages", synth_config.passages)->capture_default_str();
  synth->add_option("--data-seed", synth_config.seed, "generator seed")->capture_default_str();

  auto* config_cmd = app.add_subcommand("config", "print the resolved configuration");

  auto* index = app.add_subcommand("index", "build the BM25 index");

  auto* weaklabel = app.add_subcommand("weaklabel", "rerank BM25 candidates into weak labels (default: run)");
  weaklabel->require_subcommand(0, 1);
  auto* weaklabel_run = weaklabel->add_subcommand("run", "label the training split");
  auto* weaklabel_eval = weaklabel->add_subcommand("eval", "Recall@k before and after reranking");

  std::string model;
  auto* train = app.add_subcommand("train", "train a dense retriever on the weak labels");
  train->add_option("model", model)->required()->check(CLI::IsMember(kModels));
  auto* encode = app.add_subcommand("encode", "encode the corpus with a trained retriever");
  encode->add_option("model", model)->required()->check(CLI::IsMember(kModels));

  std::string searcher;
  auto* search = app.add_subcommand("search", "rank the test split with a retriever");
  search->add_option("retriever", searcher)->required()->check(CLI::IsMember(kSearchers));

  std::string answerer;
  auto* qa = app.add_subcommand("qa", "answer the test split (default: run)");
  qa->require_subcommand(0, 1);
  qa->add_subcommand("run", "generate answers");
  qa->add_option("-r,--retriever", answerer, "overrides qa.retriever")->check(CLI::IsMember(kAnswerers));

  std::string target;
  auto* eval = app.add_subcommand("eval", "retrieval or QA metrics with t-tests");
  eval->add_option("target", target)->required()->check(CLI::IsMember({"retrieval", "qa"}));

  auto* e2e = app.add_subcommand("e2e", "every stage offline with the mock scorer and generator");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      const auto conf = wrag::write_synthetic_workspace(synth_config, synth_out);
      std::cout << "wrote " << synth_out << " (config: " << conf.string() << ")\n";
      return 0;
    }
    wrag::PipelineConfig config = resolve(g);
    if (config_cmd->parsed()) {
      std::cout << wrag::dump_config(config);
      return 0;
    }
    if (e2e->parsed()) config = wrag::with_bundled_dataset(std::move(config));

    wrag::Pipeline pipeline(std::move(config), std::cerr);
    if (index->parsed()) {
      pipeline.index();
    } else if (weaklabel->parsed()) {
      if (weaklabel_eval->parsed()) {
        pipeline.weaklabel_eval();
      } else {
        (void)weaklabel_run;
        pipeline.weaklabel_run();
      }
    } else if (train->parsed()) {
      pipeline.train(wrag::parse_retriever_kind(model));
    } else if (encode->parsed()) {
      pipeline.encode(wrag::parse_retriever_kind(model));
    } else if (search->parsed()) {
      pipeline.search(wrag::parse_retriever_kind(searcher));
    } else if (qa->parsed()) {
      std::optional<wrag::RetrieverKind> kind;
      if (!answerer.empty()) kind = wrag::parse_retriever_kind(answerer);
      pipeline.qa(kind);
    } else if (eval->parsed()) {
      if (target == "retrieval") {
        pipeline.eval_retrieval();
      } else {
        pipeline.eval_qa();
      }
    } else if (e2e->parsed()) {
      const auto result = pipeline.e2e();
      for (const auto& r : result.qa) std::cout << r.label << "\tf1\t" << r.mean("f1") << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "wrag: error: " << e.what() << "\n";
    return wrag::exit_code_for(e);
  }
}
