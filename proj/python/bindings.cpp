// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "wrag/bm25.hpp"
#include "wrag/errors.hpp"
#include "wrag/eval.hpp"
#include "wrag/late_interaction.hpp"
#include "wrag/llm_gateway.hpp"
#include "wrag/pipeline.hpp"
#include "wrag/synthetic.hpp"
#include "wrag/tokenizer.hpp"
#include "wrag/two_tower.hpp"

namespace py = pybind11;
using namespace wrag;

namespace {

py::list scored(const std::vector<ScoredPid>& hits) {
  py::list out;
  for (const auto& h : hits) out.append(py::make_tuple(h.pid, h.score));
  return out;
}

py::dict report_dict(const MetricReport& r) {
  py::dict means;
  for (const auto& m : r.metrics) means[py::str(m)] = r.mean(m);
  py::dict d;
  d["system"] = r.label;
  d["qids"] = r.qids;
  d["means"] = means;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "wrag core bindings";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<MissingArtifact>(m, "MissingArtifact", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def("tokenize", [](std::string_view text) { return tokenize(text); }, py::arg("text"));

  py::class_<Passage>(m, "Passage")
      .def_readonly("pid", &Passage::pid)
      .def_readonly("text", &Passage::text);

  py::class_<Corpus>(m, "Corpus")
      .def(py::init([](const std::vector<std::pair<std::string, std::string>>& rows) {
             std::vector<Passage> passages;
             for (const auto& [pid, text] : rows) passages.push_back(Passage{pid, text});
             return Corpus(std::move(passages));
           }),
           py::arg("passages"))
      .def_static("load", &load_corpus, py::arg("path"))
      .def("save", [](const Corpus& c, const std::filesystem::path& p) { save_corpus(c, p); })
      .def("__len__", &Corpus::size)
      .def("__contains__", &Corpus::contains)
      .def("text", [](const Corpus& c, std::string_view pid) { return c.at(pid).text; })
      .def("pids", [](const Corpus& c) {
        std::vector<std::string> out;
        for (const auto& p : c.passages()) out.push_back(p.pid);
        return out;
      });

  py::class_<QAPair>(m, "QAPair")
      .def_readonly("qid", &QAPair::qid)
      .def_readonly("question", &QAPair::question)
      .def_readonly("answers", &QAPair::answers);

  py::class_<SyntheticDataset>(m, "SyntheticDataset")
      .def_readonly("corpus", &SyntheticDataset::corpus)
      .def_readonly("qa_pairs", &SyntheticDataset::qa_pairs)
      .def_readonly("qrels", &SyntheticDataset::qrels);
  m.def(
      "make_synthetic",
      [](std::size_t questions, std::size_t passages, std::uint64_t seed) {
        SyntheticConfig c;
        c.questions = questions;
        c.passages = passages;
        c.seed = seed;
        return make_synthetic(c);
      },
      py::arg("questions") = 200, py::arg("passages") = 5000, py::arg("seed") = 7);

  py::class_<Bm25Index>(m, "Bm25Index")
      .def_static(
          "build",
          [](const Corpus& corpus, double k1, double b, double epsilon) {
            return Bm25Index::build(corpus, Bm25Params{k1, b, epsilon});
          },
          py::arg("corpus"), py::arg("k1") = 1.5, py::arg("b") = 0.75, py::arg("epsilon") = 0.25)
      .def("raw_idf", &Bm25Index::raw_idf)
      .def("score", [](const Bm25Index& i, std::string_view q, std::string_view pid) {
        return i.score(tokenize(q), pid);
      })
      .def("retrieve", [](const Bm25Index& i, std::string_view q, std::size_t k) { return scored(i.retrieve_topk(q, k)); },
           py::arg("question"), py::arg("k") = 100);

  m.def("containment_score", &mock_containment_score, py::arg("passage"), py::arg("question"), py::arg("answer"));
  m.def(
      "qa_prompt",
      [](const std::vector<std::string>& passages, std::string_view question) {
        return build_qa_prompt(passages, question);
      },
      py::arg("passages"), py::arg("question"));
  m.def(
      "mock_generate",
      [](const std::string& prompt, int max_tokens) { return MockGenerator().generate(prompt, max_tokens); },
      py::arg("prompt"), py::arg("max_tokens") = 20);

  m.def("token_f1", &token_f1);
  m.def("rouge_l", &rouge_l);
  m.def("bleu_1", &bleu_1);
  m.def("paired_t_test", [](const std::vector<double>& a, const std::vector<double>& b) {
    const auto r = paired_t_test(a, b);
    return py::make_tuple(r.t, r.p);
  });
  m.def("cosine_score", [](const std::vector<double>& q, const std::vector<double>& p) { return cosine_score(q, p); });
  m.def("mnr_loss", [](const std::vector<std::vector<double>>& cos, double alpha) {
    const std::size_t n = cos.size();
    std::vector<double> flat;
    for (const auto& row : cos) {
      if (row.size() != n) throw InvalidArgument("score matrix must be square");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return mnr_loss_from_scores(Matrix(n, n, std::move(flat)), alpha);
  }, py::arg("scores"), py::arg("alpha") = 20.0);
  m.def("pairwise_loss", [](double pos, double neg) { return pairwise_loss(pos, neg); });

  m.def(
      "e2e",
      [](const std::filesystem::path& workdir) {
        PipelineConfig config;
        apply_setting(config, "workdir", workdir.string());
        std::ostringstream log;
        E2EResult result;
        {
          py::gil_scoped_release release;
          Pipeline pipeline(with_bundled_dataset(std::move(config)), log);
          result = pipeline.e2e();
        }
        py::dict out;
        py::list retrieval, qa;
        for (const auto& r : result.retrieval) retrieval.append(report_dict(r));
        for (const auto& r : result.qa) qa.append(report_dict(r));
        out["retrieval"] = retrieval;
        out["qa"] = qa;
        return out;
      },
      py::arg("workdir"));
}
