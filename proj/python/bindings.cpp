#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "schemamap/chat.hpp"
#include "schemamap/confidence.hpp"
#include "schemamap/embed.hpp"
#include "schemamap/errors.hpp"
#include "schemamap/eval.hpp"
#include "schemamap/kgbuild.hpp"
#include "schemamap/pipeline.hpp"
#include "schemamap/vocab.hpp"

namespace py = pybind11;
using namespace schemamap;

namespace {

Confidence confidence_of(const std::string& text) {
  auto c = parse_confidence(text);
  if (!c) throw Error(errc::kInvalidArgument, "not a confidence class: " + text);
  return *c;
}

std::string aggregate(const std::vector<std::string>& items) {
  std::vector<Confidence> values;
  for (const auto& s : items) values.push_back(confidence_of(s));
  return std::string(to_string(aggregate_confidence(values)));
}

using PyTriple = std::tuple<std::string, std::string, std::string, bool, std::string>;

kg::Triple triple_of(const PyTriple& t) {
  const auto& [s, p, o, is_literal, datatype] = t;
  return {s, p, is_literal ? kg::Term::literal(o, datatype) : kg::Term::iri(o)};
}

PyTriple py_triple(const kg::Triple& t) {
  return {t.subject, t.predicate, t.object.value, t.object.kind == kg::Term::Kind::Literal, t.object.datatype};
}

py::dict term_dict(const vocab::TermRecord& t) {
  py::dict d;
  d["iri"] = t.iri;
  d["kind"] = std::string(vocab::to_string(t.kind));
  d["label"] = t.label;
  d["comment"] = t.comment;
  d["domain_includes"] = t.domain_includes;
  d["range_includes"] = t.range_includes;
  d["super_types"] = t.super_types;
  d["status"] = std::string(vocab::to_string(t.status));
  return d;
}

pipeline::PipelineConfig config_of(const std::string& config_path, const std::string& out) {
  auto c = config_path.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(config_path);
  if (!out.empty()) c.out = out;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Schema.org mapping core";

  static py::exception<Error> error_type(m, "SchemamapError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object args = py::make_tuple(e.code(), e.what());
      PyErr_SetObject(error_type.ptr(), args.ptr());
    }
  });

  m.def("aggregate_confidence", &aggregate, py::arg("items"),
        "Aggregate HIGH/MEDIUM/LOW labels into one class.");

  m.def(
      "baseline_embed",
      [](const std::string& text, std::size_t dims) { return embed::baseline_hash_embed(text, dims).values; },
      py::arg("text"), py::arg("dims") = embed::kDefaultBaselineDims);
  m.def(
      "cosine",
      [](const std::vector<float>& u, const std::vector<float>& v) { return embed::cosine(u, v); }, py::arg("u"),
      py::arg("v"));
  m.def(
      "baseline_fingerprint", [](std::size_t dims) { return embed::make_embedder({embed::Backend::Baseline, dims})->fingerprint(); },
      py::arg("dims") = embed::kDefaultBaselineDims);

  py::class_<vocab::Vocabulary>(m, "Vocabulary")
      .def("__len__", &vocab::Vocabulary::size)
      .def(
          "find",
          [](const vocab::Vocabulary& v, const std::string& iri) -> py::object {
            const auto* t = v.find(iri);
            return t ? py::object(term_dict(*t)) : py::object(py::none());
          },
          py::arg("iri"))
      .def("iris", [](const vocab::Vocabulary& v) {
        std::vector<std::string> out;
        for (const auto& t : v.terms()) out.push_back(t.iri);
        return out;
      });
  m.def("load_vocabulary", &vocab::load_vocabulary, py::arg("path"));

  m.def(
      "request_digest",
      [](const std::vector<std::pair<std::string, std::string>>& messages, const std::string& response_format) {
        chat::ChatRequest r;
        for (const auto& [role, content] : messages) r.messages.push_back({role, content});
        r.response_format = nlohmann::json::parse(response_format);
        return chat::request_digest(r);
      },
      py::arg("messages"), py::arg("response_format_json"));

  m.def("format_percent", &eval::format_percent, py::arg("correct"), py::arg("total"));

  m.def(
      "serialize_ntriples",
      [](const std::vector<PyTriple>& triples) {
        kg::TripleSet ts;
        for (const auto& t : triples) ts.push_back(triple_of(t));
        return kg::serialize_ntriples(std::move(ts));
      },
      py::arg("triples"), "Triples are (subject, predicate, object, is_literal, datatype).");
  m.def(
      "parse_ntriples",
      [](const std::string& text) {
        std::vector<PyTriple> out;
        for (const auto& t : kg::parse_ntriples(text)) out.push_back(py_triple(t));
        return out;
      },
      py::arg("text"));

  m.def(
      "profile_json",
      [](const std::string& db_path, std::size_t sample_rows) {
        pipeline::PipelineConfig c;
        c.sample_rows = sample_rows;
        auto out = nlohmann::json::array();
        for (const auto& p : pipeline::profile(c, db_path)) out.push_back(pipeline::profile_to_json(p));
        return out.dump();
      },
      py::arg("db_path"), py::arg("sample_rows") = ingest::kDefaultSampleRows);

  m.def(
      "run_map",
      [](const std::string& config_path, const std::string& db_path, const std::string& out) {
        auto r = pipeline::run_map(config_of(config_path, out), db_path);
        return r.report.dump();
      },
      py::arg("config_path"), py::arg("db_path"), py::arg("out") = "",
      "Run map with a JSON config; returns the report as JSON text.");
  m.def(
      "run_eval",
      [](const std::string& config_path, const std::string& db_path, const std::string& out) {
        auto r = pipeline::run_eval(config_of(config_path, out), db_path);
        return py::make_tuple(r.text, eval::report_to_json(r.report).dump());
      },
      py::arg("config_path"), py::arg("db_path"), py::arg("out") = "",
      "Score the saved mapping; returns (rendered tables, report JSON text).");
}
