#include "schemamap/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "schemamap/errors.hpp"

namespace schemamap::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& why) { throw Error(errc::kConfigInvalid, why); }

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) invalid(where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.contains(k)) invalid("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
T get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    invalid("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

std::size_t non_negative(const json& obj, const char* key, const std::string& where) {
  auto v = get<std::int64_t>(obj, key, where);
  if (v < 0) invalid("'" + std::string(key) + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

std::string read_text(const std::string& path, const char* code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(code, "cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Write to a sibling temp file, then rename over the target.
void write_text(const std::string& path, const std::string& text) {
  auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(errc::kIoError, "cannot write " + path);
    out << text;
    if (!out) throw Error(errc::kIoError, "short write: " + path);
  }
  fs::rename(tmp, path);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) invalid(what + " is not set");
  if (!fs::is_regular_file(path)) invalid(what + " not found: " + path);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::Live: return "live";
    case BackendKind::Replay: return "replay";
    case BackendKind::Scripted: return "scripted";
  }
  return "?";
}

std::optional<BackendKind> parse_backend_kind(std::string_view text) {
  if (text == "live") return BackendKind::Live;
  if (text == "replay") return BackendKind::Replay;
  if (text == "scripted") return BackendKind::Scripted;
  return std::nullopt;
}

PipelineConfig parse_config(std::string_view document, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    invalid(std::string("config is not JSON: ") + e.what());
  }
  check_keys(doc,
             {"vocabulary", "index", "embedder", "backend", "sample_rows", "k_class", "k_prop", "attempts",
              "concurrency", "base_iri", "out", "annotations", "gold_dir", "record", "materialize", "seed"},
             "config");
  PipelineConfig c;
  const std::string where = "config";
  auto path = [&](const char* key, std::string& field) {
    if (doc.contains(key)) field = resolve(base_dir, get<std::string>(doc, key, where));
  };
  path("vocabulary", c.vocabulary);
  path("index", c.index);
  path("out", c.out);
  path("annotations", c.annotations);
  path("gold_dir", c.gold_dir);
  path("record", c.record);
  if (doc.contains("base_iri")) c.base_iri = get<std::string>(doc, "base_iri", where);
  if (doc.contains("sample_rows")) c.sample_rows = non_negative(doc, "sample_rows", where);
  if (doc.contains("k_class")) c.k_class = non_negative(doc, "k_class", where);
  if (doc.contains("k_prop")) c.k_prop = non_negative(doc, "k_prop", where);
  if (doc.contains("concurrency")) c.concurrency = non_negative(doc, "concurrency", where);
  if (doc.contains("attempts")) c.attempts = get<int>(doc, "attempts", where);
  if (doc.contains("materialize")) c.materialize = get<bool>(doc, "materialize", where);
  if (doc.contains("seed")) c.seed = non_negative(doc, "seed", where);

  if (doc.contains("embedder")) {
    const auto& e = doc["embedder"];
    const std::string ew = "embedder";
    check_keys(e, {"backend", "dims", "endpoint", "model", "auth_env"}, ew);
    if (e.contains("backend")) {
      auto b = get<std::string>(e, "backend", ew);
      if (b == "baseline") {
        c.embedder.backend = embed::Backend::Baseline;
      } else if (b == "remote") {
        c.embedder.backend = embed::Backend::Remote;
      } else {
        invalid("embedder backend must be baseline or remote, not " + b);
      }
    }
    if (e.contains("dims")) c.embedder.dims = non_negative(e, "dims", ew);
    if (e.contains("endpoint")) c.embedder.endpoint = get<std::string>(e, "endpoint", ew);
    if (e.contains("model")) c.embedder.model = get<std::string>(e, "model", ew);
    if (e.contains("auth_env")) c.embedder.auth_env = get<std::string>(e, "auth_env", ew);
  }
  if (doc.contains("backend")) {
    const auto& b = doc["backend"];
    const std::string bw = "backend";
    check_keys(b, {"kind", "transcript", "script", "endpoint", "model", "auth_env"}, bw);
    if (b.contains("kind")) {
      auto k = parse_backend_kind(get<std::string>(b, "kind", bw));
      if (!k) invalid("backend kind must be live, replay or scripted");
      c.backend.kind = *k;
    }
    if (b.contains("transcript")) c.backend.transcript = resolve(base_dir, get<std::string>(b, "transcript", bw));
    if (b.contains("script")) c.backend.script = resolve(base_dir, get<std::string>(b, "script", bw));
    if (b.contains("endpoint")) c.backend.endpoint = get<std::string>(b, "endpoint", bw);
    if (b.contains("model")) c.backend.model = get<std::string>(b, "model", bw);
    if (b.contains("auth_env")) c.backend.auth_env = get<std::string>(b, "auth_env", bw);
  }
  validate(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  if (!fs::is_regular_file(path)) invalid("config file not found: " + path);
  return parse_config(read_text(path, errc::kConfigInvalid), fs::path(path).parent_path());
}

json config_to_json(const PipelineConfig& c) {
  return {{"vocabulary", c.vocabulary},
          {"index", c.index},
          {"embedder",
           {{"backend", c.embedder.backend == embed::Backend::Baseline ? "baseline" : "remote"},
            {"dims", c.embedder.dims},
            {"endpoint", c.embedder.endpoint},
            {"model", c.embedder.model},
            {"auth_env", c.embedder.auth_env}}},
          {"backend",
           {{"kind", std::string(to_string(c.backend.kind))},
            {"transcript", c.backend.transcript},
            {"script", c.backend.script},
            {"endpoint", c.backend.endpoint},
            {"model", c.backend.model},
            {"auth_env", c.backend.auth_env}}},
          {"sample_rows", c.sample_rows},
          {"k_class", c.k_class},
          {"k_prop", c.k_prop},
          {"attempts", c.attempts},
          {"concurrency", c.concurrency},
          {"base_iri", c.base_iri},
          {"out", c.out},
          {"annotations", c.annotations},
          {"gold_dir", c.gold_dir},
          {"record", c.record},
          {"materialize", c.materialize},
          {"seed", c.seed}};
}

void validate(const PipelineConfig& c) {
  if (c.k_class < 1) invalid("k_class must be >= 1");
  if (c.k_prop < 1) invalid("k_prop must be >= 1");
  if (c.attempts < 1) invalid("attempts (retry budget) must be >= 1");
  if (c.concurrency < 1) invalid("concurrency must be >= 1");
  try {
    embed::validate(c.embedder);
  } catch (const Error& e) {
    invalid(std::string("embedder: ") + e.what());
  }
  if (!c.base_iri.empty() && c.base_iri.find("://") == std::string::npos) {
    invalid("base_iri must be absolute: " + c.base_iri);
  }
}

std::string db_id_of(const std::string& db_path) { return fs::path(db_path).stem().string(); }

std::string base_iri_for(const PipelineConfig& c, const std::string& db_id) {
  if (!c.base_iri.empty()) return c.base_iri;
  return "http://example.org/data/" + kg::percent_encode(db_id) + "/";
}

std::string mapping_path(const PipelineConfig& c, const std::string& db_id) {
  return (fs::path(c.out) / (db_id + ".mapping")).string();
}
std::string report_path(const PipelineConfig& c, const std::string& db_id) {
  return (fs::path(c.out) / (db_id + ".report")).string();
}
std::string ntriples_path(const PipelineConfig& c, const std::string& db_id) {
  return (fs::path(c.out) / (db_id + ".nt")).string();
}

vstore::VectorIndex build_index(const PipelineConfig& c) {
  validate(c);
  require_file(c.vocabulary, "vocabulary");
  if (c.index.empty()) invalid("index output path is not set");
  auto vocabulary = vocab::load_vocabulary(c.vocabulary);
  auto index = vstore::index_build(vocabulary, c.embedder);
  auto parent = fs::path(c.index).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  vstore::index_save(index, c.index);
  return index;
}

json profile_to_json(const ingest::TableProfile& p) {
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  json columns = json::array();
  for (const auto& c : p.columns) {
    json top = json::array();
    for (const auto& t : c.stats.top_values) top.push_back({{"value", t.value}, {"frequency", t.frequency}});
    columns.push_back({{"name", c.name},
                       {"declared_type", c.declared_type},
                       {"inferred_type", std::string(ingest::to_string(c.inferred_type))},
                       {"description", opt(c.description)},
                       {"stats",
                        {{"row_count", c.stats.row_count},
                         {"null_count", c.stats.null_count},
                         {"distinct_count", c.stats.distinct_count},
                         {"min", opt(c.stats.min)},
                         {"max", opt(c.stats.max)},
                         {"mean", opt(c.stats.mean)},
                         {"avg_length", opt(c.stats.avg_length)},
                         {"top_values", top}}}});
  }
  json fks = json::array();
  for (const auto& fk : p.declared_foreign_keys) {
    fks.push_back({{"from_table", fk.from_table}, {"from_column", fk.from_column}, {"to_table", fk.to_table},
                   {"to_column", fk.to_column}});
  }
  return {{"table", p.name},
          {"row_count", p.row_count},
          {"description", opt(p.description)},
          {"declared_primary_key", p.declared_primary_key},
          {"declared_foreign_keys", fks},
          {"columns", columns},
          {"sample_rows", p.sample_rows}};
}

std::vector<ingest::TableProfile> profile(const PipelineConfig& c, const std::string& db_path) {
  validate(c);
  std::optional<ingest::Annotations> annotations;
  if (!c.annotations.empty()) {
    require_file(c.annotations, "annotations");
    annotations = ingest::load_annotations(c.annotations);
  }
  ingest::Database db(db_path);
  return ingest::profile_database(db, c.sample_rows, annotations ? &*annotations : nullptr);
}

std::unique_ptr<chat::ChatBackend> make_backend(const BackendConfig& b) {
  switch (b.kind) {
    case BackendKind::Replay:
      require_file(b.transcript, "replay transcript");
      return chat::ReplayBackend::from_file(b.transcript);
    case BackendKind::Scripted:
      require_file(b.script, "backend script");
      return chat::ScriptedBackend::from_file(b.script);
    case BackendKind::Live: {
      if (b.endpoint.empty()) invalid("live backend needs an endpoint");
      if (b.model.empty()) invalid("live backend needs a model");
      chat::LiveConfig live;
      live.endpoint = b.endpoint;
      live.model = b.model;
      live.auth_env = b.auth_env;
      return std::make_unique<chat::LiveBackend>(live);
    }
  }
  invalid("unknown backend kind");
}

namespace {

json timing_json(const agents::TimingRecord& t) {
  return {{"tables", t.tables},
          {"columns", t.columns},
          {"profile_seconds", t.profile_seconds},
          {"retrieve_seconds", t.retrieve_seconds},
          {"mapping_seconds", t.mapping_seconds},
          {"relation_seconds", t.relation_seconds},
          {"validator_seconds", t.validator_seconds},
          {"total_seconds", t.total_seconds}};
}

json materialize_json(const kg::MaterializeReport& r) {
  json tables = json::object();
  for (const auto& [name, t] : r.tables) {
    tables[name] = {{"rows", t.rows},
                    {"type_triples", t.type_triples},
                    {"literal_triples", t.literal_triples},
                    {"link_triples", t.link_triples},
                    {"dangling_fk_values", t.dangling_fk_values},
                    {"surrogate_subjects", t.surrogate_subjects}};
  }
  return {{"triples", r.triples},
          {"dangling_fk_values", r.dangling_fk_values},
          {"unmapped_columns", r.unmapped_columns},
          {"tables", tables}};
}

json run_json(const agents::MapRun& run, const std::string& backend_fp, const PipelineConfig& c) {
  std::size_t retries = 0;
  for (const auto& [t, n] : run.mapping_retries) retries += static_cast<std::size_t>(n);
  std::size_t mapped = 0;
  std::size_t columns = 0;
  for (const auto& p : run.validated_proposals.empty() ? run.proposals : run.validated_proposals) {
    for (const auto& col : p.columns) {
      ++columns;
      if (col.property_iri) ++mapped;
    }
  }
  return {{"format", "schemamap-report/1"},
          {"db_id", run.db_id},
          {"completed_stage", run.completed_stage},
          {"backend", backend_fp},
          {"seed", c.seed},
          {"final_confidence", run.final_confidence ? json(std::string(to_string(*run.final_confidence)))
                                                    : json("NOT_APPLICABLE")},
          {"counts",
           {{"tables", run.profiles.size()},
            {"proposals", run.proposals.size()},
            {"mapped_columns", mapped},
            {"unmapped_columns", columns - mapped},
            {"fk_links", run.validated_relation ? run.validated_relation->foreign_keys.size() : 0},
            {"dropped_edges", run.relation ? run.relation->dropped_edges.size() : 0},
            {"edits", run.edits ? run.edits->edits.size() : 0},
            {"warnings", run.warnings.size()}}},
          {"retries",
           {{"mapping", retries}, {"relation", run.relation_retries}, {"validator", run.validator_retries}}},
          {"timing", timing_json(run.timing)}};
}

}  // namespace

MapResult run_map(const PipelineConfig& c, const std::string& db_path, const std::atomic<bool>* cancel) {
  validate(c);
  require_file(c.vocabulary, "vocabulary");
  if (!c.index.empty()) require_file(c.index, "index");
  std::optional<ingest::Annotations> annotations;
  if (!c.annotations.empty()) {
    require_file(c.annotations, "annotations");
    annotations = ingest::load_annotations(c.annotations);
  }
  if (!c.record.empty() && c.backend.kind == BackendKind::Replay) {
    invalid("recording needs a live or scripted backend, not replay");
  }
  auto inner = make_backend(c.backend);
  std::optional<chat::RecordingBackend> recorder;
  chat::ChatBackend* backend = inner.get();
  if (!c.record.empty()) backend = &recorder.emplace(*inner);

  MapResult result;
  result.db_id = db_id_of(db_path);
  ingest::Database db(db_path);
  auto vocabulary = vocab::load_vocabulary(c.vocabulary);
  auto embedder = embed::make_embedder(c.embedder);
  auto index = c.index.empty() ? vstore::index_build(vocabulary, *embedder)
                               : vstore::index_load(c.index, embedder->fingerprint());

  agents::MapConfig mc;
  mc.db_id = result.db_id;
  mc.sample_rows = c.sample_rows;
  mc.k_class = c.k_class;
  mc.k_prop = c.k_prop;
  mc.attempts = c.attempts;
  mc.max_concurrent_tables = c.concurrency;
  mc.annotations = annotations ? &*annotations : nullptr;
  mc.cancel = cancel;

  const auto rpath = report_path(c, result.db_id);
  try {
    result.run = agents::map_database(agents::AgentBackends::all(*backend), index, *embedder, db, mc);
  } catch (const agents::MapRunError& e) {
    auto report = run_json(e.partial(), backend->fingerprint(), c);
    report["status"] = "failed";
    report["error"] = {{"code", e.code()}, {"stage", e.stage()}, {"message", e.what()}};
    write_text(rpath, report.dump(2) + "\n");
    if (recorder) recorder->save(c.record);
    throw;
  }

  result.mapping = kg::assemble_mapping(result.run, vocabulary, index.fingerprint());
  const auto mpath = mapping_path(c, result.db_id);
  write_text(mpath, kg::serialize_mapping(result.mapping));
  result.written.push_back(mpath);

  result.report = run_json(result.run, backend->fingerprint(), c);
  result.report["status"] = "complete";
  if (c.materialize) {
    auto start = std::chrono::steady_clock::now();
    kg::MaterializeReport mr;
    auto triples = kg::materialize(db, result.mapping, base_iri_for(c, result.db_id), &mr);
    const auto npath = ntriples_path(c, result.db_id);
    write_text(npath, kg::serialize_ntriples(std::move(triples)));
    result.written.push_back(npath);
    result.report["materialize"] = materialize_json(mr);
    result.report["materialize"]["seconds"] = seconds_since(start);
    result.materialized = mr;
  }
  write_text(rpath, result.report.dump(2) + "\n");
  result.written.push_back(rpath);
  if (recorder) {
    auto parent = fs::path(c.record).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    recorder->save(c.record);
    result.written.push_back(c.record);
  }
  return result;
}

MaterializeResult run_materialize(const PipelineConfig& c, const std::string& db_path) {
  validate(c);
  MaterializeResult result;
  result.db_id = db_id_of(db_path);
  const auto mpath = mapping_path(c, result.db_id);
  if (!fs::is_regular_file(mpath)) invalid("no mapping at " + mpath + "; run map first");
  auto mapping = kg::load_mapping(mpath);
  if (mapping.db_id != result.db_id) {
    throw Error(errc::kInconsistentInputs, "mapping is for '" + mapping.db_id + "', not '" + result.db_id + "'");
  }
  ingest::Database db(db_path);
  result.triples = kg::materialize(db, mapping, base_iri_for(c, result.db_id), &result.report);
  result.path = ntriples_path(c, result.db_id);
  write_text(result.path, kg::serialize_ntriples(result.triples));

  const auto rpath = report_path(c, result.db_id);
  json report = json::object();
  if (fs::is_regular_file(rpath)) {
    try {
      report = json::parse(read_text(rpath, errc::kIoError));
    } catch (const json::parse_error&) {
      report = json::object();
    }
  }
  if (!report.contains("format")) {
    report["format"] = "schemamap-report/1";
    report["db_id"] = result.db_id;
  }
  report["materialize"] = materialize_json(result.report);
  write_text(rpath, report.dump(2) + "\n");
  return result;
}

EvalResult run_eval(const PipelineConfig& c, const std::string& db_path) {
  validate(c);
  const auto db_id = db_id_of(db_path);
  auto gold = eval::load_gold(c.gold_dir, db_id);
  ingest::Database db(db_path);
  eval::check_gold_against(gold, db);
  const auto mpath = mapping_path(c, db_id);
  if (!fs::is_regular_file(mpath)) invalid("no mapping at " + mpath + "; run map first");
  auto mapping = kg::load_mapping(mpath);

  std::optional<double> seconds;
  if (auto rpath = report_path(c, db_id); fs::is_regular_file(rpath)) {
    try {
      auto report = json::parse(read_text(rpath, errc::kIoError));
      if (report.contains("timing")) seconds = report["timing"].at("total_seconds").get<double>();
    } catch (const json::exception&) {
    }
  }
  EvalResult result;
  result.report = eval::compare(mapping, gold, seconds);
  result.text = eval::render_report({result.report});
  result.path = (fs::path(c.out) / (db_id + ".eval.json")).string();
  write_text(result.path, eval::report_to_json(result.report).dump(2) + "\n");
  return result;
}

}  // namespace schemamap::pipeline
