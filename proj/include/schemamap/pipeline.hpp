#pragma once
// Configuration and end-to-end commands shared by the CLI, the Python module
// and the acceptance runner.
//
// Config files are JSON (docs/schemas/config.schema.json); relative paths in
// a file resolve against the file's directory. Secrets never live in config:
// only the names of the environment variables that hold them.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "schemamap/agents.hpp"
#include "schemamap/chat.hpp"
#include "schemamap/embed.hpp"
#include "schemamap/eval.hpp"
#include "schemamap/ingest.hpp"
#include "schemamap/kgbuild.hpp"
#include "schemamap/vocab.hpp"
#include "schemamap/vstore.hpp"

namespace schemamap::pipeline {

enum class BackendKind { Live, Replay, Scripted };
std::string_view to_string(BackendKind kind);
std::optional<BackendKind> parse_backend_kind(std::string_view text);

struct BackendConfig {
  BackendKind kind = BackendKind::Replay;
  std::string transcript;  // Replay
  std::string script;      // Scripted: {"responses": [...]}
  std::string endpoint;    // Live: full chat-completions URL
  std::string model;
  std::string auth_env = "OPENAI_API_KEY";
};

struct PipelineConfig {
  std::string vocabulary;
  std::string index;
  embed::EmbedderConfig embedder;
  BackendConfig backend;
  std::size_t sample_rows = ingest::kDefaultSampleRows;
  std::size_t k_class = agents::kDefaultClassCandidates;
  std::size_t k_prop = agents::kDefaultPropertyCandidates;
  int attempts = agents::kDefaultAttempts;
  std::size_t concurrency = 1;
  std::string base_iri;  // empty: http://example.org/data/<db_id>/
  std::string out = ".";
  std::string annotations;
  std::string gold_dir = "eval";
  std::string record;  // write a replay transcript here
  bool materialize = false;
  std::uint64_t seed = 0;
};

// Throws ConfigInvalid on unknown keys, wrong types or out-of-range values.
PipelineConfig parse_config(std::string_view document, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::string& path);
nlohmann::json config_to_json(const PipelineConfig& config);

// Range checks (K >= 0, budgets >= 1, ...). Throws ConfigInvalid.
void validate(const PipelineConfig& config);

std::string db_id_of(const std::string& db_path);
std::string base_iri_for(const PipelineConfig& config, const std::string& db_id);
std::string mapping_path(const PipelineConfig& config, const std::string& db_id);
std::string report_path(const PipelineConfig& config, const std::string& db_id);
std::string ntriples_path(const PipelineConfig& config, const std::string& db_id);

// Builds the index from config.vocabulary and writes it to config.index.
vstore::VectorIndex build_index(const PipelineConfig& config);

nlohmann::json profile_to_json(const ingest::TableProfile& profile);
std::vector<ingest::TableProfile> profile(const PipelineConfig& config, const std::string& db_path);

std::unique_ptr<chat::ChatBackend> make_backend(const BackendConfig& config);

struct MapResult {
  std::string db_id;
  agents::MapRun run;
  kg::SchemaMapping mapping;
  std::optional<kg::MaterializeReport> materialized;
  nlohmann::json report;
  std::vector<std::string> written;  // paths, in write order
};

// map_database + assemble; writes <out>/<db_id>.mapping and .report, plus
// .nt with config.materialize and the transcript with config.record. On a
// failed or cancelled run the .report records the partial state and the
// MapRunError propagates.
MapResult run_map(const PipelineConfig& config, const std::string& db_path,
                  const std::atomic<bool>* cancel = nullptr);

struct MaterializeResult {
  std::string db_id;
  kg::TripleSet triples;
  kg::MaterializeReport report;
  std::string path;
};

// From <out>/<db_id>.mapping; writes .nt and merges counts into .report.
MaterializeResult run_materialize(const PipelineConfig& config, const std::string& db_path);

struct EvalResult {
  eval::EvalReport report;
  std::string text;  // render_report output
  std::string path;  // <out>/<db_id>.eval.json
};

// Gold from <gold_dir>/<db_id>.gold, mapping from <out>/<db_id>.mapping,
// seconds from <out>/<db_id>.report when present.
EvalResult run_eval(const PipelineConfig& config, const std::string& db_path);

}  // namespace schemamap::pipeline
