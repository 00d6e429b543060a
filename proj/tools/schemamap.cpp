// schemamap: map relational databases to Schema.org and materialize them.
//
// Exit status: 0 on success, 2 on ConfigInvalid (including bad flags), 1 on
// any other error. Errors print one line to stderr: "ERROR <Code>: <message>".

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "schemamap/errors.hpp"
#include "schemamap/pipeline.hpp"

namespace {

using namespace schemamap;
using pipeline::PipelineConfig;

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> db;
  std::optional<std::string> vocab;
  std::optional<std::string> index;
  std::optional<long long> embed_dims;
  std::optional<long long> k_rows;
  std::optional<long long> k_class;
  std::optional<long long> k_prop;
  std::optional<long long> attempts;
  std::optional<long long> concurrency;
  std::optional<std::string> backend;
  std::optional<std::string> transcript;
  std::optional<std::string> script;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  std::optional<std::string> auth_env;
  std::optional<std::string> record;
  bool materialize = false;
  std::optional<std::string> annotations;
  std::optional<std::string> gold_dir;
  std::optional<std::string> base_iri;
  std::optional<std::string> out;
  std::optional<long long> seed;
  std::optional<std::string> positional_db;
};

void add_flags(CLI::App* cmd, Flags& f, bool takes_db) {
  if (takes_db) cmd->add_option("database", f.positional_db, "SQLite database file");
  cmd->add_option("--config", f.config, "JSON config file; flags override it");
  if (takes_db) cmd->add_option("--db", f.db, "SQLite database file (same as the positional argument)");
  cmd->add_option("--vocab", f.vocab, "Schema.org JSON-LD release");
  cmd->add_option("--index", f.index, "Vector index file");
  cmd->add_option("--embed-dims", f.embed_dims, "Baseline embedding dimensions (>= 16)");
  cmd->add_option("--k-rows", f.k_rows, "Sample rows per table shown to the agents (>= 0)");
  cmd->add_option("--k-class", f.k_class, "Class candidates per table (>= 1)");
  cmd->add_option("--k-prop", f.k_prop, "Property candidates per column (>= 1)");
  cmd->add_option("--attempts", f.attempts, "Attempts per agent call, retries included (>= 1)");
  cmd->add_option("--concurrency", f.concurrency, "Tables mapped in parallel (>= 1)");
  cmd->add_option("--backend", f.backend, "Chat backend")->check(CLI::IsMember({"live", "replay", "scripted"}));
  cmd->add_option("--transcript", f.transcript, "Replay transcript");
  cmd->add_option("--script", f.script, "Scripted responses file");
  cmd->add_option("--endpoint", f.endpoint, "Live chat-completions URL");
  cmd->add_option("--model", f.model, "Live model name");
  cmd->add_option("--auth-env", f.auth_env, "Environment variable holding the live API token");
  cmd->add_option("--record", f.record, "Write a replay transcript of this run");
  cmd->add_flag("--materialize", f.materialize, "Also write <db_id>.nt");
  cmd->add_option("--annotations", f.annotations, "Table and column descriptions (JSON)");
  cmd->add_option("--gold-dir", f.gold_dir, "Directory holding <db_id>.gold files");
  cmd->add_option("--base-iri", f.base_iri, "Subject IRI prefix for materialized rows");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--seed", f.seed, "Seed for any randomness (the baseline and replay paths use none)");
}

[[noreturn]] void config_error(const std::string& why) { throw Error(errc::kConfigInvalid, why); }

std::size_t at_least(long long v, long long min, const char* flag) {
  if (v < min) config_error(std::string(flag) + " must be >= " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

PipelineConfig layered(const Flags& f) {
  PipelineConfig c = f.config ? pipeline::load_config(*f.config) : PipelineConfig{};
  if (f.vocab) c.vocabulary = *f.vocab;
  if (f.index) c.index = *f.index;
  if (f.embed_dims) c.embedder.dims = at_least(*f.embed_dims, 0, "--embed-dims");
  if (f.k_rows) c.sample_rows = at_least(*f.k_rows, 0, "--k-rows");
  if (f.k_class) c.k_class = at_least(*f.k_class, 1, "--k-class");
  if (f.k_prop) c.k_prop = at_least(*f.k_prop, 1, "--k-prop");
  if (f.attempts) c.attempts = static_cast<int>(at_least(*f.attempts, 1, "--attempts"));
  if (f.concurrency) c.concurrency = at_least(*f.concurrency, 1, "--concurrency");
  if (f.backend) c.backend.kind = *pipeline::parse_backend_kind(*f.backend);
  if (f.transcript) c.backend.transcript = *f.transcript;
  if (f.script) c.backend.script = *f.script;
  if (f.endpoint) c.backend.endpoint = *f.endpoint;
  if (f.model) c.backend.model = *f.model;
  if (f.auth_env) c.backend.auth_env = *f.auth_env;
  if (f.record) c.record = *f.record;
  if (f.materialize) c.materialize = true;
  if (f.annotations) c.annotations = *f.annotations;
  if (f.gold_dir) c.gold_dir = *f.gold_dir;
  if (f.base_iri) c.base_iri = *f.base_iri;
  if (f.out) c.out = *f.out;
  if (f.seed) c.seed = at_least(*f.seed, 0, "--seed");
  pipeline::validate(c);
  return c;
}

std::string db_path(const Flags& f) {
  if (f.positional_db && f.db && *f.positional_db != *f.db) config_error("conflicting database paths");
  auto p = f.positional_db ? f.positional_db : f.db;
  if (!p) config_error("no database given");
  if (!std::filesystem::is_regular_file(*p)) config_error("database not found: " + *p);
  return *p;
}

void print_map(const pipeline::MapResult& r) {
  for (const auto& p : r.written) std::cout << "wrote " << p << "\n";
  std::cout << "tables " << r.run.timing.tables << ", columns " << r.run.timing.columns << ", final confidence "
            << (r.mapping.final_confidence ? std::string(to_string(*r.mapping.final_confidence)) : "NOT_APPLICABLE")
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Map relational database schemas to Schema.org and materialize them as RDF.", "schemamap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "schemamap 0.1.0");

  Flags f;
  auto* build_index = app.add_subcommand("build-index", "Embed the vocabulary and write the vector index");
  auto* profile = app.add_subcommand("profile", "Print table profiles as JSON");
  auto* map = app.add_subcommand("map", "Run the agents and write <db_id>.mapping and <db_id>.report");
  auto* materialize = app.add_subcommand("materialize", "Write <db_id>.nt from a saved mapping");
  auto* eval = app.add_subcommand("eval", "Score <db_id>.mapping against <gold-dir>/<db_id>.gold");
  auto* record = app.add_subcommand("record", "Run map and save a replay transcript");
  add_flags(build_index, f, false);
  for (auto* cmd : {profile, map, materialize, eval, record}) add_flags(cmd, f, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR " << errc::kConfigInvalid << ": " << e.what() << "\n";
    return 2;
  }

  std::signal(SIGINT, on_sigint);
  try {
    auto config = layered(f);
    if (build_index->parsed()) {
      if (config.index.empty()) config.index = (std::filesystem::path(config.out) / "schemaorg.index").string();
      auto index = pipeline::build_index(config);
      std::cout << "wrote " << config.index << " (" << index.size() << " entries, " << index.fingerprint() << ")\n";
    } else if (profile->parsed()) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& p : pipeline::profile(config, db_path(f))) out.push_back(pipeline::profile_to_json(p));
      std::cout << out.dump(2) << "\n";
    } else if (map->parsed()) {
      print_map(pipeline::run_map(config, db_path(f), &g_cancel));
    } else if (record->parsed()) {
      auto db = db_path(f);
      if (config.backend.kind == pipeline::BackendKind::Replay) {
        if (f.backend) config_error("record needs a live or scripted backend");
        config.backend.kind = pipeline::BackendKind::Live;
      }
      if (config.record.empty()) {
        config.record =
            (std::filesystem::path(config.out) / (pipeline::db_id_of(db) + ".transcript.json")).string();
      }
      print_map(pipeline::run_map(config, db, &g_cancel));
    } else if (materialize->parsed()) {
      auto r = pipeline::run_materialize(config, db_path(f));
      std::cout << "wrote " << r.path << " (" << r.report.triples << " triples, " << r.report.dangling_fk_values
                << " dangling FK values, " << r.report.unmapped_columns << " unmapped columns)\n";
    } else if (eval->parsed()) {
      auto r = pipeline::run_eval(config, db_path(f));
      std::cout << r.text;
      std::cout << "wrote " << r.path << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "ERROR " << e.code() << ": " << e.what() << "\n";
    return e.code() == errc::kConfigInvalid ? 2 : 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "ERROR " << errc::kIoError << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ERROR Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
