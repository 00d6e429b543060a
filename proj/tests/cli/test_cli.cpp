#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "../unit/fixtures.hpp"
#include "schemamap/errors.hpp"
#include "schemamap/pipeline.hpp"

using namespace schemamap;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("schemamap-cli-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome run(const std::string& args) {
  auto err_file = scratch("stderr") / "err.txt";
  auto cmd = quote(SCHEMAMAP_CLI) + " " + args + " 2>" + quote(err_file.string());
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  int raw = ::pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  o.err = testing::read_file(err_file.string());
  return o;
}

std::string src(const std::string& rel) { return quote(testing::source_path(rel)); }

const std::string kDb = "fixtures/spider/database/shop/shop.sqlite";
const std::string kVocab = "fixtures/vocab/schemaorg-current-https-12.0.jsonld";

std::string replay_args(const fs::path& out) {
  return "--config " + src("fixtures/shop.replay.json") + " --out " + quote(out.string());
}

}  // namespace

TEST_CASE("help texts match the goldens and list every flag") {
  const std::vector<std::string> flags{"--config", "--vocab", "--index", "--k-rows", "--k-class", "--k-prop",
                                       "--backend", "--transcript", "--record", "--materialize", "--out", "--seed",
                                       "--attempts", "--concurrency", "--annotations", "--gold-dir", "--base-iri",
                                       "--embed-dims", "--script", "--endpoint", "--model", "--auth-env"};
  auto top = run("--help");
  CHECK(top.status == 0);
  CHECK(top.out == testing::read_file(testing::source_path("fixtures/golden/help/schemamap.txt")));
  for (std::string cmd : {"build-index", "profile", "map", "materialize", "eval", "record"}) {
    CAPTURE(cmd);
    auto h = run(cmd + " --help");
    CHECK(h.status == 0);
    CHECK(h.out == testing::read_file(testing::source_path("fixtures/golden/help/" + cmd + ".txt")));
    for (const auto& flag : flags) {
      CAPTURE(flag);
      CHECK(h.out.find(flag + " ") != std::string::npos);
    }
    if (cmd != "build-index") CHECK(h.out.find("--db ") != std::string::npos);
  }
}

TEST_CASE("map with the replay config reproduces the golden bundle") {
  const auto db = testing::source_path(kDb);
  const auto before = testing::read_file(db);
  for (int i = 0; i < 2; ++i) {
    auto out = scratch("map" + std::to_string(i));
    auto r = run("map " + src(kDb) + " " + replay_args(out));
    REQUIRE_MESSAGE(r.status == 0, r.err);
    CHECK(r.err.empty());
    CHECK(testing::read_file((out / "shop.mapping").string()) ==
          testing::read_file(testing::source_path("fixtures/golden/shop/shop.mapping")));
    CHECK(testing::read_file((out / "shop.nt").string()) ==
          testing::read_file(testing::source_path("fixtures/golden/shop/shop.nt")));
    auto report = json::parse(testing::read_file((out / "shop.report").string()));
    CHECK(report["status"] == "complete");
    CHECK(report["timing"]["tables"] == 3);
    CHECK(report["timing"]["columns"] == 10);
    CHECK(report["materialize"]["dangling_fk_values"] == 1);
    CHECK(report["counts"]["unmapped_columns"] == 4);
  }
  CHECK(testing::read_file(db) == before);
}

TEST_CASE("--db is the same as the positional database") {
  auto out = scratch("dbflag");
  auto r = run("map --db " + src(kDb) + " " + replay_args(out));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(testing::read_file((out / "shop.mapping").string()) ==
        testing::read_file(testing::source_path("fixtures/golden/shop/shop.mapping")));
  auto clash = run("map " + src(kDb) + " --db /elsewhere.sqlite " + replay_args(out));
  CHECK(clash.status == 2);
}

TEST_CASE("materialize and eval after map") {
  auto out = scratch("chain");
  auto m = run("map " + src(kDb) + " " + replay_args(out));
  REQUIRE(m.status == 0);
  fs::remove(out / "shop.nt");
  auto mat = run("materialize " + src(kDb) + " " + replay_args(out));
  REQUIRE_MESSAGE(mat.status == 0, mat.err);
  CHECK(mat.out.find("43 triples, 1 dangling FK values, 4 unmapped columns") != std::string::npos);
  CHECK(testing::read_file((out / "shop.nt").string()) ==
        testing::read_file(testing::source_path("fixtures/golden/shop/shop.nt")));

  auto ev = run("eval " + src(kDb) + " " + replay_args(out));
  REQUIRE_MESSAGE(ev.status == 0, ev.err);
  CHECK(ev.out.find("Overall (%)") != std::string::npos);
  CHECK(ev.out.find("shop            15        73.33") != std::string::npos);
  CHECK(fs::exists(out / "shop.eval.json"));
}

TEST_CASE("eval without a gold file") {
  auto out = scratch("nogold");
  REQUIRE(run("map " + src(kDb) + " " + replay_args(out)).status == 0);
  auto r = run("eval " + src(kDb) + " " + replay_args(out) + " --gold-dir " + quote(out.string()));
  CHECK(r.status == 1);
  CHECK(r.err.starts_with("ERROR GoldNotFound: "));
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("build-index twice gives identical files") {
  auto out = scratch("index");
  auto a = (out / "a.index").string();
  auto b = (out / "b.index").string();
  auto r1 = run("build-index --vocab " + src(kVocab) + " --index " + quote(a));
  auto r2 = run("build-index --vocab " + src(kVocab) + " --index " + quote(b));
  REQUIRE(r1.status == 0);
  REQUIRE(r2.status == 0);
  CHECK(testing::read_file(a) == testing::read_file(b));
  CHECK(r1.out.find("baseline/fnv1a64-word-trigram/v1/dims=512") != std::string::npos);

  SUBCASE("map accepts the index and rejects one from another embedder") {
    auto m = run("map " + src(kDb) + " " + replay_args(out) + " --index " + quote(a));
    CHECK_MESSAGE(m.status == 0, m.err);
    CHECK(testing::read_file((out / "shop.mapping").string()) ==
          testing::read_file(testing::source_path("fixtures/golden/shop/shop.mapping")));
    auto c = (out / "c.index").string();
    REQUIRE(run("build-index --vocab " + src(kVocab) + " --embed-dims 64 --index " + quote(c)).status == 0);
    auto bad = run("map " + src(kDb) + " " + replay_args(out) + " --index " + quote(c));
    CHECK(bad.status == 1);
    CHECK(bad.err.starts_with("ERROR CorruptIndexFile: "));
  }
}

TEST_CASE("profile prints JSON") {
  auto r = run("profile " + src(kDb) + " --k-rows 2 --annotations " + src("fixtures/spider/annotations/shop.json"));
  REQUIRE(r.status == 0);
  auto j = json::parse(r.out);
  REQUIRE(j.size() == 3);
  CHECK(j[0]["table"] == "customers");
  CHECK(j[0]["description"] == "People who registered an account with the store.");
  CHECK(j[0]["sample_rows"].size() == 2);
  CHECK(j[1]["declared_foreign_keys"].size() == 2);
}

TEST_CASE("configuration errors exit with 2") {
  auto out = scratch("config");
  auto expect2 = [](const Outcome& o) {
    CHECK(o.status == 2);
    CHECK(o.err.starts_with("ERROR ConfigInvalid: "));
  };
  expect2(run(""));
  expect2(run("map " + src(kDb) + " " + replay_args(out) + " --k-class 0"));
  expect2(run("map " + src(kDb) + " " + replay_args(out) + " --k-rows -1"));
  expect2(run("map " + src(kDb) + " " + replay_args(out) + " --attempts 0"));
  expect2(run("map " + src(kDb) + " " + replay_args(out) + " --backend psychic"));
  expect2(run("map " + src(kDb) + " --config /no/such/config.json"));
  expect2(run("map /no/such.sqlite " + replay_args(out)));
  expect2(run("map " + src(kDb) + " --out " + quote(out.string())));  // no vocabulary
  expect2(run("record " + src(kDb) + " " + replay_args(out) + " --backend replay"));
  expect2(run("map " + src(kDb) + " " + replay_args(out) + " --transcript /no/such.json"));
  {
    std::ofstream(out / "bad.json") << R"({"k_class": 3, "colour": "blue"})";
    expect2(run("map " + src(kDb) + " --config " + quote((out / "bad.json").string())));
  }
}

TEST_CASE("module errors exit with 1 and keep a partial report") {
  auto out = scratch("partial");
  {
    std::ofstream script(out / "short.json");
    json mapping = json::parse(testing::read_file(testing::source_path("fixtures/transcripts/shop.script.json")));
    auto& responses = mapping["responses"];
    responses.erase(responses.begin() + 4, responses.end());  // no relation or validator replies
    script << mapping.dump();
  }
  auto r = run("map " + src(kDb) + " " + replay_args(out) + " --backend scripted --script " +
               quote((out / "short.json").string()));
  CHECK(r.status == 1);
  CHECK(r.err.starts_with("ERROR BackendUnavailable: "));
  CHECK_FALSE(fs::exists(out / "shop.mapping"));
  auto report = json::parse(testing::read_file((out / "shop.report").string()));
  CHECK(report["status"] == "failed");
  CHECK(report["error"]["stage"] == "relation");
  CHECK(report["completed_stage"] == "mapping");
  CHECK(report["counts"]["proposals"] == 3);

  auto again = run("map " + src(kDb) + " " + replay_args(out) + " --backend scripted --script " +
                   quote((out / "short.json").string()));
  CHECK(again.status == r.status);
  CHECK(again.err == r.err);
}

TEST_CASE("record writes a transcript that replays to the same mapping") {
  auto out = scratch("record");
  auto t = (out / "t.json").string();
  auto r = run("record " + src(kDb) + " " + replay_args(out) + " --backend scripted --script " +
               src("fixtures/transcripts/shop.script.json") + " --record " + quote(t));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(testing::read_file(t) == testing::read_file(testing::source_path("fixtures/transcripts/shop.transcript.json")));
  CHECK(testing::read_file((out / "shop.mapping").string()) ==
        testing::read_file(testing::source_path("fixtures/golden/shop/shop.mapping")));
}

TEST_CASE("a cancelled run reports Aborted with partial results") {
  auto config = pipeline::load_config(testing::source_path("fixtures/shop.replay.json"));
  config.out = scratch("cancel").string();
  std::atomic<bool> cancel{true};
  try {
    pipeline::run_map(config, testing::source_path(kDb), &cancel);
    FAIL("expected Aborted");
  } catch (const Error& e) {
    CHECK(e.code() == std::string(errc::kAborted));
  }
  auto report = json::parse(testing::read_file(config.out + "/shop.report"));
  CHECK(report["status"] == "failed");
  CHECK(report["error"]["code"] == "Aborted");
}

TEST_CASE("config files resolve paths against their directory") {
  auto c = pipeline::load_config(testing::source_path("fixtures/shop.replay.json"));
  CHECK(c.vocabulary == testing::source_path(kVocab));
  CHECK(c.backend.kind == pipeline::BackendKind::Replay);
  CHECK(c.materialize);
  CHECK(c.gold_dir == testing::source_path("eval"));
  CHECK(pipeline::parse_config(pipeline::config_to_json(c).dump()).vocabulary == c.vocabulary);
  for (const char* bad : {R"({"sample_rows": -1})", R"({"embedder": {"dims": 4}})", R"({"backend": {"kind": "x"}})",
                          R"({"base_iri": "relative/"})", R"({"attempts": "three"})", "[1]", "{"}) {
    CAPTURE(bad);
    try {
      pipeline::parse_config(bad);
      FAIL("expected ConfigInvalid");
    } catch (const Error& e) {
      CHECK(e.code() == std::string(errc::kConfigInvalid));
    }
  }
}
