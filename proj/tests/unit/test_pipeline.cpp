#include <doctest.h>

#include <atomic>
#include <cctype>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "schemamap/agents.hpp"

using namespace schemamap;
using namespace schemamap::agents;
using nlohmann::json;

namespace {

std::string error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

const std::map<std::string, std::vector<std::string>> kShopColumns{
    {"customers", {"id", "name", "email", "signup_date"}},
    {"orders", {"id", "customer_id", "product_id"}},
    {"products", {"id", "name", "price"}}};

std::string unmapped_reply(const std::string& table) {
  json j{{"table", table}, {"class_iri", kFallbackClassIri}, {"class_confidence", "LOW"}, {"columns", json::array()}};
  for (const auto& c : kShopColumns.at(table)) {
    j["columns"].push_back({{"column", c}, {"property_iri", nullptr}, {"confidence", "LOW"}, {"rationale", "-"}});
  }
  return j.dump();
}

const std::string kRelationReply =
    json{{"primary_keys", {{{"table", "customers"}, {"columns", {"id"}}}}},
         {"foreign_keys",
          {{{"from_table", "orders"}, {"from_column", "customer_id"}, {"to_table", "customers"}, {"to_column", "id"},
            {"confidence", "HIGH"}}}},
         {"confidence", "HIGH"}}
        .dump();
const std::string kValidatorReply = json{{"edits", json::array()}, {"confidence", "HIGH"}}.dump();

// Answers by request label, so call order does not matter.
class LabelBackend final : public chat::ChatBackend {
 public:
  std::string send(const chat::ChatRequest& r) override {
    calls.fetch_add(1);
    if (r.label.starts_with("mapping:")) return unmapped_reply(r.label.substr(8));
    if (r.label == "relation") return kRelationReply;
    return kValidatorReply;
  }
  std::string fingerprint() const override { return "label"; }
  std::atomic<int> calls{0};
};

struct Snapshot {
  vocab::Vocabulary vocabulary = vocab::load_vocabulary(testing::snapshot_path());
  std::unique_ptr<embed::Embedder> embedder = embed::make_embedder({});
  vstore::VectorIndex index = vstore::index_build(vocabulary, *embedder);
};

const Snapshot& snapshot() {
  static const Snapshot s;
  return s;
}

std::string shop_db() { return testing::source_path("fixtures/spider/database/shop/shop.sqlite"); }

}  // namespace

TEST_CASE("retrieve_candidates over a three-term index") {
  auto embedder = embed::make_embedder({embed::Backend::Baseline, 16});
  vstore::VectorIndex index(16, embedder->fingerprint());
  index.add({"https://schema.org/Movie", vocab::TermKind::Class, embedder->embed("movie"), "Movie"});
  index.add({"https://schema.org/Person", vocab::TermKind::Class, embedder->embed("person"), "Person"});
  index.add({"https://schema.org/name", vocab::TermKind::Property, embedder->embed("name"), "name"});

  TableProfile p;
  p.name = "movie";
  SUBCASE("no columns") {
    auto c = retrieve_candidates(p, index, *embedder, 10, 15);
    CHECK(c.class_candidates.size() == 2);
    CHECK(c.property_candidates.empty());
    CHECK(c.class_candidates[0].iri == "https://schema.org/Movie");
    CHECK(c.class_candidates[0].rendered_text == "Movie");
  }
  SUBCASE("k larger than the index") {
    p.columns.push_back({"title", "TEXT", ingest::InferredType::Text, {}, std::nullopt});
    auto c = retrieve_candidates(p, index, *embedder, 10, 15);
    REQUIRE(c.property_candidates.size() == 1);
    CHECK(c.property_candidates[0].column == "title");
    CHECK(c.property_candidates[0].candidates.size() == 1);
    CHECK(c.class_candidates.size() == 2);
    CHECK(c.class_candidates[0].score >= c.class_candidates[1].score);
  }
  SUBCASE("k limits the lists") {
    auto c = retrieve_candidates(p, index, *embedder, 1, 1);
    CHECK(c.class_candidates.size() == 1);
  }
  SUBCASE("index from another embedder") {
    auto other = embed::make_embedder({embed::Backend::Baseline, 32});
    CHECK(error_code([&] { retrieve_candidates(p, index, *other); }) == errc::kInvalidArgument);
  }
}

TEST_CASE("query texts") {
  TableProfile p;
  p.name = "movie";
  p.description = "Films";
  ingest::ColumnProfile c{"title", "TEXT", ingest::InferredType::Text, {}, std::string("Film title")};
  c.stats.top_values = {{"Alien", 1}, {"Heat", 1}};
  p.columns.push_back(c);
  CHECK(table_query_text(p) == "movie title Films");
  CHECK(column_query_text(c) == "title Text Alien Heat Film title");
}

TEST_CASE("a title column of a movie table retrieves a title- or name-like property") {
  const auto& s = snapshot();
  TableProfile p;
  p.name = "movie";
  p.columns.push_back({"title", "TEXT", ingest::InferredType::Text, {}, std::nullopt});
  auto c = retrieve_candidates(p, s.index, *s.embedder);
  REQUIRE(c.property_candidates.size() == 1);
  const auto& list = c.property_candidates[0].candidates;
  CHECK(list.size() == 15);
  bool found = false;
  for (const auto& cand : list) {
    auto label = s.vocabulary.find(cand.iri)->label;
    for (auto& ch : label) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    found = found || label.find("title") != std::string::npos || label.find("name") != std::string::npos;
  }
  CHECK(found);
}

TEST_CASE("retrieval agrees with the independent oracle") {
  const auto& s = snapshot();
  TableProfile p;
  p.name = "movie";
  p.columns.push_back({"title", "TEXT", ingest::InferredType::Text, {}, std::nullopt});
  auto c = retrieve_candidates(p, s.index, *s.embedder);
  auto check = [](const std::vector<Candidate>& got, const std::string& golden) {
    // tests/oracles/retrieval_oracle.py
    auto expected = json::parse(testing::read_file(testing::source_path(golden)));
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].iri == expected[i][0].get<std::string>());
      CHECK(got[i].score == doctest::Approx(expected[i][1].get<double>()).epsilon(1e-6));
    }
  };
  check(c.property_candidates[0].candidates, "fixtures/golden/retrieval_title_property_top15.json");
  check(c.class_candidates, "fixtures/golden/retrieval_movie_class_top10.json");
}

TEST_CASE("map_database end to end on the shop fixture") {
  const auto& s = snapshot();
  ingest::Database db(shop_db());
  std::vector<std::string> script{unmapped_reply("customers"), unmapped_reply("orders"), unmapped_reply("products"),
                                  kRelationReply, kValidatorReply};
  chat::ScriptedBackend backend(script);
  MapConfig config;
  config.db_id = "shop";
  auto run = map_database(AgentBackends::all(backend), s.index, *s.embedder, db, config);
  CHECK(backend.calls() == 5);
  CHECK(run.timing.tables == 3);
  CHECK(run.timing.columns == 10);
  CHECK(run.timing.total_seconds > 0);
  CHECK(run.completed_stage == "validator");
  REQUIRE(run.validated_proposals.size() == 3);
  for (const auto& p : run.validated_proposals) {
    const auto& expected = kShopColumns.at(p.table);
    REQUIRE(p.columns.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(p.columns[i].column == expected[i]);
  }
  REQUIRE(run.validated_relation);
  CHECK(run.validated_relation->foreign_keys.size() == 1);
  // 13 LOW items from mapping, HIGH edge, HIGH relation, HIGH validator: mean 6/16.
  CHECK(run.final_confidence == Confidence::Low);
  CHECK(run.candidates[0].class_candidates.size() == kDefaultClassCandidates);
  CHECK(run.candidates[0].property_candidates[0].candidates.size() == kDefaultPropertyCandidates);

  SUBCASE("concurrent mapping calls give the same result") {
    LabelBackend labels;
    config.max_concurrent_tables = 3;
    auto again = map_database(AgentBackends::all(labels), s.index, *s.embedder, db, config);
    CHECK(again.proposals == run.proposals);
    CHECK(again.validated_relation == run.validated_relation);
    CHECK(again.final_confidence == run.final_confidence);
    CHECK(labels.calls.load() == 5);
  }
}

TEST_CASE("map_database on a database without tables") {
  const auto& s = snapshot();
  ingest::Database db(testing::source_path("fixtures/spider/database/empty/empty.sqlite"));
  chat::ScriptedBackend backend({});
  auto run = map_database(AgentBackends::all(backend), s.index, *s.embedder, db, {});
  CHECK(backend.calls() == 0);
  CHECK(run.proposals.empty());
  CHECK_FALSE(run.relation);
  CHECK_FALSE(run.final_confidence);
  CHECK(error_code([&] { aggregate_confidence(emitted_confidences(run.proposals, nullptr, nullptr)); }) ==
        errc::kEmptyInput);
}

TEST_CASE("map_database failures carry partial results") {
  const auto& s = snapshot();
  ingest::Database db(shop_db());

  SUBCASE("relation stage fails") {
    chat::ScriptedBackend backend({unmapped_reply("customers"), unmapped_reply("orders"), unmapped_reply("products")});
    try {
      map_database(AgentBackends::all(backend), s.index, *s.embedder, db, {});
      FAIL("expected an error");
    } catch (const MapRunError& e) {
      CHECK(e.code() == errc::kBackendUnavailable);
      CHECK(e.stage() == "relation");
      CHECK(e.partial().proposals.size() == 3);
      CHECK(e.partial().completed_stage == "mapping");
    }
  }
  SUBCASE("cancelled before start") {
    std::atomic<bool> cancel{true};
    MapConfig config;
    config.cancel = &cancel;
    chat::ScriptedBackend backend({});
    try {
      map_database(AgentBackends::all(backend), s.index, *s.embedder, db, config);
      FAIL("expected an error");
    } catch (const MapRunError& e) {
      CHECK(e.code() == errc::kAborted);
      CHECK(e.partial().profiles.empty());
    }
  }
  SUBCASE("a mapping reply that never validates") {
    chat::ScriptedBackend backend({"x", "y", "z"});
    try {
      map_database(AgentBackends::all(backend), s.index, *s.embedder, db, {});
      FAIL("expected an error");
    } catch (const MapRunError& e) {
      CHECK(e.code() == errc::kAgentOutputInvalid);
      CHECK(e.stage() == "mapping");
      CHECK(e.partial().profiles.size() == 3);
      CHECK(e.partial().candidates.size() == 3);
    }
  }
}
