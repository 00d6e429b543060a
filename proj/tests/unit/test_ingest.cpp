#include <doctest.h>

#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "schemamap/errors.hpp"
#include "schemamap/ingest.hpp"
#include "sqlite_fixture.hpp"

using namespace schemamap;
using namespace schemamap::ingest;
using schemamap::testing::ScratchDb;

namespace {

std::string shop_path() { return testing::source_path("fixtures/spider/database/shop/shop.sqlite"); }
std::string manifest_path() { return testing::source_path("fixtures/spider/tables.json"); }

std::string error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

const ColumnProfile& column(const TableProfile& t, const std::string& name) {
  for (const auto& c : t.columns) {
    if (c.name == name) return c;
  }
  throw std::runtime_error("no column " + name);
}

}  // namespace

TEST_CASE("list_tables") {
  SUBCASE("no user tables") {
    ScratchDb db("ingest_none", "PRAGMA user_version = 3;");
    CHECK(list_tables(Database(db.path())).empty());
  }
  SUBCASE("sorted, internals excluded") {
    ScratchDb db("ingest_ba", "CREATE TABLE b(x); CREATE TABLE a(y INTEGER PRIMARY KEY AUTOINCREMENT);");
    // AUTOINCREMENT creates sqlite_sequence behind the scenes.
    CHECK(list_tables(Database(db.path())) == std::vector<std::string>{"a", "b"});
  }
  SUBCASE("matches the Spider manifest entry") {
    auto gold = load_gold_schema(manifest_path(), "shop");
    auto expected = gold.tables;
    std::sort(expected.begin(), expected.end());
    CHECK(list_tables(Database(shop_path())) == expected);
    CHECK(spider_database_path(testing::source_path("fixtures/spider"), "shop") == shop_path());
  }
}

TEST_CASE("unreadable databases") {
  CHECK(error_code([] { Database("/nonexistent/x.sqlite"); }) == errc::kUnreadableDatabase);
  CHECK(error_code([] { Database(testing::source_path("fixtures/spider/tables.json")); }) ==
        errc::kUnreadableDatabase);
}

TEST_CASE("profile_table") {
  SUBCASE("empty table") {
    ScratchDb db("ingest_empty_table", "CREATE TABLE t(a INTEGER, b TEXT);");
    auto p = profile_table(Database(db.path()), "t", 5);
    CHECK(p.row_count == 0);
    CHECK(p.sample_rows.empty());
    REQUIRE(p.columns.size() == 2);
    for (const auto& c : p.columns) {
      CHECK(c.stats.row_count == 0);
      CHECK(c.stats.null_count == 0);
      CHECK(c.stats.distinct_count == 0);
      CHECK_FALSE(c.stats.min);
      CHECK_FALSE(c.stats.mean);
      CHECK(c.stats.top_values.empty());
      CHECK(c.inferred_type == InferredType::Unknown);
    }
  }
  SUBCASE("three rows 1, 2, null") {
    ScratchDb db("ingest_three", "CREATE TABLE t(x INTEGER); INSERT INTO t VALUES (1), (2), (NULL);");
    auto p = profile_table(Database(db.path()), "t", 10);
    const auto& x = column(p, "x");
    // Direct SQL oracle: count(*)-count(x)=1, count(DISTINCT x)=2, min 1, max 2, avg 1.5.
    CHECK(x.stats.null_count == 1);
    CHECK(x.stats.distinct_count == 2);
    CHECK(x.stats.min == "1");
    CHECK(x.stats.max == "2");
    REQUIRE(x.stats.mean);
    CHECK(*x.stats.mean == doctest::Approx(1.5));
    CHECK(x.inferred_type == InferredType::Integer);
    CHECK(x.declared_type == "INTEGER");
    CHECK(p.sample_rows.size() == 3);  // K=10 on a 3-row table
    CHECK(p.sample_rows[2] == std::vector<std::string>{"NULL"});
  }
  SUBCASE("unknown table") {
    ScratchDb db("ingest_unknown", "CREATE TABLE t(x);");
    CHECK(error_code([&] { profile_table(Database(db.path()), "nope"); }) == errc::kUnknownTable);
  }
  SUBCASE("K = 0 keeps no samples") {
    auto p = profile_table(Database(shop_path()), "customers", 0);
    CHECK(p.sample_rows.empty());
    CHECK(p.row_count == 4);
  }
}

TEST_CASE("shop fixture profile") {
  Database db(shop_path());
  auto customers = profile_table(db, "customers");
  CHECK(customers.declared_primary_key == std::vector<std::string>{"id"});
  CHECK(column(customers, "signup_date").inferred_type == InferredType::Date);
  CHECK(column(customers, "name").inferred_type == InferredType::Text);
  CHECK(column(customers, "email").stats.null_count == 1);

  auto products = profile_table(db, "products");
  CHECK(column(products, "price").inferred_type == InferredType::Real);
  CHECK(column(products, "price").stats.min == "24.5");
  CHECK(column(products, "price").stats.max == "89.99");

  auto orders = profile_table(db, "orders");
  CHECK(orders.declared_foreign_keys ==
        std::vector<ForeignKey>{{"orders", "customer_id", "customers", "id"}, {"orders", "product_id", "products", "id"}});
  const auto& cid = column(orders, "customer_id");
  REQUIRE_FALSE(cid.stats.top_values.empty());
  CHECK(cid.stats.top_values[0] == ValueCount{"1", 2});

  auto notes = load_annotations(testing::source_path("fixtures/spider/annotations/shop.json"));
  auto annotated = profile_table(db, "customers", 5, &notes);
  CHECK(annotated.description == "People who registered an account with the store.");
  CHECK(column(annotated, "signup_date").description == "Day the account was created.");
  CHECK_FALSE(column(annotated, "name").description);
}

TEST_CASE("type inference") {
  auto texts = [](std::initializer_list<const char*> xs) {
    std::vector<Cell> out;
    for (auto x : xs) out.push_back(Cell::of(std::string(x)));
    return out;
  };
  CHECK(infer_type({}) == InferredType::Unknown);
  CHECK(infer_type(texts({"1", "2", "3"})) == InferredType::Integer);
  CHECK(infer_type(texts({"1", "2.5", "3"})) == InferredType::Real);
  CHECK(infer_type(texts({"2020-02-29", "2021-12-31"})) == InferredType::Date);
  CHECK(infer_type(texts({"2021-02-29"})) == InferredType::Text);  // not a leap year
  CHECK(infer_type(texts({"true", "False", "yes"})) == InferredType::Boolean);
  // 9 of 10 integers is exactly the threshold.
  CHECK(infer_type(texts({"1", "2", "3", "4", "5", "6", "7", "8", "9", "x"})) == InferredType::Integer);
  CHECK(infer_type(texts({"1", "2", "3", "4", "5", "6", "7", "8", "x", "y"})) == InferredType::Text);
}

TEST_CASE("long values are truncated with an ellipsis") {
  std::string long_value(130, 'a');
  auto t = truncate_value(long_value);
  CHECK(t == std::string(120, 'a') + "…");
  CHECK(truncate_value("short") == "short");
  ScratchDb db("ingest_long", "CREATE TABLE t(v TEXT); INSERT INTO t VALUES ('" + long_value + "');");
  auto p = profile_table(Database(db.path()), "t");
  CHECK(p.sample_rows[0][0] == t);
  CHECK(p.columns[0].stats.top_values[0].value == t);
}

TEST_CASE("gold schema manifest") {
  CHECK(error_code([] { load_gold_schema(manifest_path(), "absent"); }) == errc::kUnknownDbId);
  CHECK(error_code([] { parse_gold_schema("{}", "x"); }) == errc::kMalformedManifest);
  CHECK(error_code([] {
          parse_gold_schema(R"([{"db_id": "x", "table_names_original": ["t"],
            "column_names_original": [[-1, "*"], [0, "a"]], "primary_keys": [], "foreign_keys": [[1, 7]]}])",
                            "x");
        }) == errc::kMalformedManifest);

  // Hand-resolved: index 3 = [1, "customer_id"] -> orders.customer_id, index 1 = [0, "id"] -> customers.id.
  auto tiny = load_gold_schema(manifest_path(), "tiny_shop");
  REQUIRE(tiny.foreign_keys.size() == 1);
  CHECK(tiny.foreign_keys[0] == ForeignKey{"orders", "customer_id", "customers", "id"});
  CHECK(tiny.primary_keys == std::vector<PrimaryKey>{{"customers", {"id"}}, {"orders", {"id"}}});

  auto solo = load_gold_schema(manifest_path(), "solo");
  CHECK(solo.foreign_keys.empty());
  CHECK(solo.columns.at("notes") == std::vector<std::string>{"note_id", "body"});

  auto shop = load_gold_schema(manifest_path(), "shop");
  for (const auto& fk : shop.foreign_keys) {
    const auto& from = shop.columns.at(fk.from_table);
    const auto& to = shop.columns.at(fk.to_table);
    CHECK(std::find(from.begin(), from.end(), fk.from_column) != from.end());
    CHECK(std::find(to.begin(), to.end(), fk.to_column) != to.end());
  }
  // Declared database keys agree with the manifest.
  Database db(shop_path());
  std::vector<ForeignKey> declared;
  for (const auto& t : list_tables(db)) {
    auto p = profile_table(db, t);
    declared.insert(declared.end(), p.declared_foreign_keys.begin(), p.declared_foreign_keys.end());
  }
  auto manifest_fks = shop.foreign_keys;
  std::sort(manifest_fks.begin(), manifest_fks.end());
  std::sort(declared.begin(), declared.end());
  CHECK(declared == manifest_fks);
}

TEST_CASE("profiling is read-only and deterministic") {
  auto before = testing::read_file(shop_path());
  Database db(shop_path());
  auto a = profile_database(db);
  auto b = profile_database(Database(shop_path()));
  CHECK(a == b);
  read_rows(db, "orders");
  CHECK(testing::read_file(shop_path()) == before);
}

TEST_CASE("stats invariants on randomized tables") {
  std::mt19937_64 rng(5150);
  for (int trial = 0; trial < 100; ++trial) {
    int rows = static_cast<int>(rng() % 40);
    std::string script = "CREATE TABLE t(a INTEGER, b TEXT, c REAL, d);";
    for (int r = 0; r < rows; ++r) {
      auto pick = [&](int i) -> std::string {
        switch ((rng() + static_cast<unsigned>(i)) % 6) {
          case 0: return "NULL";
          case 1: return std::to_string(rng() % 7);
          case 2: return std::to_string(static_cast<double>(rng() % 100) / 8.0);
          case 3: return "'w" + std::to_string(rng() % 5) + "'";
          case 4: return "'2024-01-0" + std::to_string(1 + rng() % 9) + "'";
          default: return "'" + std::to_string(rng() % 3) + "'";
        }
      };
      script += "INSERT INTO t VALUES (" + pick(0) + "," + pick(1) + "," + pick(2) + "," + pick(3) + ");";
    }
    ScratchDb scratch("ingest_rand", script);
    Database db(scratch.path());
    std::size_t k = rng() % 8;
    auto p = profile_table(db, "t", k);
    CHECK(p.row_count == static_cast<std::size_t>(rows));
    CHECK(p.sample_rows.size() == std::min<std::size_t>(k, p.row_count));
    for (const auto& row : p.sample_rows) CHECK(row.size() == p.columns.size());
    auto raw = read_rows(db, "t");
    for (std::size_t ci = 0; ci < p.columns.size(); ++ci) {
      const auto& s = p.columns[ci].stats;
      CHECK(s.null_count <= s.row_count);
      CHECK(s.distinct_count <= s.row_count);
      std::size_t top_sum = 0;
      for (const auto& tv : s.top_values) top_sum += tv.frequency;
      CHECK(top_sum <= s.row_count);
      CHECK(s.top_values.size() <= 5);
      // >= 90% of non-null values parse as the inferred type.
      std::size_t non_null = 0, hits = 0;
      for (const auto& row : raw) {
        if (row[ci].is_null()) continue;
        ++non_null;
        hits += parses_as(row[ci], p.columns[ci].inferred_type);
      }
      if (non_null == 0) {
        CHECK(p.columns[ci].inferred_type == InferredType::Unknown);
      } else {
        CHECK(static_cast<double>(hits) >= 0.9 * static_cast<double>(non_null));
      }
    }
    CHECK(profile_table(db, "t", k) == p);
  }
}
