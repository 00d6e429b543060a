#pragma once
// Scoring a schema mapping against a hand-written gold file.
//
// Elements are every gold table class, every gold column (mapped or
// unmapped) and every gold FK edge. An element is correct on an exact IRI
// match with any accepted alias, both-unmapped, or an exact FK endpoint
// match. Elements the mapping lacks count as wrong and fall in the LOW bucket.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "schemamap/confidence.hpp"
#include "schemamap/ingest.hpp"
#include "schemamap/kgbuild.hpp"

namespace schemamap::eval {

using ingest::ForeignKey;

struct GoldColumn {
  std::string column;
  // Accepted answers; std::nullopt stands for "unmapped".
  std::vector<std::optional<std::string>> accepted;

  bool operator==(const GoldColumn&) const = default;
};

struct GoldTable {
  std::string table;
  std::vector<std::string> classes;  // accepted class IRIs, at least one
  std::vector<GoldColumn> columns;

  bool operator==(const GoldTable&) const = default;
};

struct GoldMapping {
  std::string db_id;
  std::vector<GoldTable> tables;
  std::vector<ForeignKey> foreign_keys;

  bool operator==(const GoldMapping&) const = default;
};

// "eval/<db_id>.gold"; docs/schemas/gold.schema.json describes it.
GoldMapping parse_gold(std::string_view document);  // throws MalformedGold
GoldMapping load_gold_file(const std::string& path);
// Throws GoldNotFound when <dir>/<db_id>.gold is missing.
GoldMapping load_gold(const std::string& dir, const std::string& db_id);
std::string serialize_gold(const GoldMapping& gold);
// Throws MalformedGold when the gold names tables or columns the database lacks.
void check_gold_against(const GoldMapping& gold, const ingest::Database& db);

// Exact non-negative fraction, always reduced; den > 0.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational of(std::int64_t num, std::int64_t den);
  bool operator==(const Rational&) const = default;
  Rational operator+(const Rational& o) const;
  Rational operator*(const Rational& o) const;
};

// 100 * correct / total rounded half up to two decimals, e.g. 37/47 -> "78.72".
std::string format_percent(std::size_t correct, std::size_t total);

struct Tally {
  std::size_t total = 0;
  std::size_t correct = 0;

  bool empty() const { return total == 0; }
  Rational accuracy() const;                // throws EmptyInput when empty
  std::optional<std::string> percent() const;  // nullopt when empty

  bool operator==(const Tally&) const = default;
};

enum class ElementKind { TableClass, ColumnProperty, ForeignKey };
std::string to_string(ElementKind kind);

struct ElementResult {
  ElementKind kind = ElementKind::TableClass;
  std::string table;
  std::string column;  // ColumnProperty only
  ForeignKey fk;       // ForeignKey only
  std::vector<std::optional<std::string>> expected;
  std::optional<std::string> actual;  // IRI, or "present" for a matched FK
  bool present = false;               // the mapping has this element
  Confidence confidence = Confidence::Low;
  bool correct = false;

  bool operator==(const ElementResult&) const = default;
};

struct TimingRow {
  std::size_t tables = 0;
  std::size_t columns = 0;
  std::optional<double> seconds;

  bool operator==(const TimingRow&) const = default;
};

struct EvalReport {
  std::string db_id;
  Tally overall;
  std::array<Tally, 3> by_confidence;  // indexed by Confidence
  Tally classes;
  Tally properties;
  Tally fks;
  std::size_t extra_fk_links = 0;  // mapping links absent from the gold
  TimingRow timing;
  std::vector<ElementResult> elements;  // gold order

  const Tally& bucket(Confidence c) const { return by_confidence[static_cast<int>(c)]; }
};

// Throws MismatchedDatabase when the db ids differ. seconds fills the timing
// row; tables and columns come from the mapping.
EvalReport compare(const kg::SchemaMapping& mapping, const GoldMapping& gold,
                   std::optional<double> seconds = std::nullopt);

nlohmann::json report_to_json(const EvalReport& report);

// Accuracy table (Overall/HIGH/MEDIUM/LOW, "/" for an empty bucket) followed
// by a timing table. labels[i] names reports[i]; the db id is used when absent.
std::string render_report(const std::vector<EvalReport>& reports, const std::vector<std::string>& labels = {});

}  // namespace schemamap::eval
