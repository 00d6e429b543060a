#pragma once
// Relational introspection: table listing, per-column profiling, declared
// keys, Spider schema manifests and optional description sidecars.
//
// Databases are always opened read-only and immutable, so no journal or WAL
// side files are created and the file bytes never change.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

struct sqlite3;

namespace schemamap::ingest {

// One SQLite value as stored.
struct Cell {
  enum class Kind { Null, Integer, Real, Text, Blob };
  Kind kind = Kind::Null;
  std::int64_t integer = 0;
  double real = 0.0;
  std::string text;  // Text payload, or raw bytes for Blob

  bool is_null() const { return kind == Kind::Null; }
  // Display form used in prompts, samples and top values.
  std::string render() const;

  static Cell null() { return {}; }
  static Cell of(std::int64_t v) { return {Kind::Integer, v, 0.0, {}}; }
  static Cell of(double v) { return {Kind::Real, 0, v, {}}; }
  static Cell of(std::string v) { return {Kind::Text, 0, 0.0, std::move(v)}; }

  bool operator==(const Cell&) const = default;
};

enum class InferredType { Integer, Real, Text, Date, Boolean, Unknown };
std::string_view to_string(InferredType type);

struct ValueCount {
  std::string value;
  std::size_t frequency = 0;

  bool operator==(const ValueCount&) const = default;
};

struct ColumnStats {
  std::size_t row_count = 0;
  std::size_t null_count = 0;
  std::size_t distinct_count = 0;
  std::optional<std::string> min;  // numeric order for Integer/Real, else lexicographic
  std::optional<std::string> max;
  std::optional<double> mean;        // Integer / Real only
  std::optional<double> avg_length;  // Text only, in code points
  std::vector<ValueCount> top_values;  // at most 5, by (frequency desc, value asc)

  bool operator==(const ColumnStats&) const = default;
};

struct ColumnProfile {
  std::string name;
  std::string declared_type;
  InferredType inferred_type = InferredType::Unknown;
  ColumnStats stats;
  std::optional<std::string> description;

  bool operator==(const ColumnProfile&) const = default;
};

struct ForeignKey {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;

  bool operator==(const ForeignKey&) const = default;
  auto operator<=>(const ForeignKey&) const = default;
};

struct TableProfile {
  std::string name;
  std::vector<ColumnProfile> columns;
  std::vector<std::vector<std::string>> sample_rows;  // rendered, truncated cells
  std::size_t row_count = 0;
  std::optional<std::string> description;
  // Key metadata declared in the database schema. Hints only.
  std::vector<std::string> declared_primary_key;
  std::vector<ForeignKey> declared_foreign_keys;

  bool operator==(const TableProfile&) const = default;
};

inline constexpr std::size_t kDefaultSampleRows = 5;
inline constexpr std::size_t kMaxValueLength = 120;
inline constexpr double kTypeThreshold = 0.9;

// Cuts text longer than kMaxValueLength code points and appends "…".
std::string truncate_value(std::string_view value);

// Classifies a column from its non-null values; Unknown when there are none.
InferredType infer_type(const std::vector<Cell>& non_null_values);

// True when `cell` reads as a value of `type` (the 90% rule counts these).
bool parses_as(const Cell& cell, InferredType type);

// table -> (description, column -> description)
struct Annotations {
  struct Table {
    std::optional<std::string> description;
    std::map<std::string, std::string> columns;
  };
  std::map<std::string, Table> tables;
};

// {"tables": {"<table>": {"description": "...", "columns": {"<col>": "..."}}}}
Annotations load_annotations(const std::string& path);
Annotations parse_annotations(std::string_view document);

class Database {
 public:
  // Throws UnreadableDatabase when the file is missing or not SQLite.
  explicit Database(const std::string& path);
  ~Database();
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;
  Database(Database&&) noexcept;
  Database& operator=(Database&&) noexcept;

  const std::string& path() const { return path_; }
  sqlite3* handle() const { return db_; }

 private:
  std::string path_;
  sqlite3* db_ = nullptr;
};

// User tables, sorted ascending; sqlite_* internals excluded.
std::vector<std::string> list_tables(const Database& db);

bool has_table(const Database& db, std::string_view table);

// Column names in declaration order. Throws UnknownTable.
std::vector<std::string> table_columns(const Database& db, std::string_view table);

// Single pass over the table in physical order. Throws UnknownTable.
TableProfile profile_table(const Database& db, std::string_view table, std::size_t sample_rows = kDefaultSampleRows,
                           const Annotations* annotations = nullptr);

std::vector<TableProfile> profile_database(const Database& db, std::size_t sample_rows = kDefaultSampleRows,
                                           const Annotations* annotations = nullptr);

// Every row of `table` in physical order, as raw cells.
std::vector<std::vector<Cell>> read_rows(const Database& db, std::string_view table);

struct PrimaryKey {
  std::string table;
  std::vector<std::string> columns;

  bool operator==(const PrimaryKey&) const = default;
};

struct GoldSchema {
  std::string db_id;
  std::vector<std::string> tables;
  std::map<std::string, std::vector<std::string>> columns;  // table -> columns in manifest order
  std::vector<PrimaryKey> primary_keys;
  std::vector<ForeignKey> foreign_keys;
};

// Spider tables.json: an array of entries with db_id, table_names_original,
// column_names_original ([table_index, name] pairs, index 0 is "*"),
// primary_keys (column indices, or index lists for composite keys) and
// foreign_keys ([from_index, to_index] pairs). Throws UnknownDbId or
// MalformedManifest.
GoldSchema load_gold_schema(const std::string& manifest_path, std::string_view db_id);
GoldSchema parse_gold_schema(std::string_view manifest, std::string_view db_id);

// Spider layout: <root>/database/<db_id>/<db_id>.sqlite
std::string spider_database_path(const std::string& spider_root, std::string_view db_id);

}  // namespace schemamap::ingest
