#include "schemamap/ingest.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "schemamap/errors.hpp"

namespace schemamap::ingest {

using nlohmann::json;

namespace {

std::string quote_identifier(std::string_view name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string uri_escape_path(const std::string& path) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : path) {
    if (std::isalnum(c) || c == '/' || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

class Statement {
 public:
  Statement(sqlite3* db, const std::string& sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr) != SQLITE_OK) {
      std::string message = sqlite3_errmsg(db);
      sqlite3_finalize(stmt_);
      stmt_ = nullptr;
      throw Error(errc::kUnreadableDatabase, "cannot prepare '" + sql + "': " + message);
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  bool step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(errc::kUnreadableDatabase, std::string("query failed: ") + sqlite3_errmsg(db_));
  }

  int columns() const { return sqlite3_column_count(stmt_); }
  std::string column_name(int i) const {
    const char* n = sqlite3_column_name(stmt_, i);
    return n ? n : "";
  }

  Cell cell(int i) const {
    switch (sqlite3_column_type(stmt_, i)) {
      case SQLITE_INTEGER: return Cell::of(static_cast<std::int64_t>(sqlite3_column_int64(stmt_, i)));
      case SQLITE_FLOAT: return Cell::of(sqlite3_column_double(stmt_, i));
      case SQLITE_TEXT: {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, i));
        return Cell::of(std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, i))));
      }
      case SQLITE_BLOB: {
        Cell c;
        c.kind = Cell::Kind::Blob;
        const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt_, i));
        c.text.assign(p ? p : "", static_cast<std::size_t>(sqlite3_column_bytes(stmt_, i)));
        return c;
      }
      default: return Cell::null();
    }
  }

  std::string text(int i) const {
    const auto* p = sqlite3_column_text(stmt_, i);
    return p ? reinterpret_cast<const char*>(p) : "";
  }
  std::int64_t integer(int i) const { return sqlite3_column_int64(stmt_, i); }
  bool is_null(int i) const { return sqlite3_column_type(stmt_, i) == SQLITE_NULL; }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

std::size_t code_point_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool parse_int64(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  std::size_t start = (s[0] == '+') ? 1 : 0;
  if (start == s.size()) return false;
  auto res = std::from_chars(s.data() + start, s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty() || std::isspace(static_cast<unsigned char>(s.front())) ||
      std::isspace(static_cast<unsigned char>(s.back()))) {
    return false;
  }
  std::string owned(s);
  char* end = nullptr;
  out = std::strtod(owned.c_str(), &end);
  return end == owned.c_str() + owned.size() && std::isfinite(out);
}

bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  int year = std::stoi(std::string(s.substr(0, 4)));
  int month = std::stoi(std::string(s.substr(5, 2)));
  int day = std::stoi(std::string(s.substr(8, 2)));
  if (month < 1 || month > 12 || day < 1) return false;
  static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  int limit = days[month - 1] + (month == 2 && leap ? 1 : 0);
  return day <= limit;
}

std::optional<double> numeric_value(const Cell& c) {
  switch (c.kind) {
    case Cell::Kind::Integer: return static_cast<double>(c.integer);
    case Cell::Kind::Real: return c.real;
    case Cell::Kind::Text: {
      double d;
      if (parse_double(c.text, d)) return d;
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

struct Weighted {
  const Cell* cell;
  std::size_t weight;
};

InferredType infer_weighted(const std::vector<Weighted>& values) {
  std::size_t total = 0;
  for (const auto& v : values) total += v.weight;
  if (total == 0) return InferredType::Unknown;
  for (auto type : {InferredType::Integer, InferredType::Real, InferredType::Date, InferredType::Boolean}) {
    std::size_t hits = 0;
    for (const auto& v : values) {
      if (parses_as(*v.cell, type)) hits += v.weight;
    }
    if (static_cast<double>(hits) >= kTypeThreshold * static_cast<double>(total)) return type;
  }
  return InferredType::Text;
}

// Distinct values keep their kind so 1 and '1' stay apart.
std::string distinct_key(const Cell& c) {
  switch (c.kind) {
    case Cell::Kind::Integer: return "i" + std::to_string(c.integer);
    case Cell::Kind::Real: return "r" + c.render();
    case Cell::Kind::Text: return "t" + c.text;
    case Cell::Kind::Blob: return "b" + c.text;
    case Cell::Kind::Null: return "n";
  }
  return "n";
}

struct ColumnAccumulator {
  std::size_t null_count = 0;
  std::unordered_map<std::string, std::pair<Cell, std::size_t>> counts;

  void add(Cell c) {
    if (c.is_null()) {
      ++null_count;
      return;
    }
    auto key = distinct_key(c);
    auto it = counts.find(key);
    if (it == counts.end()) {
      counts.emplace(std::move(key), std::make_pair(std::move(c), std::size_t{1}));
    } else {
      ++it->second.second;
    }
  }
};

ColumnStats finish_stats(const ColumnAccumulator& acc, std::size_t row_count, InferredType& inferred) {
  std::vector<Weighted> values;
  values.reserve(acc.counts.size());
  for (const auto& [key, entry] : acc.counts) values.push_back({&entry.first, entry.second});
  inferred = infer_weighted(values);

  ColumnStats s;
  s.row_count = row_count;
  s.null_count = acc.null_count;
  s.distinct_count = acc.counts.size();
  if (values.empty()) return s;

  if (inferred == InferredType::Integer || inferred == InferredType::Real) {
    const Cell* lo = nullptr;
    const Cell* hi = nullptr;
    double lo_v = 0, hi_v = 0, sum = 0;
    std::size_t n = 0;
    for (const auto& v : values) {
      auto d = numeric_value(*v.cell);
      if (!d) continue;
      // Equal numbers compare by rendering so the choice is stable.
      if (!lo || *d < lo_v || (*d == lo_v && v.cell->render() < lo->render())) lo = v.cell, lo_v = *d;
      if (!hi || *d > hi_v || (*d == hi_v && v.cell->render() < hi->render())) hi = v.cell, hi_v = *d;
      sum += *d * static_cast<double>(v.weight);
      n += v.weight;
    }
    if (lo) s.min = truncate_value(lo->render());
    if (hi) s.max = truncate_value(hi->render());
    if (n) s.mean = sum / static_cast<double>(n);
  } else {
    std::string lo, hi;
    bool first = true;
    std::size_t length_sum = 0, n = 0;
    for (const auto& v : values) {
      auto r = v.cell->render();
      if (first || r < lo) lo = r;
      if (first || r > hi) hi = r;
      first = false;
      length_sum += code_point_length(r) * v.weight;
      n += v.weight;
    }
    s.min = truncate_value(lo);
    s.max = truncate_value(hi);
    if (inferred == InferredType::Text) s.avg_length = static_cast<double>(length_sum) / static_cast<double>(n);
  }

  std::vector<ValueCount> top;
  top.reserve(values.size());
  for (const auto& v : values) top.push_back({v.cell->render(), v.weight});
  std::sort(top.begin(), top.end(), [](const ValueCount& a, const ValueCount& b) {
    return a.frequency != b.frequency ? a.frequency > b.frequency : a.value < b.value;
  });
  if (top.size() > 5) top.resize(5);
  for (auto& t : top) t.value = truncate_value(t.value);
  s.top_values = std::move(top);
  return s;
}

struct ColumnInfo {
  std::string name;
  std::string declared_type;
  int pk_position = 0;
};

std::vector<ColumnInfo> column_info(const Database& db, std::string_view table) {
  if (!has_table(db, table)) throw Error(errc::kUnknownTable, "no table named " + std::string(table));
  Statement st(db.handle(), "PRAGMA table_info(" + quote_identifier(table) + ")");
  std::vector<ColumnInfo> out;
  while (st.step()) out.push_back({st.text(1), st.text(2), static_cast<int>(st.integer(5))});
  return out;
}

std::vector<std::string> declared_pk(const std::vector<ColumnInfo>& columns) {
  std::vector<std::pair<int, std::string>> keyed;
  for (const auto& c : columns) {
    if (c.pk_position > 0) keyed.emplace_back(c.pk_position, c.name);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::string> out;
  for (auto& [pos, name] : keyed) out.push_back(std::move(name));
  return out;
}

std::vector<ForeignKey> declared_fks(const Database& db, std::string_view table) {
  Statement st(db.handle(), "PRAGMA foreign_key_list(" + quote_identifier(table) + ")");
  struct Raw {
    std::int64_t id, seq;
    std::string target, from;
    std::optional<std::string> to;
  };
  std::vector<Raw> raw;
  while (st.step()) {
    Raw r{st.integer(0), st.integer(1), st.text(2), st.text(3), std::nullopt};
    if (!st.is_null(4)) r.to = st.text(4);
    raw.push_back(std::move(r));
  }
  std::vector<ForeignKey> out;
  for (const auto& r : raw) {
    std::string to = r.to.value_or("");
    if (to.empty() && has_table(db, r.target)) {
      // "REFERENCES t" without columns points at t's primary key.
      auto pk = declared_pk(column_info(db, r.target));
      if (static_cast<std::size_t>(r.seq) < pk.size()) to = pk[static_cast<std::size_t>(r.seq)];
    }
    out.push_back({std::string(table), r.from, r.target, to});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string read_text_file(const std::string& path, const char* missing_code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(missing_code, "cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

std::string Cell::render() const {
  switch (kind) {
    case Kind::Null: return "NULL";
    case Kind::Integer: return std::to_string(integer);
    case Kind::Real: {
      if (std::isnan(real)) return "NaN";
      if (std::isinf(real)) return real > 0 ? "inf" : "-inf";
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, real);
      std::string s(buf, res.ptr);
      if (s.find_first_of(".e") == std::string::npos) s += ".0";
      return s;
    }
    case Kind::Text: return text;
    case Kind::Blob: return "<blob " + std::to_string(text.size()) + " bytes>";
  }
  return "";
}

std::string_view to_string(InferredType type) {
  switch (type) {
    case InferredType::Integer: return "Integer";
    case InferredType::Real: return "Real";
    case InferredType::Text: return "Text";
    case InferredType::Date: return "Date";
    case InferredType::Boolean: return "Boolean";
    case InferredType::Unknown: return "Unknown";
  }
  return "Unknown";
}

std::string truncate_value(std::string_view value) {
  if (code_point_length(value) <= kMaxValueLength) return std::string(value);
  std::size_t seen = 0, i = 0;
  for (; i < value.size(); ++i) {
    if ((static_cast<unsigned char>(value[i]) & 0xC0) != 0x80) {
      if (seen == kMaxValueLength) break;
      ++seen;
    }
  }
  return std::string(value.substr(0, i)) + "…";
}

bool parses_as(const Cell& cell, InferredType type) {
  switch (type) {
    case InferredType::Integer: {
      if (cell.kind == Cell::Kind::Integer) return true;
      std::int64_t v;
      return cell.kind == Cell::Kind::Text && parse_int64(cell.text, v);
    }
    case InferredType::Real: return numeric_value(cell).has_value();
    case InferredType::Date: return cell.kind == Cell::Kind::Text && is_iso_date(cell.text);
    case InferredType::Boolean: {
      if (cell.kind != Cell::Kind::Text) return false;
      auto t = lower_ascii(cell.text);
      return t == "true" || t == "false" || t == "yes" || t == "no";
    }
    case InferredType::Text: return !cell.is_null();
    case InferredType::Unknown: return false;
  }
  return false;
}

InferredType infer_type(const std::vector<Cell>& non_null_values) {
  std::vector<Weighted> weighted;
  weighted.reserve(non_null_values.size());
  for (const auto& c : non_null_values) {
    if (!c.is_null()) weighted.push_back({&c, 1});
  }
  return infer_weighted(weighted);
}

Annotations parse_annotations(std::string_view document) {
  Annotations out;
  try {
    auto root = json::parse(document);
    for (const auto& [table, body] : root.at("tables").items()) {
      Annotations::Table t;
      if (body.contains("description")) t.description = body.at("description").get<std::string>();
      if (body.contains("columns")) {
        for (const auto& [column, text] : body.at("columns").items()) t.columns[column] = text.get<std::string>();
      }
      out.tables[table] = std::move(t);
    }
  } catch (const json::exception& e) {
    throw Error(errc::kMalformedAnnotations, std::string("bad annotations document: ") + e.what());
  }
  return out;
}

Annotations load_annotations(const std::string& path) {
  return parse_annotations(read_text_file(path, errc::kMalformedAnnotations));
}

Database::Database(const std::string& path) : path_(path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(errc::kUnreadableDatabase, "no database file at " + path);
  }
  // immutable=1: no locking, no journal or WAL files, no writes of any kind.
  auto uri = "file:" + uri_escape_path(std::filesystem::absolute(path).string()) + "?mode=ro&immutable=1";
  if (sqlite3_open_v2(uri.c_str(), &db_, SQLITE_OPEN_READONLY | SQLITE_OPEN_URI | SQLITE_OPEN_NOMUTEX, nullptr) !=
      SQLITE_OK) {
    std::string message = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw Error(errc::kUnreadableDatabase, "cannot open " + path + ": " + message);
  }
  try {
    Statement probe(db_, "SELECT count(*) FROM sqlite_master");
    probe.step();
  } catch (const Error&) {
    sqlite3_close(db_);
    db_ = nullptr;
    throw Error(errc::kUnreadableDatabase, path + " is not a readable SQLite database");
  }
}

Database::~Database() { sqlite3_close(db_); }

Database::Database(Database&& other) noexcept : path_(std::move(other.path_)), db_(other.db_) {
  other.db_ = nullptr;
}

Database& Database::operator=(Database&& other) noexcept {
  if (this != &other) {
    sqlite3_close(db_);
    path_ = std::move(other.path_);
    db_ = other.db_;
    other.db_ = nullptr;
  }
  return *this;
}

std::vector<std::string> list_tables(const Database& db) {
  Statement st(db.handle(), "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\'");
  std::vector<std::string> out;
  while (st.step()) out.push_back(st.text(0));
  std::sort(out.begin(), out.end());
  return out;
}

bool has_table(const Database& db, std::string_view table) {
  auto tables = list_tables(db);
  return std::binary_search(tables.begin(), tables.end(), std::string(table));
}

std::vector<std::string> table_columns(const Database& db, std::string_view table) {
  std::vector<std::string> out;
  for (auto& c : column_info(db, table)) out.push_back(std::move(c.name));
  return out;
}

std::vector<std::vector<Cell>> read_rows(const Database& db, std::string_view table) {
  if (!has_table(db, table)) throw Error(errc::kUnknownTable, "no table named " + std::string(table));
  Statement st(db.handle(), "SELECT * FROM " + quote_identifier(table));
  std::vector<std::vector<Cell>> rows;
  while (st.step()) {
    std::vector<Cell> row;
    row.reserve(static_cast<std::size_t>(st.columns()));
    for (int i = 0; i < st.columns(); ++i) row.push_back(st.cell(i));
    rows.push_back(std::move(row));
  }
  return rows;
}

TableProfile profile_table(const Database& db, std::string_view table, std::size_t sample_rows,
                           const Annotations* annotations) {
  auto info = column_info(db, table);
  TableProfile profile;
  profile.name = std::string(table);
  profile.declared_primary_key = declared_pk(info);
  profile.declared_foreign_keys = declared_fks(db, table);

  std::vector<ColumnAccumulator> acc(info.size());
  Statement st(db.handle(), "SELECT * FROM " + quote_identifier(table));
  if (static_cast<std::size_t>(st.columns()) != info.size()) {
    throw Error(errc::kUnreadableDatabase, "column count mismatch scanning " + profile.name);
  }
  while (st.step()) {
    ++profile.row_count;
    bool keep = profile.sample_rows.size() < sample_rows;
    std::vector<std::string> sample;
    for (int i = 0; i < st.columns(); ++i) {
      Cell c = st.cell(i);
      if (keep) sample.push_back(truncate_value(c.render()));
      acc[static_cast<std::size_t>(i)].add(std::move(c));
    }
    if (keep) profile.sample_rows.push_back(std::move(sample));
  }

  const Annotations::Table* notes = nullptr;
  if (annotations) {
    auto it = annotations->tables.find(profile.name);
    if (it != annotations->tables.end()) notes = &it->second;
  }
  if (notes) profile.description = notes->description;

  for (std::size_t i = 0; i < info.size(); ++i) {
    ColumnProfile col;
    col.name = info[i].name;
    col.declared_type = info[i].declared_type;
    col.stats = finish_stats(acc[i], profile.row_count, col.inferred_type);
    if (notes) {
      auto it = notes->columns.find(col.name);
      if (it != notes->columns.end()) col.description = it->second;
    }
    profile.columns.push_back(std::move(col));
  }
  return profile;
}

std::vector<TableProfile> profile_database(const Database& db, std::size_t sample_rows,
                                           const Annotations* annotations) {
  std::vector<TableProfile> out;
  for (const auto& t : list_tables(db)) out.push_back(profile_table(db, t, sample_rows, annotations));
  return out;
}

GoldSchema parse_gold_schema(std::string_view manifest, std::string_view db_id) {
  json root;
  try {
    root = json::parse(manifest);
  } catch (const json::parse_error& e) {
    throw Error(errc::kMalformedManifest, std::string("manifest is not JSON: ") + e.what());
  }
  if (!root.is_array()) throw Error(errc::kMalformedManifest, "manifest must be an array of databases");
  for (const auto& entry : root) {
    if (!entry.is_object() || entry.value("db_id", "") != db_id) continue;
    try {
      GoldSchema g;
      g.db_id = std::string(db_id);
      g.tables = entry.at("table_names_original").get<std::vector<std::string>>();
      for (const auto& t : g.tables) g.columns[t];
      // Flat column list; index 0 is the [-1, "*"] wildcard.
      std::vector<std::pair<std::string, std::string>> flat;
      for (const auto& c : entry.at("column_names_original")) {
        int table_index = c.at(0).get<int>();
        auto name = c.at(1).get<std::string>();
        if (table_index < 0) {
          flat.emplace_back("", name);
          continue;
        }
        if (static_cast<std::size_t>(table_index) >= g.tables.size()) {
          throw Error(errc::kMalformedManifest, "column " + name + " names table index out of range");
        }
        flat.emplace_back(g.tables[static_cast<std::size_t>(table_index)], name);
        g.columns[g.tables[static_cast<std::size_t>(table_index)]].push_back(name);
      }
      auto column_at = [&](const json& idx) -> const std::pair<std::string, std::string>& {
        auto i = idx.get<long>();
        if (i < 0 || static_cast<std::size_t>(i) >= flat.size() || flat[static_cast<std::size_t>(i)].first.empty()) {
          throw Error(errc::kMalformedManifest, "column index " + std::to_string(i) + " does not name a column");
        }
        return flat[static_cast<std::size_t>(i)];
      };
      for (const auto& pk : entry.value("primary_keys", json::array())) {
        PrimaryKey key;
        auto add = [&](const json& idx) {
          const auto& [t, c] = column_at(idx);
          if (!key.table.empty() && key.table != t) {
            throw Error(errc::kMalformedManifest, "composite primary key spans tables");
          }
          key.table = t;
          key.columns.push_back(c);
        };
        if (pk.is_array()) {
          for (const auto& idx : pk) add(idx);
        } else {
          add(pk);
        }
        if (!key.columns.empty()) g.primary_keys.push_back(std::move(key));
      }
      for (const auto& fk : entry.value("foreign_keys", json::array())) {
        const auto& from = column_at(fk.at(0));
        const auto& to = column_at(fk.at(1));
        g.foreign_keys.push_back({from.first, from.second, to.first, to.second});
      }
      return g;
    } catch (const json::exception& e) {
      throw Error(errc::kMalformedManifest, "bad manifest entry for " + std::string(db_id) + ": " + e.what());
    }
  }
  throw Error(errc::kUnknownDbId, "manifest has no database " + std::string(db_id));
}

GoldSchema load_gold_schema(const std::string& manifest_path, std::string_view db_id) {
  return parse_gold_schema(read_text_file(manifest_path, errc::kMalformedManifest), db_id);
}

std::string spider_database_path(const std::string& spider_root, std::string_view db_id) {
  return (std::filesystem::path(spider_root) / "database" / std::string(db_id) / (std::string(db_id) + ".sqlite"))
      .string();
}

}  // namespace schemamap::ingest
