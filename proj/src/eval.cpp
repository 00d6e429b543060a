#include "schemamap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "schemamap/errors.hpp"

namespace schemamap::eval {

using nlohmann::json;

namespace {

constexpr const char* kGoldFormat = "schemamap-gold/1";

[[noreturn]] void malformed(const std::string& why) { throw Error(errc::kMalformedGold, why); }

json fk_json(const ForeignKey& fk) {
  return {{"from_table", fk.from_table}, {"from_column", fk.from_column}, {"to_table", fk.to_table},
          {"to_column", fk.to_column}};
}

std::string fk_text(const ForeignKey& fk) {
  return fk.from_table + "." + fk.from_column + " -> " + fk.to_table + "." + fk.to_column;
}

std::string read_text(const std::string& path, const char* code, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(code, "cannot read " + what + " " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// A single IRI string, or a non-empty list of accepted alternatives.
std::vector<std::string> class_aliases(const json& v) {
  std::vector<std::string> out;
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_string()) malformed("class alias must be a string: " + e.dump());
      out.push_back(e.get<std::string>());
    }
  } else {
    malformed("class must be a string or a list: " + v.dump());
  }
  if (out.empty()) malformed("empty class alias list");
  return out;
}

std::vector<std::optional<std::string>> property_aliases(const json& v) {
  std::vector<std::optional<std::string>> out;
  auto one = [&](const json& e) {
    if (e.is_null()) {
      out.emplace_back(std::nullopt);
    } else if (e.is_string()) {
      out.emplace_back(e.get<std::string>());
    } else {
      malformed("property must be a string, null or a list of those: " + e.dump());
    }
  };
  if (v.is_array()) {
    for (const auto& e : v) one(e);
  } else {
    one(v);
  }
  if (out.empty()) malformed("empty property alias list");
  return out;
}

json alias_json(const std::vector<std::optional<std::string>>& aliases) {
  auto one = [](const std::optional<std::string>& a) { return a ? json(*a) : json(nullptr); };
  if (aliases.size() == 1) return one(aliases[0]);
  json out = json::array();
  for (const auto& a : aliases) out.push_back(one(a));
  return out;
}

std::int64_t to_i64(std::size_t v) { return static_cast<std::int64_t>(v); }

}  // namespace

GoldMapping parse_gold(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    malformed(std::string("gold file is not JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kGoldFormat) {
    malformed(std::string("not a ") + kGoldFormat + " document");
  }
  GoldMapping g;
  try {
    g.db_id = doc.at("db_id").get<std::string>();
    std::set<std::string> tables;
    for (const auto& t : doc.at("tables")) {
      GoldTable gt;
      gt.table = t.at("table").get<std::string>();
      if (!tables.insert(gt.table).second) malformed("table " + gt.table + " listed twice");
      gt.classes = class_aliases(t.at("class"));
      std::set<std::string> columns;
      for (const auto& c : t.at("columns")) {
        GoldColumn gc;
        gc.column = c.at("column").get<std::string>();
        if (!columns.insert(gc.column).second) malformed("column " + gt.table + "." + gc.column + " listed twice");
        gc.accepted = property_aliases(c.at("property"));
        gt.columns.push_back(std::move(gc));
      }
      g.tables.push_back(std::move(gt));
    }
    std::set<ForeignKey> fks;
    for (const auto& f : doc.value("foreign_keys", json::array())) {
      ForeignKey fk{f.at("from_table").get<std::string>(), f.at("from_column").get<std::string>(),
                    f.at("to_table").get<std::string>(), f.at("to_column").get<std::string>()};
      if (!fks.insert(fk).second) malformed("foreign key " + fk_text(fk) + " listed twice");
      g.foreign_keys.push_back(std::move(fk));
    }
  } catch (const json::exception& e) {
    malformed(std::string("gold document: ") + e.what());
  }
  return g;
}

GoldMapping load_gold_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(errc::kGoldNotFound, "no gold file at " + path);
  return parse_gold(read_text(path, errc::kGoldNotFound, "gold file"));
}

GoldMapping load_gold(const std::string& dir, const std::string& db_id) {
  return load_gold_file((std::filesystem::path(dir) / (db_id + ".gold")).string());
}

std::string serialize_gold(const GoldMapping& gold) {
  json tables = json::array();
  for (const auto& t : gold.tables) {
    json columns = json::array();
    for (const auto& c : t.columns) columns.push_back({{"column", c.column}, {"property", alias_json(c.accepted)}});
    json cls = t.classes.size() == 1 ? json(t.classes[0]) : json(t.classes);
    tables.push_back({{"table", t.table}, {"class", cls}, {"columns", columns}});
  }
  json fks = json::array();
  for (const auto& fk : gold.foreign_keys) fks.push_back(fk_json(fk));
  json doc{{"format", kGoldFormat}, {"db_id", gold.db_id}, {"tables", tables}, {"foreign_keys", fks}};
  return doc.dump(2) + "\n";
}

void check_gold_against(const GoldMapping& gold, const ingest::Database& db) {
  std::map<std::string, std::vector<std::string>> columns;
  for (const auto& t : ingest::list_tables(db)) columns[t] = ingest::table_columns(db, t);
  auto require = [&](const std::string& table, const std::string& column) {
    auto it = columns.find(table);
    if (it == columns.end()) malformed("gold names table " + table + ", which the database lacks");
    if (!column.empty() && std::find(it->second.begin(), it->second.end(), column) == it->second.end()) {
      malformed("gold names column " + table + "." + column + ", which the database lacks");
    }
  };
  for (const auto& t : gold.tables) {
    require(t.table, "");
    for (const auto& c : t.columns) require(t.table, c.column);
  }
  for (const auto& fk : gold.foreign_keys) {
    require(fk.from_table, fk.from_column);
    require(fk.to_table, fk.to_column);
  }
}

Rational Rational::of(std::int64_t num, std::int64_t den) {
  if (den == 0) throw Error(errc::kInvalidArgument, "zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  auto g = std::gcd(num < 0 ? -num : num, den);
  return {num / g, den / g};
}

Rational Rational::operator+(const Rational& o) const {
  auto l = std::lcm(den, o.den);
  return of(num * (l / den) + o.num * (l / o.den), l);
}

Rational Rational::operator*(const Rational& o) const {
  auto a = of(num, o.den);
  auto b = of(o.num, den);
  return of(a.num * b.num, a.den * b.den);
}

std::string format_percent(std::size_t correct, std::size_t total) {
  if (total == 0) throw Error(errc::kEmptyInput, "percentage of an empty tally");
  // Hundredths of a percent, rounded half up: floor((20000c + t) / 2t).
  auto c = static_cast<unsigned long long>(correct);
  auto t = static_cast<unsigned long long>(total);
  auto hundredths = (20000ULL * c + t) / (2ULL * t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llu.%02llu", hundredths / 100, hundredths % 100);
  return buf;
}

Rational Tally::accuracy() const {
  if (total == 0) throw Error(errc::kEmptyInput, "accuracy of an empty tally");
  return Rational::of(to_i64(correct), to_i64(total));
}

std::optional<std::string> Tally::percent() const {
  if (total == 0) return std::nullopt;
  return format_percent(correct, total);
}

std::string to_string(ElementKind kind) {
  switch (kind) {
    case ElementKind::TableClass: return "table_class";
    case ElementKind::ColumnProperty: return "column_property";
    case ElementKind::ForeignKey: return "fk";
  }
  return "?";
}

EvalReport compare(const kg::SchemaMapping& mapping, const GoldMapping& gold, std::optional<double> seconds) {
  if (mapping.db_id != gold.db_id) {
    throw Error(errc::kMismatchedDatabase,
                "mapping is for '" + mapping.db_id + "' but the gold file is for '" + gold.db_id + "'");
  }
  EvalReport r;
  r.db_id = gold.db_id;
  r.timing.tables = mapping.tables.size();
  for (const auto& t : mapping.tables) r.timing.columns += t.columns.size();
  r.timing.seconds = seconds;

  auto record = [&](ElementResult e, Tally& category) {
    for (Tally* t : {&r.overall, &category, &r.by_confidence[static_cast<int>(e.confidence)]}) {
      ++t->total;
      if (e.correct) ++t->correct;
    }
    r.elements.push_back(std::move(e));
  };

  for (const auto& gt : gold.tables) {
    const auto* mt = mapping.find(gt.table);
    ElementResult e;
    e.kind = ElementKind::TableClass;
    e.table = gt.table;
    e.expected.assign(gt.classes.begin(), gt.classes.end());
    if (mt) {
      e.present = true;
      e.actual = mt->class_iri;
      e.confidence = mt->class_confidence;
      e.correct = std::find(gt.classes.begin(), gt.classes.end(), mt->class_iri) != gt.classes.end();
    }
    record(std::move(e), r.classes);

    for (const auto& gc : gt.columns) {
      ElementResult c;
      c.kind = ElementKind::ColumnProperty;
      c.table = gt.table;
      c.column = gc.column;
      c.expected = gc.accepted;
      const kg::ColumnMapping* mc = nullptr;
      if (mt) {
        auto it = std::find_if(mt->columns.begin(), mt->columns.end(),
                               [&](const auto& x) { return x.column == gc.column; });
        if (it != mt->columns.end()) mc = &*it;
      }
      if (mc) {
        c.present = true;
        c.actual = mc->property_iri;
        c.confidence = mc->confidence;
        c.correct = std::find(gc.accepted.begin(), gc.accepted.end(), mc->property_iri) != gc.accepted.end();
      }
      record(std::move(c), r.properties);
    }
  }

  std::set<ForeignKey> gold_fks(gold.foreign_keys.begin(), gold.foreign_keys.end());
  for (const auto& fk : gold.foreign_keys) {
    ElementResult e;
    e.kind = ElementKind::ForeignKey;
    e.table = fk.from_table;
    e.column = fk.from_column;
    e.fk = fk;
    auto it = std::find_if(mapping.fk_links.begin(), mapping.fk_links.end(), [&](const auto& l) { return l.key == fk; });
    if (it != mapping.fk_links.end()) {
      e.present = true;
      e.actual = it->predicate_iri;
      e.confidence = it->confidence;
      e.correct = true;
    }
    record(std::move(e), r.fks);
  }
  for (const auto& l : mapping.fk_links) {
    if (!gold_fks.contains(l.key)) ++r.extra_fk_links;
  }
  return r;
}

namespace {

json tally_json(const Tally& t) {
  auto p = t.percent();
  return {{"total", t.total}, {"correct", t.correct}, {"percent", p ? json(*p) : json(nullptr)}};
}

}  // namespace

json report_to_json(const EvalReport& r) {
  json buckets = json::object();
  for (auto c : {Confidence::High, Confidence::Medium, Confidence::Low}) {
    buckets[std::string(to_string(c))] = tally_json(r.bucket(c));
  }
  json elements = json::array();
  for (const auto& e : r.elements) {
    json expected = json::array();
    for (const auto& a : e.expected) expected.push_back(a ? json(*a) : json(nullptr));
    json j{{"kind", to_string(e.kind)},
           {"table", e.table},
           {"expected", expected},
           {"actual", e.actual ? json(*e.actual) : json(nullptr)},
           {"present", e.present},
           {"confidence", std::string(to_string(e.confidence))},
           {"correct", e.correct}};
    if (e.kind == ElementKind::ColumnProperty) j["column"] = e.column;
    if (e.kind == ElementKind::ForeignKey) j["fk"] = fk_json(e.fk);
    elements.push_back(std::move(j));
  }
  return {{"db_id", r.db_id},
          {"overall", tally_json(r.overall)},
          {"by_confidence", buckets},
          {"by_kind", {{"classes", tally_json(r.classes)}, {"properties", tally_json(r.properties)}, {"fks", tally_json(r.fks)}}},
          {"extra_fk_links", r.extra_fk_links},
          {"timing",
           {{"tables", r.timing.tables},
            {"columns", r.timing.columns},
            {"seconds", r.timing.seconds ? json(*r.timing.seconds) : json(nullptr)}}},
          {"elements", elements}};
}

namespace {

// First column left-aligned, the rest right-aligned, two spaces between.
std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    std::string l;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::string pad(width[i] - cells[i].size(), ' ');
      if (i == 0) {
        l += cells[i] + pad;
      } else {
        l += "  " + pad + cells[i];
      }
    }
    while (!l.empty() && l.back() == ' ') l.pop_back();
    out += l + "\n";
  };
  line(header);
  for (const auto& row : rows) line(row);
  return out;
}

std::string seconds_text(const std::optional<double>& s) {
  if (!s) return "/";
  if (*s == std::floor(*s) && *s < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", *s);
    return buf;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *s);
  return buf;
}

}  // namespace

std::string render_report(const std::vector<EvalReport>& reports, const std::vector<std::string>& labels) {
  std::vector<std::vector<std::string>> accuracy;
  std::vector<std::vector<std::string>> timing;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const auto& label = i < labels.size() ? labels[i] : r.db_id;
    auto cell = [](const Tally& t) { return t.percent().value_or("/"); };
    accuracy.push_back({label, std::to_string(r.overall.total), cell(r.overall), cell(r.bucket(Confidence::High)),
                        cell(r.bucket(Confidence::Medium)), cell(r.bucket(Confidence::Low))});
    timing.push_back({label, std::to_string(r.timing.tables), std::to_string(r.timing.columns),
                      seconds_text(r.timing.seconds)});
  }
  return "Accuracy\n" +
         render_table({"Database", "Elements", "Overall (%)", "HIGH (%)", "MEDIUM (%)", "LOW (%)"}, accuracy) +
         "\nExecution time\n" + render_table({"Database", "Tables", "Columns", "Time (s)"}, timing);
}

}  // namespace schemamap::eval
