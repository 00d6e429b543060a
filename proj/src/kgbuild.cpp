#include "schemamap/kgbuild.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "schemamap/errors.hpp"

namespace schemamap::kg {

using nlohmann::json;
using ingest::Cell;
using ingest::InferredType;

const TableMapping* SchemaMapping::find(std::string_view table) const {
  for (const auto& t : tables) {
    if (t.table == table) return &t;
  }
  return nullptr;
}

std::string percent_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
      out.push_back(ch);
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string link_predicate(const std::optional<std::string>& from_property, std::string_view from_column,
                           const vocab::Vocabulary& vocabulary) {
  if (from_property) {
    if (const auto* term = vocabulary.find(*from_property); term && term->kind == vocab::TermKind::Property) {
      for (const auto& range : term->range_includes) {
        const auto* target = vocabulary.find(range);
        if (target && target->kind == vocab::TermKind::Class && !vocabulary.is_datatype(range)) return *from_property;
      }
    }
  }
  return std::string(kLinkNamespace) + "ref_" + percent_encode(from_column);
}

// ---- assembly --------------------------------------------------------------

SchemaMapping assemble_mapping(std::string db_id, const std::vector<ingest::TableProfile>& profiles,
                               const std::vector<agents::MappingProposal>& proposals,
                               const agents::RelationProposal& relation, const agents::ValidationEdits* edits,
                               const vocab::Vocabulary& vocabulary) {
  auto inconsistent = [](const std::string& what) { return Error(errc::kInconsistentInputs, what); };
  if (proposals.size() != profiles.size()) {
    throw inconsistent(std::to_string(proposals.size()) + " proposals for " + std::to_string(profiles.size()) +
                       " profiled tables");
  }
  SchemaMapping mapping;
  mapping.db_id = std::move(db_id);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& profile = profiles[i];
    const auto& proposal = proposals[i];
    if (proposal.table != profile.name) {
      throw inconsistent("proposal " + std::to_string(i) + " is for " + proposal.table + ", expected " + profile.name);
    }
    if (proposal.columns.size() != profile.columns.size()) {
      throw inconsistent("proposal for " + profile.name + " does not cover its columns");
    }
    TableMapping t;
    t.table = profile.name;
    t.class_iri = proposal.class_iri;
    t.class_confidence = proposal.class_confidence;
    for (std::size_t c = 0; c < profile.columns.size(); ++c) {
      const auto& m = proposal.columns[c];
      if (m.column != profile.columns[c].name) {
        throw inconsistent("proposal for " + profile.name + " lists " + m.column + " where " +
                           profile.columns[c].name + " was expected");
      }
      t.columns.push_back({m.column, profile.columns[c].inferred_type, m.property_iri, m.confidence, m.rationale});
    }
    mapping.tables.push_back(std::move(t));
  }

  auto column_of = [&](std::string_view table, std::string_view column) -> const ColumnMapping* {
    const auto* t = mapping.find(table);
    if (!t) return nullptr;
    for (const auto& c : t->columns) {
      if (c.column == column) return &c;
    }
    return nullptr;
  };
  for (const auto& pk : relation.primary_keys) {
    auto* t = const_cast<TableMapping*>(mapping.find(pk.table));
    if (!t) throw inconsistent("primary key for unknown table " + pk.table);
    for (const auto& c : pk.columns) {
      if (!column_of(pk.table, c)) throw inconsistent("primary key of " + pk.table + " names unknown column " + c);
    }
    t->primary_key = pk.columns;
  }
  for (const auto& e : relation.foreign_keys) {
    const auto* from = column_of(e.key.from_table, e.key.from_column);
    if (!from || !column_of(e.key.to_table, e.key.to_column)) {
      throw inconsistent("foreign key " + e.key.from_table + "." + e.key.from_column + " -> " + e.key.to_table + "." +
                         e.key.to_column + " names an unknown table or column");
    }
    mapping.fk_links.push_back({e.key, link_predicate(from->property_iri, e.key.from_column, vocabulary), e.confidence});
  }

  mapping.provenance.relation_confidence = relation.confidence;
  mapping.provenance.dropped_edges = relation.dropped_edges;
  if (edits) {
    mapping.provenance.validator_confidence = edits->confidence;
    mapping.provenance.edits = edits->edits;
  }
  return mapping;
}

SchemaMapping assemble_mapping(const agents::MapRun& run, const vocab::Vocabulary& vocabulary,
                               const std::string& index_fingerprint) {
  SchemaMapping mapping;
  if (run.profiles.empty()) {
    mapping.db_id = run.db_id;
  } else {
    if (!run.validated_relation || !run.edits) {
      throw Error(errc::kInconsistentInputs, "run for " + run.db_id + " did not reach the validator");
    }
    mapping = assemble_mapping(run.db_id, run.profiles, run.validated_proposals, *run.validated_relation, &*run.edits,
                               vocabulary);
    // Dropped edges and the relation's own confidence come from the agent's
    // answer, before validation.
    mapping.provenance.relation_confidence = run.relation->confidence;
    mapping.provenance.dropped_edges = run.relation->dropped_edges;
  }
  mapping.final_confidence = run.final_confidence;
  mapping.provenance.index_fingerprint = index_fingerprint;
  mapping.provenance.mapping_retries = run.mapping_retries;
  mapping.provenance.relation_retries = run.relation_retries;
  mapping.provenance.validator_retries = run.validator_retries;
  mapping.provenance.warnings = run.warnings;
  return mapping;
}

// ---- mapping document ------------------------------------------------------

namespace {

constexpr const char* kMappingFormat = "schemamap-mapping/1";

json fk_json(const ForeignKey& fk) {
  return {{"from_table", fk.from_table}, {"from_column", fk.from_column}, {"to_table", fk.to_table},
          {"to_column", fk.to_column}};
}

json edit_json(const agents::Edit& e) {
  json target;
  switch (e.target.type) {
    case agents::EditTarget::Type::TableClass: target = {{"type", "table_class"}, {"table", e.target.table}}; break;
    case agents::EditTarget::Type::ColumnProperty:
      target = {{"type", "column_property"}, {"table", e.target.table}, {"column", e.target.column}};
      break;
    case agents::EditTarget::Type::ForeignKey:
      target = fk_json(e.target.fk);
      target["type"] = "fk";
      break;
  }
  json out{{"kind", std::string(agents::to_string(e.kind))}, {"target", target}};
  if (e.replacement_iri) out["replacement"] = *e.replacement_iri;
  if (e.replacement_fk) out["replacement"] = fk_json(*e.replacement_fk);
  return out;
}

std::string conf_text(const std::optional<Confidence>& c) {
  return c ? std::string(to_string(*c)) : std::string("NOT_APPLICABLE");
}

[[noreturn]] void malformed(const std::string& why) { throw Error(errc::kMalformedMapping, why); }

Confidence conf_of(const json& v) {
  auto c = v.is_string() ? parse_confidence(v.get<std::string>()) : std::nullopt;
  if (!c) malformed("bad confidence value " + v.dump());
  return *c;
}

std::optional<Confidence> optional_conf_of(const json& v) {
  if (v.is_string() && v.get<std::string>() == "NOT_APPLICABLE") return std::nullopt;
  return conf_of(v);
}

ForeignKey fk_of(const json& v) {
  return {v.at("from_table").get<std::string>(), v.at("from_column").get<std::string>(),
          v.at("to_table").get<std::string>(), v.at("to_column").get<std::string>()};
}

InferredType inferred_of(const std::string& s) {
  for (auto t : {InferredType::Integer, InferredType::Real, InferredType::Text, InferredType::Date,
                 InferredType::Boolean, InferredType::Unknown}) {
    if (ingest::to_string(t) == s) return t;
  }
  malformed("unknown inferred type " + s);
}

agents::Edit edit_of(const json& v) {
  agents::Edit e;
  auto kind = v.at("kind").get<std::string>();
  if (kind == "Keep") {
    e.kind = agents::EditKind::Keep;
  } else if (kind == "Remap") {
    e.kind = agents::EditKind::Remap;
  } else if (kind == "Remove") {
    e.kind = agents::EditKind::Remove;
  } else {
    malformed("unknown edit kind " + kind);
  }
  const auto& t = v.at("target");
  auto type = t.at("type").get<std::string>();
  if (type == "table_class") {
    e.target.type = agents::EditTarget::Type::TableClass;
    e.target.table = t.at("table").get<std::string>();
  } else if (type == "column_property") {
    e.target.type = agents::EditTarget::Type::ColumnProperty;
    e.target.table = t.at("table").get<std::string>();
    e.target.column = t.at("column").get<std::string>();
  } else if (type == "fk") {
    e.target.type = agents::EditTarget::Type::ForeignKey;
    e.target.fk = fk_of(t);
  } else {
    malformed("unknown edit target type " + type);
  }
  if (auto r = v.find("replacement"); r != v.end()) {
    if (r->is_string()) {
      e.replacement_iri = r->get<std::string>();
    } else {
      e.replacement_fk = fk_of(*r);
    }
  }
  return e;
}

bool valid_iri(std::string_view iri) {
  auto colon = iri.find(':');
  if (colon == std::string_view::npos || colon == 0) return false;
  for (char ch : iri) {
    auto c = static_cast<unsigned char>(ch);
    if (c <= 0x20 || ch == '<' || ch == '>' || ch == '"' || ch == '{' || ch == '}' || ch == '|' || ch == '^' ||
        ch == '`' || ch == '\\') {
      return false;
    }
  }
  return true;
}

}  // namespace

std::string serialize_mapping(const SchemaMapping& m) {
  json doc;
  doc["format"] = kMappingFormat;
  doc["db_id"] = m.db_id;
  doc["final_confidence"] = conf_text(m.final_confidence);
  doc["tables"] = json::array();
  for (const auto& t : m.tables) {
    json cols = json::array();
    for (const auto& c : t.columns) {
      cols.push_back({{"column", c.column},
                      {"inferred_type", std::string(ingest::to_string(c.inferred_type))},
                      {"property_iri", c.property_iri ? json(*c.property_iri) : json(nullptr)},
                      {"confidence", std::string(to_string(c.confidence))},
                      {"rationale", c.rationale}});
    }
    doc["tables"].push_back({{"table", t.table},
                             {"class_iri", t.class_iri},
                             {"class_confidence", std::string(to_string(t.class_confidence))},
                             {"primary_key", t.primary_key},
                             {"columns", cols}});
  }
  doc["fk_links"] = json::array();
  for (const auto& l : m.fk_links) {
    auto j = fk_json(l.key);
    j["predicate_iri"] = l.predicate_iri;
    j["confidence"] = std::string(to_string(l.confidence));
    doc["fk_links"].push_back(j);
  }
  const auto& p = m.provenance;
  json prov;
  prov["index_fingerprint"] = p.index_fingerprint;
  prov["mapping_retries"] = p.mapping_retries;
  prov["relation_retries"] = p.relation_retries;
  prov["validator_retries"] = p.validator_retries;
  prov["relation_confidence"] = conf_text(p.relation_confidence);
  prov["validator_confidence"] = conf_text(p.validator_confidence);
  prov["dropped_edges"] = json::array();
  for (const auto& e : p.dropped_edges) {
    auto j = fk_json(e.key);
    j["confidence"] = std::string(to_string(e.confidence));
    prov["dropped_edges"].push_back(j);
  }
  prov["edits"] = json::array();
  for (const auto& e : p.edits) prov["edits"].push_back(edit_json(e));
  prov["warnings"] = p.warnings;
  doc["provenance"] = prov;
  return doc.dump(2) + "\n";
}

SchemaMapping parse_mapping(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    malformed(std::string("mapping is not JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kMappingFormat) {
    malformed(std::string("not a ") + kMappingFormat + " document");
  }
  SchemaMapping m;
  try {
    m.db_id = doc.at("db_id").get<std::string>();
    m.final_confidence = optional_conf_of(doc.at("final_confidence"));
    for (const auto& t : doc.at("tables")) {
      TableMapping tm;
      tm.table = t.at("table").get<std::string>();
      tm.class_iri = t.at("class_iri").get<std::string>();
      if (!valid_iri(tm.class_iri)) malformed("bad class IRI " + tm.class_iri);
      tm.class_confidence = conf_of(t.at("class_confidence"));
      tm.primary_key = t.at("primary_key").get<std::vector<std::string>>();
      for (const auto& c : t.at("columns")) {
        ColumnMapping cm;
        cm.column = c.at("column").get<std::string>();
        cm.inferred_type = inferred_of(c.at("inferred_type").get<std::string>());
        if (const auto& p = c.at("property_iri"); !p.is_null()) {
          cm.property_iri = p.get<std::string>();
          if (!valid_iri(*cm.property_iri)) malformed("bad property IRI " + *cm.property_iri);
        }
        cm.confidence = conf_of(c.at("confidence"));
        cm.rationale = c.value("rationale", "");
        tm.columns.push_back(std::move(cm));
      }
      if (m.find(tm.table)) malformed("table " + tm.table + " listed twice");
      m.tables.push_back(std::move(tm));
    }
    for (const auto& l : doc.at("fk_links")) {
      FkLink link{fk_of(l), l.at("predicate_iri").get<std::string>(), conf_of(l.at("confidence"))};
      if (!valid_iri(link.predicate_iri)) malformed("bad link predicate " + link.predicate_iri);
      m.fk_links.push_back(std::move(link));
    }
    const auto& p = doc.at("provenance");
    m.provenance.index_fingerprint = p.at("index_fingerprint").get<std::string>();
    m.provenance.mapping_retries = p.at("mapping_retries").get<std::map<std::string, int>>();
    m.provenance.relation_retries = p.at("relation_retries").get<int>();
    m.provenance.validator_retries = p.at("validator_retries").get<int>();
    m.provenance.relation_confidence = optional_conf_of(p.at("relation_confidence"));
    m.provenance.validator_confidence = optional_conf_of(p.at("validator_confidence"));
    for (const auto& e : p.at("dropped_edges")) m.provenance.dropped_edges.push_back({fk_of(e), conf_of(e.at("confidence"))});
    for (const auto& e : p.at("edits")) m.provenance.edits.push_back(edit_of(e));
    m.provenance.warnings = p.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    malformed(std::string("mapping document: ") + e.what());
  }
  // Links must join mapped tables and columns.
  for (const auto& l : m.fk_links) {
    for (auto [table, column] : {std::pair{&l.key.from_table, &l.key.from_column}, std::pair{&l.key.to_table, &l.key.to_column}}) {
      const auto* t = m.find(*table);
      if (!t || std::none_of(t->columns.begin(), t->columns.end(), [&](const auto& c) { return c.column == *column; })) {
        malformed("link endpoint " + *table + "." + *column + " is not in the mapping");
      }
    }
  }
  for (const auto& t : m.tables) {
    for (const auto& k : t.primary_key) {
      if (std::none_of(t.columns.begin(), t.columns.end(), [&](const auto& c) { return c.column == k; })) {
        malformed("primary key column " + t.table + "." + k + " is not in the mapping");
      }
    }
  }
  return m;
}

SchemaMapping load_mapping(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIoError, "cannot read mapping " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_mapping(buffer.str());
}

void save_mapping(const SchemaMapping& mapping, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::kIoError, "cannot write mapping " + path);
  out << serialize_mapping(mapping);
  if (!out) throw Error(errc::kIoError, "short write: " + path);
}

// ---- materialization -------------------------------------------------------

namespace {

std::string double_lexical(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "INF" : "-INF";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string hex_of(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (char ch : bytes) {
    auto c = static_cast<unsigned char>(ch);
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xF]);
  }
  return out;
}

std::string plain_form(const Cell& cell) {
  if (cell.kind == Cell::Kind::Blob) return hex_of(cell.text);
  return cell.render();
}

Term literal_for(const Cell& cell, InferredType type) {
  const std::string xsd(kXsd);
  if (type != InferredType::Text && type != InferredType::Unknown && ingest::parses_as(cell, type)) {
    switch (type) {
      case InferredType::Integer: {
        if (cell.kind == Cell::Kind::Integer) return Term::literal(std::to_string(cell.integer), xsd + "integer");
        std::string_view t = cell.text;
        if (!t.empty() && t.front() == '+') t.remove_prefix(1);
        std::int64_t v = 0;
        std::from_chars(t.data(), t.data() + t.size(), v);
        return Term::literal(std::to_string(v), xsd + "integer");
      }
      case InferredType::Real: {
        if (cell.kind == Cell::Kind::Integer) return Term::literal(double_lexical(static_cast<double>(cell.integer)), xsd + "double");
        if (cell.kind == Cell::Kind::Real) return Term::literal(double_lexical(cell.real), xsd + "double");
        return Term::literal(double_lexical(std::strtod(cell.text.c_str(), nullptr)), xsd + "double");
      }
      case InferredType::Date: return Term::literal(cell.text, xsd + "date");
      case InferredType::Boolean: {
        std::string t = cell.text;
        for (auto& ch : t) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        return Term::literal(t == "true" || t == "yes" ? "true" : "false", xsd + "boolean");
      }
      default: break;
    }
  }
  return Term::literal(plain_form(cell));
}

// Values equal under SQLite's numeric comparison share a key.
std::string join_key(const Cell& cell) {
  switch (cell.kind) {
    case Cell::Kind::Integer: return "n:" + std::to_string(cell.integer);
    case Cell::Kind::Real: {
      if (std::isfinite(cell.real) && std::trunc(cell.real) == cell.real && std::fabs(cell.real) < 9.0e15) {
        return "n:" + std::to_string(static_cast<std::int64_t>(cell.real));
      }
      return "n:" + double_lexical(cell.real);
    }
    case Cell::Kind::Text: return "t:" + cell.text;
    case Cell::Kind::Blob: return "b:" + cell.text;
    case Cell::Kind::Null: break;
  }
  return "";
}

struct LoadedTable {
  const TableMapping* mapping = nullptr;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<std::string> subjects;
  std::size_t surrogates = 0;
};

std::size_t index_of(const std::vector<std::string>& columns, std::string_view name) {
  return static_cast<std::size_t>(std::find(columns.begin(), columns.end(), name) - columns.begin());
}

}  // namespace

TripleSet materialize(const ingest::Database& db, const SchemaMapping& mapping, std::string_view base_iri,
                      MaterializeReport* report) {
  std::string base(base_iri);
  while (!base.empty() && base.back() == '/') base.pop_back();
  if (!valid_iri(base) || base.find("://") == std::string::npos) {
    throw Error(errc::kInvalidArgument, "base IRI must be absolute: " + std::string(base_iri));
  }

  std::map<std::string, LoadedTable> loaded;
  for (const auto& t : mapping.tables) {
    if (!ingest::has_table(db, t.table)) {
      throw Error(errc::kInconsistentInputs, "mapping names table " + t.table + " which the database lacks");
    }
    LoadedTable lt;
    lt.mapping = &t;
    lt.columns = ingest::table_columns(db, t.table);
    for (const auto& c : t.columns) {
      if (index_of(lt.columns, c.column) == lt.columns.size()) {
        throw Error(errc::kInconsistentInputs, "mapping names column " + t.table + "." + c.column +
                                                   " which the database lacks");
      }
    }
    lt.rows = ingest::read_rows(db, t.table);
    std::vector<std::size_t> pk;
    for (const auto& k : t.primary_key) pk.push_back(index_of(lt.columns, k));
    const std::string prefix = base + "/" + percent_encode(t.table) + "/";
    for (std::size_t r = 0; r < lt.rows.size(); ++r) {
      const auto& row = lt.rows[r];
      bool usable = !pk.empty();
      std::string id;
      for (std::size_t i = 0; i < pk.size() && usable; ++i) {
        if (row[pk[i]].is_null()) {
          usable = false;
          break;
        }
        if (i) id += "_";
        id += percent_encode(plain_form(row[pk[i]]));
      }
      if (!usable) {
        id = "row" + std::to_string(r + 1);
        ++lt.surrogates;
      }
      lt.subjects.push_back(prefix + id);
    }
    loaded.emplace(t.table, std::move(lt));
  }

  MaterializeReport local;
  TripleSet triples;
  for (const auto& t : mapping.tables) {
    auto& lt = loaded.at(t.table);
    auto& counts = local.tables[t.table];
    counts.rows = lt.rows.size();
    counts.surrogate_subjects = lt.surrogates;
    std::vector<std::pair<std::size_t, const ColumnMapping*>> mapped;
    for (const auto& c : t.columns) {
      if (c.property_iri) {
        mapped.emplace_back(index_of(lt.columns, c.column), &c);
      } else {
        ++local.unmapped_columns;
      }
    }
    for (std::size_t r = 0; r < lt.rows.size(); ++r) {
      const auto& subject = lt.subjects[r];
      triples.push_back({subject, std::string(kRdfType), Term::iri(t.class_iri)});
      ++counts.type_triples;
      for (const auto& [col, cm] : mapped) {
        const auto& cell = lt.rows[r][col];
        if (cell.is_null()) continue;
        triples.push_back({subject, *cm->property_iri, literal_for(cell, cm->inferred_type)});
        ++counts.literal_triples;
      }
    }
  }

  for (const auto& link : mapping.fk_links) {
    auto from_it = loaded.find(link.key.from_table);
    auto to_it = loaded.find(link.key.to_table);
    if (from_it == loaded.end() || to_it == loaded.end()) {
      throw Error(errc::kInconsistentInputs, "link joins a table that is not mapped");
    }
    auto& from = from_it->second;
    const auto& to = to_it->second;
    const auto from_col = index_of(from.columns, link.key.from_column);
    const auto to_col = index_of(to.columns, link.key.to_column);
    std::unordered_map<std::string, std::size_t> targets;
    for (std::size_t r = 0; r < to.rows.size(); ++r) {
      const auto& cell = to.rows[r][to_col];
      if (!cell.is_null()) targets.emplace(join_key(cell), r);  // first row wins
    }
    auto& counts = local.tables[link.key.from_table];
    for (std::size_t r = 0; r < from.rows.size(); ++r) {
      const auto& cell = from.rows[r][from_col];
      if (cell.is_null()) continue;
      auto hit = targets.find(join_key(cell));
      if (hit == targets.end()) {
        ++counts.dangling_fk_values;
        ++local.dangling_fk_values;
        continue;
      }
      triples.push_back({from.subjects[r], link.predicate_iri, Term::iri(to.subjects[hit->second])});
      ++counts.link_triples;
    }
  }
  local.triples = triples.size();
  if (report) *report = std::move(local);
  return triples;
}

// ---- N-Triples -------------------------------------------------------------

namespace {

std::string escape_literal(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 2);
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default:
        if (c < 0x20 || c == 0x7F) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04X", c);
          out += buf;
        } else {
          out.push_back(ch);
        }
    }
  }
  return out;
}

std::string serialize_term(const Term& t) {
  if (t.kind == Term::Kind::Iri) return "<" + t.value + ">";
  std::string out = "\"" + escape_literal(t.value) + "\"";
  if (!t.language.empty()) {
    out += "@" + t.language;
  } else if (!t.datatype.empty()) {
    out += "^^<" + t.datatype + ">";
  }
  return out;
}

}  // namespace

std::string ntriples_line(const Triple& triple) {
  return "<" + triple.subject + "> <" + triple.predicate + "> " + serialize_term(triple.object) + " .";
}

std::string serialize_ntriples(TripleSet triples) {
  struct Keyed {
    std::string s, p, o;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(triples.size());
  for (const auto& t : triples) keyed.push_back({"<" + t.subject + ">", "<" + t.predicate + ">", serialize_term(t.object)});
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.s, a.p, a.o) < std::tie(b.s, b.p, b.o);
  });
  std::string out;
  for (const auto& k : keyed) {
    out += k.s;
    out += ' ';
    out += k.p;
    out += ' ';
    out += k.o;
    out += " .\n";
  }
  return out;
}

namespace {

class Reader {
 public:
  Reader(std::string_view line, std::size_t number) : s_(line), line_(number) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(errc::kMalformedNTriples, "line " + std::to_string(line_) + ": " + why);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }

  std::string iri() {
    if (peek() != '<') fail("expected '<'");
    ++pos_;
    std::string out;
    while (!at_end() && s_[pos_] != '>') {
      if (s_[pos_] == '\\') {
        ++pos_;
        append_utf8(out, unicode_escape());
        continue;
      }
      auto c = static_cast<unsigned char>(s_[pos_]);
      if (c <= 0x20 || s_[pos_] == '<' || s_[pos_] == '"' || s_[pos_] == '{' || s_[pos_] == '}' || s_[pos_] == '|' ||
          s_[pos_] == '^' || s_[pos_] == '`') {
        fail("character not allowed in an IRI");
      }
      out.push_back(s_[pos_++]);
    }
    if (at_end()) fail("unterminated IRI");
    ++pos_;
    return out;
  }

  Term literal() {
    ++pos_;  // opening quote
    std::string value;
    for (;;) {
      if (at_end()) fail("unterminated literal");
      char c = s_[pos_++];
      if (c == '"') break;
      if (c == '\n' || c == '\r') fail("raw line break in literal");
      if (c != '\\') {
        value.push_back(c);
        continue;
      }
      if (at_end()) fail("dangling escape");
      char e = s_[pos_++];
      switch (e) {
        case 't': value.push_back('\t'); break;
        case 'b': value.push_back('\b'); break;
        case 'n': value.push_back('\n'); break;
        case 'r': value.push_back('\r'); break;
        case 'f': value.push_back('\f'); break;
        case '"': value.push_back('"'); break;
        case '\'': value.push_back('\''); break;
        case '\\': value.push_back('\\'); break;
        case 'u':
        case 'U':
          --pos_;
          append_utf8(value, unicode_escape());
          break;
        default: fail(std::string("unknown escape \\") + e);
      }
    }
    Term t = Term::literal(std::move(value));
    if (peek() == '^') {
      if (s_.substr(pos_, 2) != "^^") fail("expected '^^'");
      pos_ += 2;
      t.datatype = iri();
    } else if (peek() == '@') {
      ++pos_;
      auto start = pos_;
      while (!at_end() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '-')) ++pos_;
      if (pos_ == start) fail("empty language tag");
      t.language = std::string(s_.substr(start, pos_ - start));
    }
    return t;
  }

  void expect_end() {
    skip_ws();
    if (peek() != '.') fail("expected '.'");
    ++pos_;
    skip_ws();
    if (peek() == '#') return;
    if (!at_end()) fail("trailing characters after '.'");
  }

 private:
  // At 'u' or 'U' after a backslash.
  std::uint32_t unicode_escape() {
    if (at_end()) fail("dangling escape");
    char kind = s_[pos_++];
    std::size_t digits = kind == 'u' ? 4 : kind == 'U' ? 8 : 0;
    if (!digits) fail("only \\u and \\U escapes are allowed here");
    if (pos_ + digits > s_.size()) fail("short unicode escape");
    std::uint32_t cp = 0;
    auto res = std::from_chars(s_.data() + pos_, s_.data() + pos_ + digits, cp, 16);
    if (res.ec != std::errc() || res.ptr != s_.data() + pos_ + digits) fail("bad unicode escape");
    pos_ += digits;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail("escape is not a Unicode scalar value");
    return cp;
  }

  static void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace

TripleSet parse_ntriples(std::string_view text) {
  TripleSet out;
  std::size_t number = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    Reader r(line, number);
    r.skip_ws();
    if (r.at_end() || r.peek() == '#') continue;
    if (r.peek() == '_') r.fail("blank nodes are not supported");
    Triple t;
    t.subject = r.iri();
    r.skip_ws();
    t.predicate = r.iri();
    r.skip_ws();
    if (r.peek() == '<') {
      t.object = Term::iri(r.iri());
    } else if (r.peek() == '"') {
      t.object = r.literal();
    } else {
      r.fail("expected an IRI or a literal as object");
    }
    r.expect_end();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace schemamap::kg
