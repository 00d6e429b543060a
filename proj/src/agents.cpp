#include "schemamap/agents.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <exception>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "resources.hpp"

namespace schemamap::agents {

using nlohmann::json;

namespace {

// ---- text helpers ----------------------------------------------------------

std::string fill(std::string_view tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    auto open = tpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tpl.substr(pos, open - pos));
    auto key = std::string(tpl.substr(open + 2, close - open - 2));
    auto it = values.find(key);
    if (it == values.end()) throw Error(errc::kInvalidArgument, "prompt template has no value for {{" + key + "}}");
    out += it->second;
    pos = close + 2;
  }
  out.append(tpl.substr(pos));
  return out;
}

std::string number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

std::string score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string one_line(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '\n') {
      out += "; ";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string fk_text(const ForeignKey& fk) {
  return fk.from_table + "." + fk.from_column + " -> " + fk.to_table + "." + fk.to_column;
}

std::string column_line(const ingest::ColumnProfile& c) {
  const auto& s = c.stats;
  std::string line = "- " + c.name + ": declared " + (c.declared_type.empty() ? "(none)" : c.declared_type) +
                     ", inferred " + std::string(ingest::to_string(c.inferred_type)) + ", nulls " +
                     std::to_string(s.null_count) + ", distinct " + std::to_string(s.distinct_count);
  if (s.min) line += ", min " + *s.min;
  if (s.max) line += ", max " + *s.max;
  if (s.mean) line += ", mean " + number(*s.mean);
  if (s.avg_length) line += ", avg length " + number(*s.avg_length);
  if (!s.top_values.empty()) {
    std::vector<std::string> top;
    for (const auto& v : s.top_values) top.push_back(v.value + " (" + std::to_string(v.frequency) + ")");
    line += ", top values: " + join(top, " | ");
  }
  if (c.description) line += ", description: " + one_line(*c.description);
  return line;
}

std::string candidate_lines(const std::vector<Candidate>& list, std::string_view indent) {
  if (list.empty()) return std::string(indent) + "(none)";
  std::vector<std::string> lines;
  for (const auto& c : list) {
    lines.push_back(std::string(indent) + "- " + c.iri + " (" + score(c.score) + ") " + one_line(c.rendered_text));
  }
  return join(lines, "\n");
}

json response_format(std::string_view name, std::string_view schema_resource) {
  auto schema = json::parse(detail::resource(schema_resource));
  schema.erase("$schema");
  schema.erase("title");
  return {{"type", "json_schema"}, {"json_schema", {{"name", name}, {"strict", false}, {"schema", schema}}}};
}

// ---- reply parsing ---------------------------------------------------------

[[noreturn]] void reject(const std::string& why) { throw Error(errc::kAgentOutputInvalid, why); }

json parse_document(std::string_view text) {
  auto begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) reject("the reply is empty");
  text.remove_prefix(begin);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  // Tolerate a ```json fence around the document.
  if (text.starts_with("```")) {
    auto nl = text.find('\n');
    if (nl == std::string_view::npos || !text.ends_with("```")) reject("unterminated code fence");
    text = text.substr(nl + 1, text.size() - nl - 1 - 3);
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    reject(std::string("the reply is not valid JSON (") + e.what() + ")");
  }
  if (!doc.is_object()) reject("the reply must be a JSON object");
  return doc;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) reject(where + " is missing \"" + key + "\"");
  return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_string()) reject(where + " field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

const json& array_field(const json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_array()) reject(where + " field \"" + key + "\" must be an array");
  return v;
}

Confidence confidence_field(const json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  std::optional<Confidence> c;
  if (v.is_string()) c = parse_confidence(v.get<std::string>());
  if (!c) reject(where + " field \"" + key + "\" must be one of HIGH, MEDIUM, LOW");
  return *c;
}

ForeignKey fk_fields(const json& obj, const std::string& where) {
  if (!obj.is_object()) reject(where + " must be an object");
  return {string_field(obj, "from_table", where), string_field(obj, "from_column", where),
          string_field(obj, "to_table", where), string_field(obj, "to_column", where)};
}

const TableProfile* find_profile(const std::vector<TableProfile>& profiles, std::string_view table) {
  for (const auto& p : profiles) {
    if (p.name == table) return &p;
  }
  return nullptr;
}

bool has_column(const TableProfile& p, std::string_view column) {
  return std::any_of(p.columns.begin(), p.columns.end(), [&](const auto& c) { return c.name == column; });
}

bool endpoints_exist(const std::vector<TableProfile>& profiles, const ForeignKey& fk) {
  const auto* from = find_profile(profiles, fk.from_table);
  const auto* to = find_profile(profiles, fk.to_table);
  return from && to && has_column(*from, fk.from_column) && has_column(*to, fk.to_column);
}

// ---- conversation loop -----------------------------------------------------

template <class Parse>
auto converse(chat::ChatBackend& backend, std::string label, std::string system, std::string user,
              const json& format, int attempts, Parse&& parse) {
  if (attempts < 1) throw Error(errc::kInvalidArgument, "attempt budget must be >= 1");
  chat::ChatRequest request{std::move(label), {{"system", std::move(system)}, {"user", std::move(user)}}, format};
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    auto reply = backend.send(request);
    try {
      auto value = parse(reply);
      return std::pair{std::move(value), attempt};
    } catch (const Error& e) {
      if (e.code() != errc::kAgentOutputInvalid) throw;
      last_error = e.what();
      request.messages.push_back({"assistant", reply});
      request.messages.push_back({"user", fill(detail::resource("prompts/correction.txt"), {{"error", last_error}})});
    }
  }
  throw Error(errc::kAgentOutputInvalid, request.label + ": reply rejected " + std::to_string(attempts) +
                                             " times; last reason: " + last_error);
}

const CandidateSet* find_candidates(const std::vector<CandidateSet>& sets, std::string_view table) {
  for (const auto& s : sets) {
    if (s.table == table) return &s;
  }
  return nullptr;
}

MappingProposal* find_proposal(std::vector<MappingProposal>& proposals, std::string_view table) {
  for (auto& p : proposals) {
    if (p.table == table) return &p;
  }
  return nullptr;
}

std::string mapped_table_block(const TableProfile& profile, const MappingProposal* proposal, bool with_rationale) {
  std::string out = "## " + profile.name + " (rows: " + std::to_string(profile.row_count) + ")\n";
  if (profile.description) out += "Description: " + one_line(*profile.description) + "\n";
  if (proposal) {
    out += "Class: " + proposal->class_iri + " (" + std::string(to_string(proposal->class_confidence)) + ")\n";
  }
  out += "Declared primary key: " +
         (profile.declared_primary_key.empty() ? std::string("(none)") : join(profile.declared_primary_key, ", ")) +
         "\n";
  std::vector<std::string> fks;
  for (const auto& fk : profile.declared_foreign_keys) fks.push_back(fk_text(fk));
  out += "Declared foreign keys: " + (fks.empty() ? std::string("(none)") : join(fks, "; ")) + "\n";
  out += "Columns:\n";
  for (const auto& c : profile.columns) {
    out += column_line(c);
    if (proposal) {
      for (const auto& m : proposal->columns) {
        if (m.column != c.name) continue;
        out += "\n    mapped to " + m.property_iri.value_or("(unmapped)") + " (" + std::string(to_string(m.confidence)) +
               ")";
        if (with_rationale && !m.rationale.empty()) out += ": " + one_line(m.rationale);
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace

// ---- candidates ------------------------------------------------------------

bool CandidateSet::has_class(std::string_view iri) const {
  return std::any_of(class_candidates.begin(), class_candidates.end(), [&](const auto& c) { return c.iri == iri; });
}

bool CandidateSet::has_property(std::string_view iri) const {
  for (const auto& col : property_candidates) {
    for (const auto& c : col.candidates) {
      if (c.iri == iri) return true;
    }
  }
  return false;
}

std::string table_query_text(const TableProfile& profile) {
  std::string text = profile.name;
  for (const auto& c : profile.columns) text += " " + c.name;
  if (profile.description) text += " " + *profile.description;
  return text;
}

std::string column_query_text(const ingest::ColumnProfile& column) {
  std::string text = column.name + " " + std::string(ingest::to_string(column.inferred_type));
  for (const auto& v : column.stats.top_values) text += " " + v.value;
  if (column.description) text += " " + *column.description;
  return text;
}

CandidateSet retrieve_candidates(const TableProfile& profile, const vstore::VectorIndex& index,
                                 const embed::Embedder& embedder, std::size_t k_class, std::size_t k_prop) {
  if (index.fingerprint() != embedder.fingerprint()) {
    throw Error(errc::kInvalidArgument, "index was built with '" + index.fingerprint() + "' but the embedder is '" +
                                            embedder.fingerprint() + "'");
  }
  auto to_candidates = [&](const std::vector<vstore::ScoredTerm>& hits) {
    std::vector<Candidate> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back({h.iri, h.score, index.find(h.iri)->rendered_text});
    return out;
  };
  CandidateSet set;
  set.table = profile.name;
  set.class_candidates =
      to_candidates(index.top_k(embedder.embed(table_query_text(profile)), k_class, vocab::TermKind::Class));
  for (const auto& column : profile.columns) {
    set.property_candidates.push_back(
        {column.name,
         to_candidates(index.top_k(embedder.embed(column_query_text(column)), k_prop, vocab::TermKind::Property))});
  }
  return set;
}

// ---- mapping ---------------------------------------------------------------

MappingProposal parse_mapping_response(std::string_view text, const TableProfile& profile,
                                       const CandidateSet* candidates) {
  auto doc = parse_document(text);
  MappingProposal proposal;
  proposal.table = string_field(doc, "table", "the reply");
  if (proposal.table != profile.name) reject("\"table\" must be \"" + profile.name + "\"");
  proposal.class_iri = string_field(doc, "class_iri", "the reply");
  if (candidates && proposal.class_iri != kFallbackClassIri && !candidates->has_class(proposal.class_iri)) {
    reject("class " + proposal.class_iri + " is not one of the class candidates; pick a listed class or " +
           kFallbackClassIri);
  }
  proposal.class_confidence = confidence_field(doc, "class_confidence", "the reply");

  std::map<std::string, ColumnMapping> by_name;
  for (const auto& item : array_field(doc, "columns", "the reply")) {
    if (!item.is_object()) reject("every entry of \"columns\" must be an object");
    ColumnMapping m;
    m.column = string_field(item, "column", "a column entry");
    const std::string where = "column \"" + m.column + "\"";
    if (!has_column(profile, m.column)) reject(where + " is not a column of " + profile.name);
    if (by_name.contains(m.column)) reject(where + " is listed more than once");
    const auto& iri = field(item, "property_iri", where);
    if (iri.is_string()) {
      m.property_iri = iri.get<std::string>();
      if (candidates && !candidates->has_property(*m.property_iri)) {
        reject("property " + *m.property_iri + " for " + where +
               " is not among the property candidates; pick a listed property or null");
      }
    } else if (!iri.is_null()) {
      reject(where + " field \"property_iri\" must be a string or null");
    }
    m.confidence = confidence_field(item, "confidence", where);
    if (auto it = item.find("rationale"); it != item.end()) {
      if (!it->is_string()) reject(where + " field \"rationale\" must be a string");
      m.rationale = it->get<std::string>();
    }
    by_name.emplace(m.column, std::move(m));
  }
  std::vector<std::string> missing;
  for (const auto& c : profile.columns) {
    auto it = by_name.find(c.name);
    if (it == by_name.end()) {
      missing.push_back(c.name);
      continue;
    }
    proposal.columns.push_back(std::move(it->second));
  }
  if (!missing.empty()) reject("columns missing from the reply: " + join(missing, ", "));
  return proposal;
}

AgentResult<MappingProposal> run_mapping_agent(chat::ChatBackend& backend, const TableProfile& profile,
                                               const CandidateSet& candidates, int attempts) {
  std::vector<std::string> columns;
  for (const auto& c : profile.columns) columns.push_back(column_line(c));
  std::vector<std::string> samples;
  for (const auto& row : profile.sample_rows) samples.push_back(join(row, " | "));
  std::vector<std::string> names;
  for (const auto& c : profile.columns) names.push_back(c.name);
  std::vector<std::string> props;
  for (const auto& col : candidates.property_candidates) {
    props.push_back(col.column + ":\n" + candidate_lines(col.candidates, "  "));
  }

  auto user = fill(detail::resource("prompts/mapping.user.txt"),
                   {{"table", profile.name},
                    {"description", profile.description ? one_line(*profile.description) : "(none)"},
                    {"row_count", std::to_string(profile.row_count)},
                    {"columns", columns.empty() ? "(none)" : join(columns, "\n")},
                    {"sample_header", join(names, " | ")},
                    {"samples", samples.empty() ? "(no rows)" : join(samples, "\n")},
                    {"class_candidates", candidate_lines(candidates.class_candidates, "")},
                    {"property_candidates", props.empty() ? "(no columns)" : join(props, "\n")},
                    {"schema", std::string(detail::resource("docs/schemas/mapping_proposal.schema.json"))}});
  auto [proposal, retries] =
      converse(backend, "mapping:" + profile.name, std::string(detail::resource("prompts/mapping.system.txt")),
               std::move(user), response_format("mapping_proposal", "docs/schemas/mapping_proposal.schema.json"),
               attempts, [&](const std::string& reply) { return parse_mapping_response(reply, profile, &candidates); });
  return {std::move(proposal), retries, {}};
}

// ---- relation --------------------------------------------------------------

RelationProposal parse_relation_response(std::string_view text, const std::vector<TableProfile>& profiles,
                                         std::vector<std::string>* warnings) {
  auto warn = [&](std::string w) {
    if (warnings) warnings->push_back(std::move(w));
  };
  auto doc = parse_document(text);
  RelationProposal relation;

  std::map<std::string, std::vector<std::string>> keys;
  for (const auto& item : array_field(doc, "primary_keys", "the reply")) {
    if (!item.is_object()) reject("every entry of \"primary_keys\" must be an object");
    auto table = string_field(item, "table", "a primary key entry");
    std::vector<std::string> columns;
    for (const auto& c : array_field(item, "columns", "primary key of " + table)) {
      if (!c.is_string()) reject("primary key columns of " + table + " must be strings");
      columns.push_back(c.get<std::string>());
    }
    const auto* profile = find_profile(profiles, table);
    if (!profile) {
      warn("primary key for unknown table " + table + " ignored");
      continue;
    }
    if (keys.contains(table)) {
      warn("second primary key for " + table + " ignored");
      continue;
    }
    if (auto bad = std::find_if(columns.begin(), columns.end(), [&](const auto& c) { return !has_column(*profile, c); });
        bad != columns.end()) {
      warn("primary key of " + table + " names unknown column " + *bad + "; key ignored");
      continue;
    }
    keys.emplace(table, std::move(columns));
  }
  for (const auto& p : profiles) {
    auto it = keys.find(p.name);
    relation.primary_keys.push_back({p.name, it == keys.end() ? std::vector<std::string>{} : it->second});
  }

  std::set<ForeignKey> seen;
  for (const auto& item : array_field(doc, "foreign_keys", "the reply")) {
    auto fk = fk_fields(item, "a foreign key entry");
    auto confidence = confidence_field(item, "confidence", "foreign key " + fk_text(fk));
    if (!endpoints_exist(profiles, fk)) {
      warn("foreign key " + fk_text(fk) + " names a table or column that does not exist; edge dropped");
      relation.dropped_edges.push_back({fk, Confidence::Low});
      continue;
    }
    if (!seen.insert(fk).second) {
      warn("duplicate foreign key " + fk_text(fk) + " ignored");
      continue;
    }
    relation.foreign_keys.push_back({fk, confidence});
  }
  relation.confidence = confidence_field(doc, "confidence", "the reply");
  return relation;
}

AgentResult<RelationProposal> run_relation_agent(chat::ChatBackend& backend, const std::vector<TableProfile>& profiles,
                                                 const std::vector<MappingProposal>& proposals, int attempts) {
  if (profiles.empty()) throw Error(errc::kEmptyInput, "relation inference needs at least one table");
  auto mutable_proposals = proposals;
  std::vector<std::string> blocks;
  for (const auto& p : profiles) blocks.push_back(mapped_table_block(p, find_proposal(mutable_proposals, p.name), false));
  auto user = fill(detail::resource("prompts/relation.user.txt"),
                   {{"tables", join(blocks, "\n")},
                    {"schema", std::string(detail::resource("docs/schemas/relation_proposal.schema.json"))}});
  std::vector<std::string> warnings;
  auto [relation, retries] = converse(
      backend, "relation", std::string(detail::resource("prompts/relation.system.txt")), std::move(user),
      response_format("relation_proposal", "docs/schemas/relation_proposal.schema.json"), attempts,
      [&](const std::string& reply) {
        warnings.clear();
        return parse_relation_response(reply, profiles, &warnings);
      });
  return {std::move(relation), retries, std::move(warnings)};
}

// ---- validator -------------------------------------------------------------

std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::Keep: return "Keep";
    case EditKind::Remap: return "Remap";
    case EditKind::Remove: return "Remove";
  }
  return "Keep";
}

std::string EditTarget::key() const {
  switch (type) {
    case Type::TableClass: return "table_class:" + table;
    case Type::ColumnProperty: return "column_property:" + table + "." + column;
    case Type::ForeignKey: return "fk:" + fk_text(fk);
  }
  return {};
}

namespace {

// Applies one validated edit; returns false when the target is gone.
bool apply_one(const Edit& edit, Confidence confidence, std::vector<MappingProposal>& proposals,
               RelationProposal& relation) {
  const auto& t = edit.target;
  switch (t.type) {
    case EditTarget::Type::TableClass: {
      auto* p = find_proposal(proposals, t.table);
      if (!p) return false;
      if (edit.kind == EditKind::Remap) {
        p->class_iri = *edit.replacement_iri;
        p->class_confidence = confidence;
      } else if (edit.kind == EditKind::Remove) {
        p->class_iri = kFallbackClassIri;
        p->class_confidence = confidence;
      }
      return true;
    }
    case EditTarget::Type::ColumnProperty: {
      auto* p = find_proposal(proposals, t.table);
      if (!p) return false;
      auto it = std::find_if(p->columns.begin(), p->columns.end(), [&](const auto& m) { return m.column == t.column; });
      if (it == p->columns.end()) return false;
      if (edit.kind == EditKind::Remap) {
        it->property_iri = *edit.replacement_iri;
        it->confidence = confidence;
      } else if (edit.kind == EditKind::Remove) {
        it->property_iri.reset();
        it->confidence = confidence;
      }
      return true;
    }
    case EditTarget::Type::ForeignKey: {
      auto& edges = relation.foreign_keys;
      auto it = std::find_if(edges.begin(), edges.end(), [&](const auto& e) { return e.key == t.fk; });
      if (it == edges.end()) return false;
      if (edit.kind == EditKind::Remap) {
        it->key = *edit.replacement_fk;
        it->confidence = confidence;
      } else if (edit.kind == EditKind::Remove) {
        edges.erase(it);
      }
      return true;
    }
  }
  return false;
}

}  // namespace

void apply_edits(const ValidationEdits& edits, std::vector<MappingProposal>& proposals, RelationProposal& relation) {
  for (const auto& e : edits.edits) {
    if (!apply_one(e, edits.confidence, proposals, relation)) {
      throw Error(errc::kInvalidArgument, "edit target " + e.target.key() + " does not exist");
    }
  }
}

ValidationEdits parse_validator_response(std::string_view text, const std::vector<TableProfile>& profiles,
                                         const std::vector<CandidateSet>& candidates,
                                         const std::vector<MappingProposal>& proposals,
                                         const RelationProposal& relation, std::vector<std::string>* warnings) {
  auto warn = [&](std::string w) {
    if (warnings) warnings->push_back(std::move(w));
  };
  auto doc = parse_document(text);
  ValidationEdits result;
  result.confidence = confidence_field(doc, "confidence", "the reply");

  // Edits are checked against the state left by the edits before them.
  auto state_proposals = proposals;
  auto state_relation = relation;
  std::set<std::string> targeted;
  std::size_t index = 0;
  for (const auto& item : array_field(doc, "edits", "the reply")) {
    const std::string where = "edit " + std::to_string(++index);
    if (!item.is_object()) reject(where + " must be an object");
    Edit edit;
    auto kind = string_field(item, "kind", where);
    if (kind == "Keep") {
      edit.kind = EditKind::Keep;
    } else if (kind == "Remap") {
      edit.kind = EditKind::Remap;
    } else if (kind == "Remove") {
      edit.kind = EditKind::Remove;
    } else {
      reject(where + " field \"kind\" must be Keep, Remap or Remove");
    }

    const auto& target = field(item, "target", where);
    if (!target.is_object()) reject(where + " field \"target\" must be an object");
    auto type = string_field(target, "type", where + " target");
    if (type == "table_class") {
      edit.target.type = EditTarget::Type::TableClass;
      edit.target.table = string_field(target, "table", where + " target");
      if (!find_proposal(state_proposals, edit.target.table)) reject(where + " targets unknown table " + edit.target.table);
    } else if (type == "column_property") {
      edit.target.type = EditTarget::Type::ColumnProperty;
      edit.target.table = string_field(target, "table", where + " target");
      edit.target.column = string_field(target, "column", where + " target");
      const auto* p = find_profile(profiles, edit.target.table);
      if (!p || !has_column(*p, edit.target.column) || !find_proposal(state_proposals, edit.target.table)) {
        reject(where + " targets unknown column " + edit.target.table + "." + edit.target.column);
      }
    } else if (type == "fk") {
      edit.target.type = EditTarget::Type::ForeignKey;
      edit.target.fk = fk_fields(target, where + " target");
      const auto& edges = state_relation.foreign_keys;
      if (std::none_of(edges.begin(), edges.end(), [&](const auto& e) { return e.key == edit.target.fk; })) {
        reject(where + " targets foreign key " + fk_text(edit.target.fk) + " which is not in the proposal");
      }
    } else {
      reject(where + " target type must be table_class, column_property or fk");
    }

    auto repl = item.find("replacement");
    const bool has_replacement = repl != item.end() && !repl->is_null();
    if (edit.kind != EditKind::Remap && has_replacement) reject(where + ": only Remap carries a replacement");
    if (edit.kind == EditKind::Remap) {
      if (!has_replacement) reject(where + ": Remap needs a replacement");
      const auto* cands = find_candidates(candidates, edit.target.table);
      switch (edit.target.type) {
        case EditTarget::Type::TableClass: {
          if (!repl->is_string()) reject(where + ": a class replacement must be an IRI string");
          edit.replacement_iri = repl->get<std::string>();
          if (*edit.replacement_iri != kFallbackClassIri && !(cands && cands->has_class(*edit.replacement_iri))) {
            reject(where + ": class " + *edit.replacement_iri + " is not a class candidate of " + edit.target.table);
          }
          break;
        }
        case EditTarget::Type::ColumnProperty: {
          if (!repl->is_string()) reject(where + ": a property replacement must be an IRI string");
          edit.replacement_iri = repl->get<std::string>();
          if (!(cands && cands->has_property(*edit.replacement_iri))) {
            reject(where + ": property " + *edit.replacement_iri + " is not a property candidate of " +
                   edit.target.table);
          }
          break;
        }
        case EditTarget::Type::ForeignKey: {
          edit.replacement_fk = fk_fields(*repl, where + " replacement");
          if (!endpoints_exist(profiles, *edit.replacement_fk)) {
            reject(where + ": replacement " + fk_text(*edit.replacement_fk) + " names a table or column that does not exist");
          }
          break;
        }
      }
    }

    if (!targeted.insert(edit.target.key()).second) {
      warn("ConflictingEdit: " + where + " targets " + edit.target.key() + " again; ignored");
      continue;
    }
    if (edit.replacement_fk && *edit.replacement_fk != edit.target.fk) {
      const auto& edges = state_relation.foreign_keys;
      if (std::any_of(edges.begin(), edges.end(), [&](const auto& e) { return e.key == *edit.replacement_fk; })) {
        warn("ConflictingEdit: " + where + " would duplicate foreign key " + fk_text(*edit.replacement_fk) +
             "; ignored");
        continue;
      }
      targeted.insert("fk:" + fk_text(*edit.replacement_fk));
    }
    apply_one(edit, result.confidence, state_proposals, state_relation);
    result.edits.push_back(std::move(edit));
  }
  return result;
}

ValidatorOutcome run_validator_agent(chat::ChatBackend& backend, const std::vector<TableProfile>& profiles,
                                     const std::vector<CandidateSet>& candidates,
                                     const std::vector<MappingProposal>& proposals, const RelationProposal& relation,
                                     int attempts) {
  auto mutable_proposals = proposals;
  std::vector<std::string> blocks;
  for (const auto& p : profiles) {
    auto block = mapped_table_block(p, find_proposal(mutable_proposals, p.name), true);
    if (const auto* c = find_candidates(candidates, p.name)) {
      std::vector<std::string> classes;
      for (const auto& x : c->class_candidates) classes.push_back(x.iri);
      std::set<std::string> props;
      for (const auto& col : c->property_candidates) {
        for (const auto& x : col.candidates) props.insert(x.iri);
      }
      block += "Class candidates: " + (classes.empty() ? std::string("(none)") : join(classes, ", ")) + "\n";
      block += "Property candidates: " +
               (props.empty() ? std::string("(none)") : join(std::vector<std::string>(props.begin(), props.end()), ", ")) +
               "\n";
    }
    blocks.push_back(std::move(block));
  }
  std::vector<std::string> rel;
  for (const auto& pk : relation.primary_keys) {
    rel.push_back("- primary key " + pk.table + ": " + (pk.columns.empty() ? std::string("(none)") : join(pk.columns, ", ")));
  }
  for (const auto& e : relation.foreign_keys) {
    rel.push_back("- foreign key " + fk_text(e.key) + " (" + std::string(to_string(e.confidence)) + ")");
  }
  rel.push_back("- overall confidence " + std::string(to_string(relation.confidence)));

  auto user = fill(detail::resource("prompts/validator.user.txt"),
                   {{"tables", join(blocks, "\n")},
                    {"relations", join(rel, "\n")},
                    {"schema", std::string(detail::resource("docs/schemas/validation_edits.schema.json"))}});
  std::vector<std::string> warnings;
  auto [edits, retries] = converse(
      backend, "validator", std::string(detail::resource("prompts/validator.system.txt")), std::move(user),
      response_format("validation_edits", "docs/schemas/validation_edits.schema.json"), attempts,
      [&](const std::string& reply) {
        warnings.clear();
        return parse_validator_response(reply, profiles, candidates, proposals, relation, &warnings);
      });
  ValidatorOutcome outcome;
  outcome.proposals = proposals;
  outcome.relation = relation;
  apply_edits(edits, outcome.proposals, outcome.relation);
  outcome.edits = std::move(edits);
  outcome.retry_count = retries;
  outcome.warnings = std::move(warnings);
  return outcome;
}

// ---- whole database --------------------------------------------------------

std::vector<Confidence> emitted_confidences(const std::vector<MappingProposal>& proposals,
                                            const RelationProposal* relation, const ValidationEdits* edits) {
  std::vector<Confidence> out;
  for (const auto& p : proposals) {
    out.push_back(p.class_confidence);
    for (const auto& c : p.columns) out.push_back(c.confidence);
  }
  if (relation) {
    for (const auto& e : relation->foreign_keys) out.push_back(e.confidence);
    for (const auto& e : relation->dropped_edges) out.push_back(e.confidence);
    out.push_back(relation->confidence);
  }
  if (edits) out.push_back(edits->confidence);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_cancel(const MapConfig& config) {
  if (config.cancel && config.cancel->load()) throw Error(errc::kAborted, "run cancelled");
}

}  // namespace

MapRun map_database(const AgentBackends& backends, const vstore::VectorIndex& index, const embed::Embedder& embedder,
                    const ingest::Database& db, const MapConfig& config) {
  if (!backends.mapping || !backends.relation || !backends.validator) {
    throw Error(errc::kInvalidArgument, "a backend is required for every agent");
  }
  const auto run_start = Clock::now();
  MapRun run;
  run.db_id = config.db_id;
  std::string stage = "profile";
  auto fail = [&](const Error& e) -> MapRunError {
    run.timing.total_seconds = seconds_since(run_start);
    return MapRunError(e, stage, std::make_shared<const MapRun>(run));
  };

  try {
    check_cancel(config);
    auto t = Clock::now();
    run.profiles = ingest::profile_database(db, config.sample_rows, config.annotations);
    run.timing.profile_seconds = seconds_since(t);
    run.timing.tables = run.profiles.size();
    for (const auto& p : run.profiles) run.timing.columns += p.columns.size();
    run.completed_stage = stage;

    stage = "retrieve";
    t = Clock::now();
    for (const auto& p : run.profiles) {
      check_cancel(config);
      run.candidates.push_back(retrieve_candidates(p, index, embedder, config.k_class, config.k_prop));
    }
    run.timing.retrieve_seconds = seconds_since(t);
    run.completed_stage = stage;

    stage = "mapping";
    t = Clock::now();
    const std::size_t n = run.profiles.size();
    std::vector<std::optional<AgentResult<MappingProposal>>> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          check_cancel(config);
          results[i] = run_mapping_agent(*backends.mapping, run.profiles[i], run.candidates[i], config.attempts);
        } catch (...) {
          errors[i] = std::current_exception();
          failed.store(true);
        }
      }
    };
    {
      const std::size_t threads = std::clamp<std::size_t>(config.max_concurrent_tables, 1, std::max<std::size_t>(n, 1));
      std::vector<std::jthread> pool;
      for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
      worker();
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!results[i]) continue;
      run.proposals.push_back(results[i]->value);
      run.mapping_retries[run.profiles[i].name] = results[i]->retry_count;
    }
    run.timing.mapping_seconds = seconds_since(t);
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    run.completed_stage = stage;

    if (n == 0) {
      // Nothing was emitted, so the aggregate is undefined.
      run.final_confidence = std::nullopt;
      run.timing.total_seconds = seconds_since(run_start);
      return run;
    }

    stage = "relation";
    check_cancel(config);
    t = Clock::now();
    auto relation = run_relation_agent(*backends.relation, run.profiles, run.proposals, config.attempts);
    run.relation = relation.value;
    run.relation_retries = relation.retry_count;
    for (auto& w : relation.warnings) run.warnings.push_back("relation: " + w);
    run.timing.relation_seconds = seconds_since(t);
    run.completed_stage = stage;

    stage = "validator";
    check_cancel(config);
    t = Clock::now();
    auto outcome = run_validator_agent(*backends.validator, run.profiles, run.candidates, run.proposals, *run.relation,
                                       config.attempts);
    run.edits = outcome.edits;
    run.validator_retries = outcome.retry_count;
    run.validated_proposals = std::move(outcome.proposals);
    run.validated_relation = std::move(outcome.relation);
    for (auto& w : outcome.warnings) run.warnings.push_back("validator: " + w);
    run.timing.validator_seconds = seconds_since(t);
    run.completed_stage = stage;

    stage = "aggregate";
    auto all = emitted_confidences(run.proposals, &*run.relation, &*run.edits);
    run.final_confidence = aggregate_confidence(all);
  } catch (const MapRunError&) {
    throw;
  } catch (const Error& e) {
    throw fail(e);
  }
  run.timing.total_seconds = seconds_since(run_start);
  return run;
}

}  // namespace schemamap::agents
