#include "schemamap/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "schemamap/errors.hpp"

namespace schemamap::vocab {

using nlohmann::json;

namespace {

constexpr std::string_view kRdfs = "http://www.w3.org/2000/01/rdf-schema#";
constexpr std::string_view kRdf = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
constexpr std::string_view kXsd = "http://www.w3.org/2001/XMLSchema#";

class PrefixMap {
 public:
  explicit PrefixMap(const json& context) {
    prefixes_["rdf"] = std::string(kRdf);
    prefixes_["rdfs"] = std::string(kRdfs);
    prefixes_["xsd"] = std::string(kXsd);
    prefixes_["schema"] = std::string(kSchemaNamespace);
    if (context.is_object()) {
      for (const auto& [key, value] : context.items()) {
        if (value.is_string()) prefixes_[key] = value.get<std::string>();
      }
    }
  }

  std::string expand(const std::string& iri) const {
    auto colon = iri.find(':');
    if (colon == std::string::npos) return iri;
    // Absolute IRIs ("https://...") have "//" right after the scheme.
    if (iri.compare(colon, 3, "://") == 0) return iri;
    auto it = prefixes_.find(iri.substr(0, colon));
    if (it == prefixes_.end()) return iri;
    return it->second + iri.substr(colon + 1);
  }

 private:
  std::map<std::string, std::string> prefixes_;
};

std::vector<std::string> references(const json& node, const char* key, const PrefixMap& prefixes) {
  std::vector<std::string> out;
  auto it = node.find(key);
  if (it == node.end()) return out;
  auto take = [&](const json& v) {
    if (v.is_string()) {
      out.push_back(prefixes.expand(v.get<std::string>()));
    } else if (v.is_object()) {
      auto id = v.find("@id");
      if (id != v.end() && id->is_string()) out.push_back(prefixes.expand(id->get<std::string>()));
    }
  };
  if (it->is_array()) {
    for (const auto& v : *it) take(v);
  } else {
    take(*it);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool is_default_language(const std::string& lang) {
  return lang.empty() || lang == "en" || lang.rfind("en-", 0) == 0;
}

// Plain strings, {"@language", "@value"} objects, or arrays of either. Only
// the default (English or untagged) value is kept.
std::optional<std::string> default_language_text(const json& node, const char* key) {
  auto it = node.find(key);
  if (it == node.end()) return std::nullopt;
  auto pick = [](const json& v) -> std::optional<std::string> {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_object()) {
      auto value = v.find("@value");
      if (value == v.end() || !value->is_string()) return std::nullopt;
      std::string lang = v.value("@language", "");
      if (is_default_language(lang)) return value->get<std::string>();
    }
    return std::nullopt;
  };
  if (it->is_array()) {
    for (const auto& v : *it) {
      if (auto text = pick(v)) return text;
    }
    return std::nullopt;
  }
  return pick(*it);
}

std::vector<std::string> node_types(const json& node, const PrefixMap& prefixes) {
  std::vector<std::string> out;
  auto it = node.find("@type");
  if (it == node.end()) return out;
  if (it->is_string()) {
    out.push_back(prefixes.expand(it->get<std::string>()));
  } else if (it->is_array()) {
    for (const auto& t : *it) {
      if (t.is_string()) out.push_back(prefixes.expand(t.get<std::string>()));
    }
  }
  return out;
}

bool contains(const std::vector<std::string>& values, std::string_view needle) {
  return std::find(values.begin(), values.end(), needle) != values.end();
}

}  // namespace

std::string_view to_string(TermKind kind) {
  return kind == TermKind::Class ? "Class" : "Property";
}

std::string_view to_string(TermStatus status) {
  switch (status) {
    case TermStatus::Active: return "Active";
    case TermStatus::Superseded: return "Superseded";
    case TermStatus::Pending: return "Pending";
  }
  return "Active";
}

std::string_view to_string(NeighborRole role) {
  switch (role) {
    case NeighborRole::SuperType: return "SuperType";
    case NeighborRole::DomainOf: return "DomainOf";
    case NeighborRole::RangeOf: return "RangeOf";
    case NeighborRole::HasProperty: return "HasProperty";
  }
  return "SuperType";
}

std::string local_name(std::string_view iri) {
  auto cut = iri.find_last_of("/#");
  if (cut == std::string_view::npos) {
    auto colon = iri.find(':');
    return std::string(colon == std::string_view::npos ? iri : iri.substr(colon + 1));
  }
  return std::string(iri.substr(cut + 1));
}

Vocabulary::Vocabulary(std::vector<TermRecord> terms, ParseReport report)
    : terms_(std::move(terms)), report_(std::move(report)) {
  std::sort(terms_.begin(), terms_.end(),
            [](const TermRecord& a, const TermRecord& b) { return a.iri < b.iri; });
  by_iri_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) by_iri_.emplace(terms_[i].iri, i);
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const auto& term = terms_[i];
    if (term.kind != TermKind::Property || term.status != TermStatus::Active) continue;
    for (const auto& domain : term.domain_includes) properties_by_class_[domain].push_back(i);
  }
  // terms_ is sorted, so every bucket is already in IRI order.
}

const TermRecord* Vocabulary::find(std::string_view iri) const {
  auto it = by_iri_.find(std::string(iri));
  return it == by_iri_.end() ? nullptr : &terms_[it->second];
}

std::vector<const TermRecord*> Vocabulary::properties_of(std::string_view class_iri) const {
  std::vector<const TermRecord*> out;
  auto it = properties_by_class_.find(std::string(class_iri));
  if (it == properties_by_class_.end()) return out;
  out.reserve(it->second.size());
  for (auto i : it->second) out.push_back(&terms_[i]);
  return out;
}

std::vector<const TermRecord*> Vocabulary::index_set(const IndexSetOptions& options) const {
  std::vector<const TermRecord*> out;
  for (const auto& term : terms_) {
    if (term.status == TermStatus::Active ||
        (options.include_pending && term.status == TermStatus::Pending)) {
      out.push_back(&term);
    }
  }
  return out;
}

bool Vocabulary::is_datatype(std::string_view iri) const {
  if (iri.substr(0, kXsd.size()) == kXsd) return true;
  if (iri == std::string(kRdf) + "langString" || iri == std::string(kRdfs) + "Literal") return true;
  const auto* term = find(iri);
  return term != nullptr && term->is_datatype;
}

bool Vocabulary::resolves(std::string_view iri) const {
  return find(iri) != nullptr || is_datatype(iri);
}

Vocabulary parse_vocabulary(std::string_view document) {
  json root;
  try {
    root = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(errc::kMalformedVocabulary, std::string("vocabulary is not valid JSON: ") + e.what());
  }
  const json* graph = nullptr;
  if (root.is_object()) {
    auto it = root.find("@graph");
    if (it != root.end() && it->is_array()) graph = &*it;
  } else if (root.is_array()) {
    graph = &root;
  }
  if (graph == nullptr) throw Error(errc::kMalformedVocabulary, "vocabulary has no top-level node array");

  PrefixMap prefixes(root.is_object() ? root.value("@context", json::object()) : json::object());
  const std::string rdfs_class = std::string(kRdfs) + "Class";
  const std::string rdf_property = std::string(kRdf) + "Property";
  const std::string data_type = std::string(kSchemaNamespace) + "DataType";
  const std::string pending_part = "https://pending.schema.org";

  ParseReport report;
  std::vector<TermRecord> terms;
  std::set<std::string> seen;
  for (const auto& node : *graph) {
    ++report.node_count;
    if (!node.is_object()) throw Error(errc::kMalformedVocabulary, "vocabulary node is not an object");
    auto id = node.find("@id");
    if (id == node.end() || !id->is_string() || id->get<std::string>().empty()) {
      throw Error(errc::kMalformedVocabulary, "vocabulary node without @id");
    }
    std::string iri = prefixes.expand(id->get<std::string>());
    if (!seen.insert(iri).second) throw Error(errc::kMalformedVocabulary, "duplicate vocabulary node " + iri);

    auto types = node_types(node, prefixes);
    TermRecord term;
    term.iri = iri;
    if (contains(types, rdfs_class)) {
      term.kind = TermKind::Class;
      term.super_types = references(node, "rdfs:subClassOf", prefixes);
      term.is_datatype = contains(types, data_type);
    } else if (contains(types, rdf_property)) {
      term.kind = TermKind::Property;
      term.super_types = references(node, "rdfs:subPropertyOf", prefixes);
      term.domain_includes = references(node, "schema:domainIncludes", prefixes);
      term.range_includes = references(node, "schema:rangeIncludes", prefixes);
    } else {
      ++report.skipped_nodes;
      continue;
    }
    term.label = default_language_text(node, "rdfs:label").value_or("");
    if (term.label.empty()) term.label = local_name(iri);
    term.comment = default_language_text(node, "rdfs:comment").value_or("");

    if (node.contains("schema:supersededBy")) {
      term.status = TermStatus::Superseded;
    } else if (contains(references(node, "schema:isPartOf", prefixes), pending_part)) {
      term.status = TermStatus::Pending;
    }
    terms.push_back(std::move(term));
  }

  // Datatype-ness flows down subClassOf (URL < Text, Integer < Number).
  std::set<std::string> datatypes;
  for (const auto& t : terms) {
    if (t.is_datatype) datatypes.insert(t.iri);
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (auto& t : terms) {
      if (t.kind != TermKind::Class || t.is_datatype) continue;
      for (const auto& s : t.super_types) {
        if (datatypes.count(s)) {
          t.is_datatype = true;
          datatypes.insert(t.iri);
          changed = true;
          break;
        }
      }
    }
  }

  for (const auto& t : terms) {
    (t.kind == TermKind::Class ? report.class_count : report.property_count)++;
    switch (t.status) {
      case TermStatus::Active: ++report.active_count; break;
      case TermStatus::Superseded: ++report.superseded_count; break;
      case TermStatus::Pending: ++report.pending_count; break;
    }
  }

  Vocabulary staged(std::move(terms), {});
  for (const auto& t : staged.terms()) {
    auto check = [&](const std::vector<std::string>& refs, const char* role) {
      for (const auto& target : refs) {
        if (!staged.resolves(target)) report.unresolved.push_back({t.iri, role, target});
      }
    };
    check(t.super_types, t.kind == TermKind::Class ? "subClassOf" : "subPropertyOf");
    check(t.domain_includes, "domainIncludes");
    check(t.range_includes, "rangeIncludes");
    if (t.kind == TermKind::Property && t.status == TermStatus::Active) {
      for (const auto& domain : t.domain_includes) {
        if (domain.rfind(kSchemaNamespace, 0) != 0) continue;
        const auto* target = staged.find(domain);
        if (target != nullptr && target->kind != TermKind::Class) {
          report.unresolved.push_back({t.iri, "domainIncludes(not a class)", domain});
        }
      }
    }
  }
  std::vector<TermRecord> sorted = staged.terms();
  return Vocabulary(std::move(sorted), std::move(report));
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIoError, "cannot read vocabulary file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_vocabulary(buffer.str());
}

namespace {

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  if (a.role != b.role) return a.role < b.role;
  return a.iri < b.iri;
}

std::string neighbor_label(const std::string& iri, const Vocabulary& vocab) {
  const auto* term = vocab.find(iri);
  return term != nullptr ? term->label : local_name(iri);
}

// Comments carry embedded newlines and runs of spaces; collapse them so each
// neighbor stays on one line.
std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace

TermSubgraph build_subgraph(const TermRecord& term, const Vocabulary& vocab,
                            const SubgraphOptions& options) {
  TermSubgraph sg;
  sg.root = term;
  auto add = [&](NeighborRole role, const std::string& iri) {
    if (!vocab.resolves(iri)) return;
    sg.neighbors.push_back({role, iri, neighbor_label(iri, vocab)});
  };
  for (const auto& s : term.super_types) add(NeighborRole::SuperType, s);
  if (term.kind == TermKind::Property) {
    for (const auto& d : term.domain_includes) add(NeighborRole::DomainOf, d);
    for (const auto& r : term.range_includes) add(NeighborRole::RangeOf, r);
  } else {
    std::size_t taken = 0;
    for (const auto* property : vocab.properties_of(term.iri)) {
      if (taken == options.has_property_cap) break;
      sg.neighbors.push_back({NeighborRole::HasProperty, property->iri, property->label});
      ++taken;
    }
  }
  std::sort(sg.neighbors.begin(), sg.neighbors.end(), neighbor_less);
  sg.rendered_text = render_subgraph_text(sg);
  return sg;
}

std::string render_subgraph_text(const TermSubgraph& subgraph) {
  std::vector<Neighbor> ordered = subgraph.neighbors;
  std::sort(ordered.begin(), ordered.end(), neighbor_less);
  std::string out;
  out += collapse_whitespace(subgraph.root.label);
  out += " — ";
  out += to_string(subgraph.root.kind);
  out += " — ";
  out += collapse_whitespace(subgraph.root.comment);
  for (const auto& n : ordered) {
    out += '\n';
    out += to_string(n.role);
    out += ": ";
    out += collapse_whitespace(n.label);
  }
  return out;
}

}  // namespace schemamap::vocab
