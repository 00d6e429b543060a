#pragma once
// Schema.org vocabulary model.
//
// The release is read from its flat-graph JSON-LD form (a top-level "@graph"
// node array). Each rdfs:Class / rdf:Property node becomes a TermRecord; all
// compact IRIs ("schema:Movie") are expanded through the document's
// "@context" prefixes. A Vocabulary is immutable once parsed.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace schemamap::vocab {

enum class TermKind { Class, Property };
enum class TermStatus { Active, Superseded, Pending };

std::string_view to_string(TermKind kind);
std::string_view to_string(TermStatus status);

struct TermRecord {
  std::string iri;
  TermKind kind = TermKind::Class;
  std::string label;
  std::string comment;
  std::vector<std::string> domain_includes;  // properties only
  std::vector<std::string> range_includes;   // properties only
  std::vector<std::string> super_types;      // subClassOf / subPropertyOf
  TermStatus status = TermStatus::Active;
  // Text, Number, Date... and their subclasses. Rendered as leaves.
  bool is_datatype = false;

  bool operator==(const TermRecord&) const = default;
};

struct UnresolvedReference {
  std::string from_iri;
  std::string role;  // "domainIncludes", "rangeIncludes", "subClassOf", ...
  std::string target_iri;

  bool operator==(const UnresolvedReference&) const = default;
};

struct ParseReport {
  std::size_t node_count = 0;
  std::size_t class_count = 0;
  std::size_t property_count = 0;
  std::size_t active_count = 0;
  std::size_t superseded_count = 0;
  std::size_t pending_count = 0;
  std::size_t skipped_nodes = 0;  // enumeration members and other instances
  std::vector<UnresolvedReference> unresolved;
};

struct IndexSetOptions {
  bool include_pending = false;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<TermRecord> terms, ParseReport report);

  const std::vector<TermRecord>& terms() const { return terms_; }
  const ParseReport& report() const { return report_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  const TermRecord* find(std::string_view iri) const;

  // Active properties whose domain_includes names `class_iri`, ordered by IRI.
  std::vector<const TermRecord*> properties_of(std::string_view class_iri) const;

  // Terms eligible for indexing, in vocabulary (IRI) order.
  std::vector<const TermRecord*> index_set(const IndexSetOptions& options = {}) const;

  // True when `iri` resolves to a record or is a well-known XSD/RDF datatype.
  bool resolves(std::string_view iri) const;
  bool is_datatype(std::string_view iri) const;

 private:
  std::vector<TermRecord> terms_;  // sorted by iri
  ParseReport report_;
  std::unordered_map<std::string, std::size_t> by_iri_;
  std::unordered_map<std::string, std::vector<std::size_t>> properties_by_class_;
};

// Throws Error{MalformedVocabulary} when the node array is missing, a node has
// no "@id", or an id repeats. Dangling references land in the parse report.
Vocabulary parse_vocabulary(std::string_view document);
Vocabulary load_vocabulary(const std::string& path);

enum class NeighborRole { SuperType, DomainOf, RangeOf, HasProperty };
std::string_view to_string(NeighborRole role);

struct Neighbor {
  NeighborRole role;
  std::string iri;
  std::string label;

  bool operator==(const Neighbor&) const = default;
};

struct TermSubgraph {
  TermRecord root;
  std::vector<Neighbor> neighbors;
  std::string rendered_text;
};

inline constexpr std::size_t kDefaultHasPropertyCap = 25;

struct SubgraphOptions {
  std::size_t has_property_cap = kDefaultHasPropertyCap;
};

TermSubgraph build_subgraph(const TermRecord& term, const Vocabulary& vocab,
                            const SubgraphOptions& options = {});

// Header line "<label> — <kind> — <comment>" followed by one
// "<role>: <neighbor label>" line per neighbor, sorted by (role, iri).
std::string render_subgraph_text(const TermSubgraph& subgraph);

// Last path / fragment segment of an IRI ("https://schema.org/Movie" -> "Movie").
std::string local_name(std::string_view iri);

inline constexpr std::string_view kSchemaNamespace = "https://schema.org/";
inline constexpr std::string_view kThingIri = "https://schema.org/Thing";

}  // namespace schemamap::vocab
