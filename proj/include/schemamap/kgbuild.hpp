#pragma once
// Final schema mapping and its materialization as an RDF graph.
//
// Subjects are <base>/<table>/<pk>, each part percent-encoded (RFC 3986
// unreserved characters kept), composite keys joined with "_". Rows without
// a usable key get "row<n>" with n the 1-based physical row ordinal.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "schemamap/agents.hpp"
#include "schemamap/confidence.hpp"
#include "schemamap/ingest.hpp"
#include "schemamap/vocab.hpp"

namespace schemamap::kg {

using ingest::ForeignKey;

// Namespace for generated link predicates ("ref_<from column>").
inline constexpr std::string_view kLinkNamespace = "http://example.org/schemamap/";
inline constexpr std::string_view kRdfType = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
inline constexpr std::string_view kXsd = "http://www.w3.org/2001/XMLSchema#";

struct ColumnMapping {
  std::string column;
  ingest::InferredType inferred_type = ingest::InferredType::Unknown;
  std::optional<std::string> property_iri;
  Confidence confidence = Confidence::Low;
  std::string rationale;

  bool operator==(const ColumnMapping&) const = default;
};

struct TableMapping {
  std::string table;
  std::string class_iri;
  Confidence class_confidence = Confidence::Low;
  std::vector<std::string> primary_key;
  std::vector<ColumnMapping> columns;

  bool operator==(const TableMapping&) const = default;
};

struct FkLink {
  ForeignKey key;
  std::string predicate_iri;
  Confidence confidence = Confidence::Low;

  bool operator==(const FkLink&) const = default;
};

struct Provenance {
  std::string index_fingerprint;
  std::map<std::string, int> mapping_retries;
  int relation_retries = 0;
  int validator_retries = 0;
  std::optional<Confidence> relation_confidence;
  std::vector<agents::ForeignKeyEdge> dropped_edges;
  std::optional<Confidence> validator_confidence;
  std::vector<agents::Edit> edits;
  std::vector<std::string> warnings;

  bool operator==(const Provenance&) const = default;
};

struct SchemaMapping {
  std::string db_id;
  std::vector<TableMapping> tables;  // profile order
  std::vector<FkLink> fk_links;
  std::optional<Confidence> final_confidence;  // nullopt: NOT_APPLICABLE
  Provenance provenance;

  bool operator==(const SchemaMapping&) const = default;

  const TableMapping* find(std::string_view table) const;
};

// Link predicate for an FK: the from-column's property when its range
// includes a non-datatype class, otherwise <kLinkNamespace>ref_<column>.
std::string link_predicate(const std::optional<std::string>& from_property, std::string_view from_column,
                           const vocab::Vocabulary& vocabulary);

// Throws InconsistentInputs when proposals, relation and profiles disagree
// on tables or columns.
SchemaMapping assemble_mapping(std::string db_id, const std::vector<ingest::TableProfile>& profiles,
                               const std::vector<agents::MappingProposal>& proposals,
                               const agents::RelationProposal& relation, const agents::ValidationEdits* edits,
                               const vocab::Vocabulary& vocabulary);

// From a completed map_database run, with retries, warnings and the final
// confidence carried into the provenance.
SchemaMapping assemble_mapping(const agents::MapRun& run, const vocab::Vocabulary& vocabulary,
                               const std::string& index_fingerprint);

// "<db_id>.mapping": pretty-printed JSON, keys sorted, trailing newline.
// docs/schemas/mapping_document.schema.json describes it.
std::string serialize_mapping(const SchemaMapping& mapping);
SchemaMapping parse_mapping(std::string_view document);  // throws MalformedMapping
SchemaMapping load_mapping(const std::string& path);
void save_mapping(const SchemaMapping& mapping, const std::string& path);

struct Term {
  enum class Kind { Iri, Literal };
  Kind kind = Kind::Iri;
  std::string value;     // IRI, or the literal's lexical form
  std::string datatype;  // literals only; empty for a plain string
  std::string language;  // literals only; accepted by the reader, never produced

  bool operator==(const Term&) const = default;
  auto operator<=>(const Term&) const = default;

  static Term iri(std::string v) { return {Kind::Iri, std::move(v), {}, {}}; }
  static Term literal(std::string v, std::string dt = {}) { return {Kind::Literal, std::move(v), std::move(dt), {}}; }
};

struct Triple {
  std::string subject;
  std::string predicate;
  Term object;

  bool operator==(const Triple&) const = default;
};

using TripleSet = std::vector<Triple>;

struct TableCounts {
  std::size_t rows = 0;
  std::size_t type_triples = 0;
  std::size_t literal_triples = 0;
  std::size_t link_triples = 0;
  std::size_t dangling_fk_values = 0;
  std::size_t surrogate_subjects = 0;
};

struct MaterializeReport {
  std::map<std::string, TableCounts> tables;
  std::size_t triples = 0;
  std::size_t dangling_fk_values = 0;
  std::size_t unmapped_columns = 0;
};

std::string percent_encode(std::string_view text);

// Throws InconsistentInputs when the mapping names tables or columns the
// database lacks, InvalidArgument on a base IRI that is not absolute.
TripleSet materialize(const ingest::Database& db, const SchemaMapping& mapping, std::string_view base_iri,
                      MaterializeReport* report = nullptr);

// One line per triple, sorted by (subject, predicate, object) in their
// serialized forms, canonical escapes, "\n" after every line.
std::string serialize_ntriples(TripleSet triples);
std::string ntriples_line(const Triple& triple);
// Reader for the subset we emit plus language tags; throws MalformedNTriples.
TripleSet parse_ntriples(std::string_view text);

}  // namespace schemamap::kg
