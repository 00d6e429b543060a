#pragma once
// The three-stage agent flow: a Mapping agent per table, one Relation agent
// over all tables, then a Validator over everything. Agents answer with JSON
// documents that follow docs/schemas/*.schema.json; a reply that fails to
// parse or names a term outside its candidate set is sent back with a
// correction message until the attempt budget runs out.

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "schemamap/chat.hpp"
#include "schemamap/confidence.hpp"
#include "schemamap/embed.hpp"
#include "schemamap/errors.hpp"
#include "schemamap/ingest.hpp"
#include "schemamap/vstore.hpp"

namespace schemamap::agents {

using ingest::ForeignKey;
using ingest::PrimaryKey;
using ingest::TableProfile;

// Class used for tables no candidate fits.
inline constexpr const char* kFallbackClassIri = "https://schema.org/Thing";

inline constexpr std::size_t kDefaultClassCandidates = 10;
inline constexpr std::size_t kDefaultPropertyCandidates = 15;
inline constexpr int kDefaultAttempts = 3;

struct Candidate {
  std::string iri;
  double score = 0.0;
  std::string rendered_text;

  bool operator==(const Candidate&) const = default;
};

struct ColumnCandidates {
  std::string column;
  std::vector<Candidate> candidates;

  bool operator==(const ColumnCandidates&) const = default;
};

struct CandidateSet {
  std::string table;
  std::vector<Candidate> class_candidates;
  std::vector<ColumnCandidates> property_candidates;  // profile column order

  bool operator==(const CandidateSet&) const = default;

  bool has_class(std::string_view iri) const;
  // Any column's list; a property may fit a column other than the one it was retrieved for.
  bool has_property(std::string_view iri) const;
};

std::string table_query_text(const TableProfile& profile);
std::string column_query_text(const ingest::ColumnProfile& column);

// Throws InvalidArgument when the index was built by a different embedder,
// DimensionMismatch when the vector sizes disagree.
CandidateSet retrieve_candidates(const TableProfile& profile, const vstore::VectorIndex& index,
                                 const embed::Embedder& embedder, std::size_t k_class = kDefaultClassCandidates,
                                 std::size_t k_prop = kDefaultPropertyCandidates);

struct ColumnMapping {
  std::string column;
  std::optional<std::string> property_iri;  // absent means explicitly unmapped
  Confidence confidence = Confidence::Low;
  std::string rationale;

  bool operator==(const ColumnMapping&) const = default;
};

struct MappingProposal {
  std::string table;
  std::string class_iri = kFallbackClassIri;
  Confidence class_confidence = Confidence::Low;
  std::vector<ColumnMapping> columns;  // profile column order

  bool operator==(const MappingProposal&) const = default;
};

struct ForeignKeyEdge {
  ForeignKey key;
  Confidence confidence = Confidence::Low;

  bool operator==(const ForeignKeyEdge&) const = default;
};

struct RelationProposal {
  std::vector<PrimaryKey> primary_keys;  // one per profiled table, profile order
  std::vector<ForeignKeyEdge> foreign_keys;
  // Edges the agent proposed with endpoints that do not exist; kept for the
  // record with confidence LOW and never applied.
  std::vector<ForeignKeyEdge> dropped_edges;
  Confidence confidence = Confidence::Low;

  bool operator==(const RelationProposal&) const = default;
};

enum class EditKind { Keep, Remap, Remove };
std::string_view to_string(EditKind kind);

struct EditTarget {
  enum class Type { TableClass, ColumnProperty, ForeignKey };
  Type type = Type::TableClass;
  std::string table;   // TableClass, ColumnProperty
  std::string column;  // ColumnProperty
  ForeignKey fk;       // ForeignKey

  bool operator==(const EditTarget&) const = default;
  std::string key() const;  // identity used to detect conflicting edits
};

struct Edit {
  EditKind kind = EditKind::Keep;
  EditTarget target;
  std::optional<std::string> replacement_iri;
  std::optional<ForeignKey> replacement_fk;

  bool operator==(const Edit&) const = default;
};

struct ValidationEdits {
  std::vector<Edit> edits;  // applied edits, in document order
  Confidence confidence = Confidence::Low;

  bool operator==(const ValidationEdits&) const = default;
};

template <class T>
struct AgentResult {
  T value;
  int retry_count = 0;
  std::vector<std::string> warnings;
};

struct ValidatorOutcome {
  ValidationEdits edits;
  std::vector<MappingProposal> proposals;
  RelationProposal relation;
  int retry_count = 0;
  std::vector<std::string> warnings;
};

// Each runner throws AgentOutputInvalid once `attempts` replies have been
// rejected; backend errors propagate unchanged.
AgentResult<MappingProposal> run_mapping_agent(chat::ChatBackend& backend, const TableProfile& profile,
                                               const CandidateSet& candidates, int attempts = kDefaultAttempts);

AgentResult<RelationProposal> run_relation_agent(chat::ChatBackend& backend, const std::vector<TableProfile>& profiles,
                                                 const std::vector<MappingProposal>& proposals,
                                                 int attempts = kDefaultAttempts);

ValidatorOutcome run_validator_agent(chat::ChatBackend& backend, const std::vector<TableProfile>& profiles,
                                     const std::vector<CandidateSet>& candidates,
                                     const std::vector<MappingProposal>& proposals, const RelationProposal& relation,
                                     int attempts = kDefaultAttempts);

// Applies already-validated edits in order. Replaying a validator's edit log
// on the original proposals reproduces its outputs.
void apply_edits(const ValidationEdits& edits, std::vector<MappingProposal>& proposals, RelationProposal& relation);

// Parsers for the three response documents. `std::nullopt` context skips the
// candidate and endpoint checks. Throw Error{AgentOutputInvalid} with the
// reason a reply was rejected.
MappingProposal parse_mapping_response(std::string_view text, const TableProfile& profile,
                                       const CandidateSet* candidates);
RelationProposal parse_relation_response(std::string_view text, const std::vector<TableProfile>& profiles,
                                         std::vector<std::string>* warnings);
ValidationEdits parse_validator_response(std::string_view text, const std::vector<TableProfile>& profiles,
                                         const std::vector<CandidateSet>& candidates,
                                         const std::vector<MappingProposal>& proposals,
                                         const RelationProposal& relation, std::vector<std::string>* warnings);

// Every confidence the three stages emitted, in a fixed order.
std::vector<Confidence> emitted_confidences(const std::vector<MappingProposal>& proposals,
                                            const RelationProposal* relation, const ValidationEdits* edits);

struct TimingRecord {
  std::size_t tables = 0;
  std::size_t columns = 0;
  double profile_seconds = 0;
  double retrieve_seconds = 0;
  double mapping_seconds = 0;
  double relation_seconds = 0;
  double validator_seconds = 0;
  double total_seconds = 0;
};

struct AgentBackends {
  chat::ChatBackend* mapping = nullptr;
  chat::ChatBackend* relation = nullptr;
  chat::ChatBackend* validator = nullptr;

  static AgentBackends all(chat::ChatBackend& backend) { return {&backend, &backend, &backend}; }
};

struct MapConfig {
  std::string db_id;
  std::size_t sample_rows = ingest::kDefaultSampleRows;
  std::size_t k_class = kDefaultClassCandidates;
  std::size_t k_prop = kDefaultPropertyCandidates;
  int attempts = kDefaultAttempts;
  std::size_t max_concurrent_tables = 1;
  const ingest::Annotations* annotations = nullptr;
  const std::atomic<bool>* cancel = nullptr;  // set to abort between calls
};

struct MapRun {
  std::string db_id;
  std::vector<TableProfile> profiles;
  std::vector<CandidateSet> candidates;
  std::vector<MappingProposal> proposals;  // as the Mapping agent returned them
  std::map<std::string, int> mapping_retries;
  std::optional<RelationProposal> relation;  // as the Relation agent returned it
  int relation_retries = 0;
  std::optional<ValidationEdits> edits;
  int validator_retries = 0;
  std::vector<MappingProposal> validated_proposals;
  std::optional<RelationProposal> validated_relation;
  std::optional<Confidence> final_confidence;  // nullopt: not applicable (nothing emitted)
  std::vector<std::string> warnings;
  std::string completed_stage;  // last stage that finished
  TimingRecord timing;
};

// Raised by map_database when any stage fails; carries what was done so far.
class MapRunError : public Error {
 public:
  MapRunError(const Error& cause, std::string stage, std::shared_ptr<const MapRun> partial)
      : Error(cause.code(), stage + ": " + cause.what()), stage_(std::move(stage)), partial_(std::move(partial)) {}

  const std::string& stage() const { return stage_; }
  const MapRun& partial() const { return *partial_; }

 private:
  std::string stage_;
  std::shared_ptr<const MapRun> partial_;
};

// profile -> retrieve -> mapping (per table, concurrently up to the limit)
// -> relation -> validator.
MapRun map_database(const AgentBackends& backends, const vstore::VectorIndex& index, const embed::Embedder& embedder,
                    const ingest::Database& db, const MapConfig& config);

}  // namespace schemamap::agents
