#pragma once
// Exact cosine vector index over vocabulary term subgraphs.
//
// On-disk layout (all integers little-endian):
//
//   magic        5 bytes  "SWIX1"
//   dims         u32
//   count        u64
//   fingerprint  u32 length + UTF-8 bytes
//   count x entry:
//     iri        u32 length + UTF-8 bytes
//     kind       u8   (0 = Class, 1 = Property)
//     vector     dims x IEEE-754 binary32
//     text       u32 length + UTF-8 bytes
//
// Nothing may follow the last entry.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "schemamap/embed.hpp"
#include "schemamap/vocab.hpp"

namespace schemamap::vstore {

using vocab::TermKind;

struct IndexEntry {
  std::string iri;
  TermKind kind = TermKind::Class;
  embed::EmbeddingVector vector;
  std::string rendered_text;
};

struct ScoredTerm {
  std::string iri;
  double score = 0.0;

  bool operator==(const ScoredTerm&) const = default;
};

class VectorIndex {
 public:
  VectorIndex() = default;
  VectorIndex(std::size_t dims, std::string embedder_fingerprint);

  // Throws InvalidArgument on duplicate iri, DimensionMismatch on a vector
  // whose dims differ from the index.
  void add(IndexEntry entry);

  std::size_t dims() const { return dims_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::string& fingerprint() const { return fingerprint_; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const IndexEntry* find(std::string_view iri) const;

  // The k best entries of the requested kind by cosine, ordered by
  // (score desc, iri asc). Exhaustive, so results are exact.
  std::vector<ScoredTerm> top_k(const embed::EmbeddingVector& query, std::size_t k,
                                std::optional<TermKind> filter = std::nullopt) const;

 private:
  std::size_t dims_ = 0;
  std::string fingerprint_;
  std::vector<IndexEntry> entries_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> by_iri_;
  std::vector<std::size_t> by_kind_[2];
};

struct BuildOptions {
  vocab::IndexSetOptions index_set;
  vocab::SubgraphOptions subgraph;
};

// One entry per indexable term: embed(render(build_subgraph(term))). Any
// embedder failure propagates and no index is returned.
VectorIndex index_build(const vocab::Vocabulary& vocabulary, const embed::Embedder& embedder,
                        const BuildOptions& options = {});
VectorIndex index_build(const vocab::Vocabulary& vocabulary, const embed::EmbedderConfig& config,
                        const BuildOptions& options = {});

void index_save(const VectorIndex& index, const std::string& path);
std::string index_serialize(const VectorIndex& index);

// Throws CorruptIndexFile on bad magic, truncation, trailing bytes, or when
// `expected_fingerprint` is given and differs from the header.
VectorIndex index_load(const std::string& path,
                       const std::optional<std::string>& expected_fingerprint = std::nullopt);
VectorIndex index_deserialize(std::string_view bytes,
                              const std::optional<std::string>& expected_fingerprint = std::nullopt);

}  // namespace schemamap::vstore
