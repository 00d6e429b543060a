#include "schemamap/vstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "schemamap/errors.hpp"

namespace schemamap::vstore {

namespace {

constexpr std::string_view kMagic = "SWIX1";

std::size_t kind_slot(TermKind kind) { return kind == TermKind::Class ? 0 : 1; }

double norm_of(const std::vector<float>& values) {
  double sum_sq = 0.0;
  for (float x : values) sum_sq += static_cast<double>(x) * x;
  return std::sqrt(sum_sq);
}

class Writer {
 public:
  void bytes(std::string_view b) { out_.append(b); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    if (s.size() > UINT32_MAX) throw Error(errc::kInvalidArgument, "string too long for index file");
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    if (data_.size() - pos_ < n) throw Error(errc::kCorruptIndexFile, "index file truncated");
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() { return std::string(bytes(u32())); }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

VectorIndex::VectorIndex(std::size_t dims, std::string embedder_fingerprint)
    : dims_(dims), fingerprint_(std::move(embedder_fingerprint)) {}

void VectorIndex::add(IndexEntry entry) {
  if (entry.vector.dims() != dims_) {
    throw Error(errc::kDimensionMismatch, "entry " + entry.iri + " has dims " +
                                              std::to_string(entry.vector.dims()) + ", index has " +
                                              std::to_string(dims_));
  }
  if (!by_iri_.emplace(entry.iri, entries_.size()).second) {
    throw Error(errc::kInvalidArgument, "duplicate index entry " + entry.iri);
  }
  by_kind_[kind_slot(entry.kind)].push_back(entries_.size());
  norms_.push_back(norm_of(entry.vector.values));
  entries_.push_back(std::move(entry));
}

const IndexEntry* VectorIndex::find(std::string_view iri) const {
  auto it = by_iri_.find(std::string(iri));
  return it == by_iri_.end() ? nullptr : &entries_[it->second];
}

std::vector<ScoredTerm> VectorIndex::top_k(const embed::EmbeddingVector& query, std::size_t k,
                                           std::optional<TermKind> filter) const {
  if (k == 0) throw Error(errc::kInvalidArgument, "top_k needs k >= 1");
  if (query.dims() != dims_ && !entries_.empty()) {
    throw Error(errc::kDimensionMismatch, "query has dims " + std::to_string(query.dims()) +
                                              ", index has " + std::to_string(dims_));
  }
  const double query_norm = norm_of(query.values);

  struct Candidate {
    double score;
    std::size_t entry;
  };
  std::vector<Candidate> scored;
  auto score_entry = [&](std::size_t i) {
    double score = 0.0;
    if (query_norm != 0.0 && norms_[i] != 0.0) {
      const auto& values = entries_[i].vector.values;
      double dot = 0.0;
      for (std::size_t d = 0; d < dims_; ++d) dot += static_cast<double>(query.values[d]) * values[d];
      score = dot / (query_norm * norms_[i]);
    }
    scored.push_back({score, i});
  };
  if (filter) {
    const auto& ids = by_kind_[kind_slot(*filter)];
    scored.reserve(ids.size());
    for (auto i : ids) score_entry(i);
  } else {
    scored.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) score_entry(i);
  }

  auto better = [&](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return entries_[a.entry].iri < entries_[b.entry].iri;
  };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);

  std::vector<ScoredTerm> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({entries_[scored[i].entry].iri, scored[i].score});
  return out;
}

VectorIndex index_build(const vocab::Vocabulary& vocabulary, const embed::Embedder& embedder,
                        const BuildOptions& options) {
  auto terms = vocabulary.index_set(options.index_set);
  std::vector<std::string> texts;
  texts.reserve(terms.size());
  for (const auto* term : terms) {
    texts.push_back(vocab::build_subgraph(*term, vocabulary, options.subgraph).rendered_text);
  }
  auto vectors = embedder.embed_batch(texts);
  std::size_t dims = vectors.empty() ? embedder.embed("").dims() : vectors.front().dims();
  VectorIndex index(dims, embedder.fingerprint());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    index.add({terms[i]->iri, terms[i]->kind, std::move(vectors[i]), std::move(texts[i])});
  }
  return index;
}

VectorIndex index_build(const vocab::Vocabulary& vocabulary, const embed::EmbedderConfig& config,
                        const BuildOptions& options) {
  auto embedder = embed::make_embedder(config);
  return index_build(vocabulary, *embedder, options);
}

std::string index_serialize(const VectorIndex& index) {
  Writer w;
  w.bytes(kMagic);
  w.u32(static_cast<std::uint32_t>(index.dims()));
  w.u64(index.size());
  w.str(index.fingerprint());
  for (const auto& e : index.entries()) {
    w.str(e.iri);
    w.u8(e.kind == TermKind::Class ? 0 : 1);
    for (float x : e.vector.values) w.f32(x);
    w.str(e.rendered_text);
  }
  return w.take();
}

void index_save(const VectorIndex& index, const std::string& path) {
  auto bytes = index_serialize(index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::kIoError, "cannot write index file " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(errc::kIoError, "short write on index file " + path);
}

VectorIndex index_deserialize(std::string_view bytes, const std::optional<std::string>& expected_fingerprint) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw Error(errc::kCorruptIndexFile, "bad index magic");
  }
  const std::size_t dims = r.u32();
  const std::uint64_t count = r.u64();
  std::string fingerprint = r.str();
  if (expected_fingerprint && *expected_fingerprint != fingerprint) {
    throw Error(errc::kCorruptIndexFile,
                "index fingerprint '" + fingerprint + "' does not match expected '" + *expected_fingerprint + "'");
  }
  // Each entry needs at least 9 bytes plus its vector; reject absurd counts
  // before reserving anything.
  if (count > r.remaining() / (9 + 4 * dims)) throw Error(errc::kCorruptIndexFile, "index file truncated");
  VectorIndex index(dims, std::move(fingerprint));
  for (std::uint64_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.iri = r.str();
    auto kind = r.u8();
    if (kind > 1) throw Error(errc::kCorruptIndexFile, "bad kind byte in entry " + e.iri);
    e.kind = kind == 0 ? TermKind::Class : TermKind::Property;
    e.vector.values.resize(dims);
    for (auto& x : e.vector.values) x = r.f32();
    e.vector.degenerate = norm_of(e.vector.values) == 0.0;
    e.rendered_text = r.str();
    try {
      index.add(std::move(e));
    } catch (const Error& err) {
      throw Error(errc::kCorruptIndexFile, err.what());
    }
  }
  if (!r.at_end()) throw Error(errc::kCorruptIndexFile, "trailing bytes after last index entry");
  return index;
}

VectorIndex index_load(const std::string& path, const std::optional<std::string>& expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIoError, "cannot read index file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return index_deserialize(buffer.str(), expected_fingerprint);
}

}  // namespace schemamap::vstore
