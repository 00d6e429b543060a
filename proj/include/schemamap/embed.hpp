#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace schemamap::embed {

struct EmbeddingVector {
  std::vector<float> values;
  // Set for the empty-text case: all zeros, no direction.
  bool degenerate = false;

  std::size_t dims() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

enum class Backend { Baseline, Remote };

inline constexpr std::size_t kDefaultBaselineDims = 512;
inline constexpr std::size_t kMinBaselineDims = 16;

struct EmbedderConfig {
  Backend backend = Backend::Baseline;
  std::size_t dims = kDefaultBaselineDims;  // Baseline only

  // Remote only. The auth token is read from the environment variable named
  // by auth_env at request time, never stored in config.
  std::string endpoint;
  std::string model;
  std::string auth_env;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  int max_in_flight = 4;
};

// Throws Error{InvalidArgument} when the config violates its invariants.
void validate(const EmbedderConfig& config);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;
  // Identifies backend, dimensionality and feature-scheme version; stored in
  // every index so queries are never scored against a foreign embedder.
  virtual std::string fingerprint() const = 0;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

EmbeddingVector embed_text(const EmbedderConfig& config, std::string_view text);

// Feature hashing: lowercased word tokens plus code-point trigrams of each
// token, hashed with 64-bit FNV-1a into dims buckets with a sign taken from
// the top hash bit, then L2-normalized.
EmbeddingVector baseline_hash_embed(std::string_view text, std::size_t dims);

// The raw features the baseline embedder hashes, in emission order.
std::vector<std::string> baseline_features(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);

// dot(u,v) / (|u||v|), 0 when either norm is zero. Throws DimensionMismatch.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);
double cosine(std::span<const float> u, std::span<const float> v);

// Rescales to unit length in place; returns false (and leaves zeros) for a
// zero vector.
bool normalize(std::vector<float>& values);

}  // namespace schemamap::embed
