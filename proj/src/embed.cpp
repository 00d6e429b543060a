#include "schemamap/embed.hpp"

#include <cmath>
#include <mutex>
#include <semaphore>

#include <nlohmann/json.hpp>

#include "http_client.hpp"
#include "schemamap/errors.hpp"

namespace schemamap::embed {

namespace {

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

bool is_ascii_alnum(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Non-ASCII bytes are kept inside tokens, so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (c >= 0x80 || is_ascii_alnum(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string_view> code_points(std::string_view token) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < token.size()) {
    std::size_t j = i + 1;
    while (j < token.size() && (static_cast<unsigned char>(token[j]) & 0xC0) == 0x80) ++j;
    out.push_back(token.substr(i, j - i));
    i = j;
  }
  return out;
}

class BaselineEmbedder final : public Embedder {
 public:
  explicit BaselineEmbedder(std::size_t dims) : dims_(dims) {}

  EmbeddingVector embed(std::string_view text) const override { return baseline_hash_embed(text, dims_); }

  std::string fingerprint() const override {
    return "baseline/fnv1a64-word-trigram/v1/dims=" + std::to_string(dims_);
  }

 private:
  std::size_t dims_;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedderConfig config)
      : config_(std::move(config)), in_flight_(std::max(1, config_.max_in_flight)) {}

  EmbeddingVector embed(std::string_view text) const override {
    std::string owned(text);
    return embed_batch(std::span<const std::string>(&owned, 1)).front();
  }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out(texts.size());
    // Providers reject empty strings; those map to the flagged zero vector
    // locally and are left out of the request.
    nlohmann::json input = nlohmann::json::array();
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (texts[i].empty()) continue;
      input.push_back(texts[i]);
      positions.push_back(i);
    }
    if (!positions.empty()) {
      nlohmann::json body{{"model", config_.model}, {"input", input}};
      nlohmann::json response;
      {
        in_flight_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{in_flight_};
        response = detail::post_json(config_.endpoint, body, config_.auth_env,
                                     {config_.max_attempts, config_.initial_backoff},
                                     errc::kRemoteUnavailable);
      }
      auto data = response.find("data");
      if (data == response.end() || !data->is_array() || data->size() != positions.size()) {
        throw Error(errc::kRemoteUnavailable, "embeddings response has no matching data array");
      }
      for (std::size_t k = 0; k < positions.size(); ++k) {
        const auto& item = (*data)[k];
        // Providers may return items out of order; "index" wins when present.
        std::size_t slot = item.contains("index") ? item["index"].get<std::size_t>() : k;
        if (slot >= positions.size()) throw Error(errc::kRemoteUnavailable, "embedding index out of range");
        auto values = item.at("embedding").get<std::vector<float>>();
        EmbeddingVector v;
        v.values = std::move(values);
        v.degenerate = !normalize(v.values);
        out[positions[slot]] = std::move(v);
      }
    }
    std::size_t dims = 0;
    for (const auto& v : out) dims = std::max(dims, v.dims());
    for (auto& v : out) {
      if (v.values.empty()) {
        v.values.assign(dims, 0.0f);
        v.degenerate = true;
      } else if (v.dims() != dims) {
        throw Error(errc::kRemoteUnavailable, "embedding endpoint returned mixed dimensions");
      }
    }
    return out;
  }

  std::string fingerprint() const override { return "remote/" + config_.model + "@" + config_.endpoint; }

 private:
  EmbedderConfig config_;
  mutable std::counting_semaphore<> in_flight_;
};

}  // namespace

void validate(const EmbedderConfig& config) {
  if (config.backend == Backend::Baseline) {
    if (config.dims < kMinBaselineDims) {
      throw Error(errc::kInvalidArgument,
                  "baseline embedder needs dims >= " + std::to_string(kMinBaselineDims));
    }
    return;
  }
  if (config.endpoint.empty() || config.model.empty()) {
    throw Error(errc::kInvalidArgument, "remote embedder needs endpoint and model");
  }
  if (config.max_attempts < 1 || config.max_in_flight < 1) {
    throw Error(errc::kInvalidArgument, "remote embedder needs max_attempts >= 1 and max_in_flight >= 1");
  }
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
  validate(config);
  if (config.backend == Backend::Baseline) return std::make_unique<BaselineEmbedder>(config.dims);
  return std::make_unique<RemoteEmbedder>(config);
}

EmbeddingVector embed_text(const EmbedderConfig& config, std::string_view text) {
  return make_embedder(config)->embed(text);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::vector<std::string> baseline_features(std::string_view text) {
  std::vector<std::string> features;
  for (const auto& token : tokenize(text)) {
    features.push_back("w:" + token);
    auto cps = code_points(token);
    for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
      std::string gram = "g:";
      for (std::size_t k = i; k < i + 3; ++k) gram.append(cps[k]);
      features.push_back(std::move(gram));
    }
  }
  return features;
}

EmbeddingVector baseline_hash_embed(std::string_view text, std::size_t dims) {
  if (dims < kMinBaselineDims) {
    throw Error(errc::kInvalidArgument, "baseline embedder needs dims >= " + std::to_string(kMinBaselineDims));
  }
  // Integer accumulation keeps the result independent of feature order.
  std::vector<std::int64_t> counts(dims, 0);
  for (const auto& feature : baseline_features(text)) {
    auto h = fnv1a64(feature);
    counts[h % dims] += (h >> 63) ? -1 : 1;
  }
  double sum_sq = 0.0;
  for (auto c : counts) sum_sq += static_cast<double>(c) * static_cast<double>(c);
  EmbeddingVector v;
  v.values.assign(dims, 0.0f);
  if (sum_sq == 0.0) {
    v.degenerate = true;
    return v;
  }
  const double norm = std::sqrt(sum_sq);
  for (std::size_t i = 0; i < dims; ++i) v.values[i] = static_cast<float>(static_cast<double>(counts[i]) / norm);
  return v;
}

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw Error(errc::kDimensionMismatch,
                "vector dims differ: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    uu += static_cast<double>(u[i]) * u[i];
    vv += static_cast<double>(v[i]) * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) { return cosine(u.values, v.values); }

bool normalize(std::vector<float>& values) {
  double sum_sq = 0.0;
  for (float x : values) sum_sq += static_cast<double>(x) * x;
  if (sum_sq == 0.0) return false;
  const double norm = std::sqrt(sum_sq);
  for (auto& x : values) x = static_cast<float>(x / norm);
  return true;
}

}  // namespace schemamap::embed
