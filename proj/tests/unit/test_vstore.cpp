#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "fixtures.hpp"
#include "schemamap/errors.hpp"
#include "schemamap/vstore.hpp"

using namespace schemamap;
using namespace schemamap::vstore;
using embed::EmbeddingVector;

namespace {

EmbeddingVector vec(std::initializer_list<float> xs) { return EmbeddingVector{std::vector<float>(xs), false}; }

// Full scan + full sort, written independently of VectorIndex::top_k.
std::vector<ScoredTerm> naive_top_k(const VectorIndex& index, const EmbeddingVector& q, std::size_t k,
                                    std::optional<TermKind> filter) {
  std::vector<ScoredTerm> all;
  for (const auto& e : index.entries()) {
    if (filter && e.kind != *filter) continue;
    double dot = 0, qq = 0, ee = 0;
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      dot += static_cast<double>(q.values[i]) * e.vector.values[i];
      qq += static_cast<double>(q.values[i]) * q.values[i];
      ee += static_cast<double>(e.vector.values[i]) * e.vector.values[i];
    }
    double s = (qq == 0 || ee == 0) ? 0.0 : dot / (std::sqrt(qq) * std::sqrt(ee));
    all.push_back({e.iri, s});
  }
  std::sort(all.begin(), all.end(), [](const ScoredTerm& a, const ScoredTerm& b) {
    return a.score != b.score ? a.score > b.score : a.iri < b.iri;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

std::string error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path); }
};

VectorIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dims) {
  std::normal_distribution<float> g;
  VectorIndex index(dims, "test/v1");
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingVector v;
    for (std::size_t d = 0; d < dims; ++d) v.values.push_back(g(rng));
    embed::normalize(v.values);
    index.add({"urn:t:" + std::to_string(i), (i % 3 == 0) ? TermKind::Class : TermKind::Property, v,
               "text " + std::to_string(i)});
  }
  return index;
}

}  // namespace

TEST_CASE("empty index returns nothing") {
  VectorIndex index(4, "fp");
  CHECK(index.top_k(vec({1, 0, 0, 0}), 5).empty());
}

TEST_CASE("ties break by iri ascending") {
  VectorIndex index(2, "fp");
  index.add({"x:z", TermKind::Class, vec({1, 0}), "z"});
  index.add({"x:y", TermKind::Class, vec({0, 1}), "y"});
  index.add({"x:a", TermKind::Property, vec({1, 1}), "a"});
  auto q = vec({1, 1});
  // Hand-computed: x:a = 1, x:y = x:z = 1/sqrt(2).
  auto all = index.top_k(q, 10);
  REQUIRE(all.size() == 3);
  CHECK(all[0].iri == "x:a");
  CHECK(all[0].score == doctest::Approx(1.0));
  CHECK(all[1].iri == "x:y");
  CHECK(all[2].iri == "x:z");
  CHECK(all[1].score == all[2].score);
  CHECK(all[1].score == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(all == naive_top_k(index, q, 10, std::nullopt));

  auto classes = index.top_k(q, 10, TermKind::Class);
  REQUIRE(classes.size() == 2);
  CHECK(classes[0].iri == "x:y");
}

TEST_CASE("argument errors") {
  VectorIndex index(2, "fp");
  index.add({"x:a", TermKind::Class, vec({1, 0}), "a"});
  CHECK(error_code([&] { index.top_k(vec({1, 0, 0}), 1); }) == errc::kDimensionMismatch);
  CHECK(error_code([&] { index.top_k(vec({1, 0}), 0); }) == errc::kInvalidArgument);
  CHECK(error_code([&] { index.add({"x:a", TermKind::Class, vec({0, 1}), "dup"}); }) == errc::kInvalidArgument);
  CHECK(error_code([&] { index.add({"x:b", TermKind::Class, vec({0, 1, 1}), "b"}); }) == errc::kDimensionMismatch);
}

TEST_CASE("top_k matches the exhaustive oracle, is deterministic and prefix-monotone") {
  std::mt19937_64 rng(2024);
  for (int instance = 0; instance < 10; ++instance) {
    std::uniform_int_distribution<std::size_t> size_dist(1, 600);
    auto index = random_index(rng, size_dist(rng), 24);
    // Force exact ties with duplicated vectors.
    auto dup = index.entries()[0];
    dup.iri = "urn:dup";
    index.add(dup);
    for (int q = 0; q < 20; ++q) {
      EmbeddingVector query = index.entries()[rng() % index.size()].vector;
      if (q % 2) {
        std::normal_distribution<float> g;
        for (auto& x : query.values) x = g(rng);
      }
      std::size_t k = 1 + rng() % 30;
      std::optional<TermKind> filter;
      if (q % 3 == 1) filter = TermKind::Class;
      if (q % 3 == 2) filter = TermKind::Property;
      auto got = index.top_k(query, k, filter);
      REQUIRE(got == naive_top_k(index, query, k, filter));
      CHECK(got == index.top_k(query, k, filter));
      auto longer = index.top_k(query, k + 1, filter);
      REQUIRE(longer.size() >= got.size());
      CHECK(std::equal(got.begin(), got.end(), longer.begin()));
    }
  }
}

TEST_CASE("index_build over a two-term vocabulary") {
  auto v = vocab::parse_vocabulary(R"({"@graph": [
    {"@id": "schema:Place", "@type": "rdfs:Class", "rdfs:label": "Place", "rdfs:comment": "A place."},
    {"@id": "schema:address", "@type": "rdf:Property", "rdfs:label": "address", "rdfs:comment": "Address.",
     "schema:domainIncludes": {"@id": "schema:Place"}}]})");
  auto index = index_build(v, embed::EmbedderConfig{});
  CHECK(index.size() == 2);
  CHECK(index.dims() == 512);
  CHECK(index.fingerprint() == embed::make_embedder({})->fingerprint());
  CHECK_FALSE(index.fingerprint().empty());
  CHECK(index.find("https://schema.org/Place")->rendered_text == "Place — Class — A place.\nHasProperty: address");

  auto empty = index_build(vocab::Vocabulary{}, embed::EmbedderConfig{});
  CHECK(empty.empty());
}

TEST_CASE("persistence round trip") {
  SUBCASE("empty") {
    TempFile f("schemamap_empty.swix");
    VectorIndex index(16, "fp/x");
    index_save(index, f.path.string());
    auto loaded = index_load(f.path.string());
    CHECK(loaded.size() == 0);
    CHECK(loaded.dims() == 16);
    CHECK(loaded.fingerprint() == "fp/x");
  }
  SUBCASE("random entries keep rankings and scores") {
    std::mt19937_64 rng(99);
    auto index = random_index(rng, 300, 32);
    TempFile f("schemamap_rand.swix");
    index_save(index, f.path.string());
    auto loaded = index_load(f.path.string(), index.fingerprint());
    REQUIRE(loaded.size() == index.size());
    for (int q = 0; q < 30; ++q) {
      const auto& query = index.entries()[rng() % index.size()].vector;
      auto a = index.top_k(query, 20);
      auto b = loaded.top_k(query, 20);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].iri == b[i].iri);
        CHECK(std::abs(a[i].score - b[i].score) <= 1e-9);
      }
    }
    CHECK(index_serialize(loaded) == index_serialize(index));
  }
}

TEST_CASE("corrupt files are rejected") {
  VectorIndex index(2, "fp");
  index.add({"x:a", TermKind::Class, vec({1, 0}), "alpha"});
  auto bytes = index_serialize(index);
  CHECK(bytes.substr(0, 5) == "SWIX1");

  CHECK(error_code([&] { index_deserialize(bytes.substr(0, bytes.size() - 1)); }) == errc::kCorruptIndexFile);
  CHECK(error_code([&] { index_deserialize(bytes + "x"); }) == errc::kCorruptIndexFile);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(error_code([&] { index_deserialize(bad_magic); }) == errc::kCorruptIndexFile);
  CHECK(error_code([&] { index_deserialize(bytes, std::string("other")); }) == errc::kCorruptIndexFile);
  CHECK(error_code([&] { index_deserialize(""); }) == errc::kCorruptIndexFile);

  // Truncating on disk behaves the same.
  TempFile f("schemamap_trunc.swix");
  index_save(index, f.path.string());
  std::filesystem::resize_file(f.path, std::filesystem::file_size(f.path) - 1);
  CHECK(error_code([&] { index_load(f.path.string()); }) == errc::kCorruptIndexFile);
}

TEST_CASE("byte layout is little-endian and length-prefixed") {
  VectorIndex index(1, "f");
  index.add({"i", TermKind::Property, vec({1.0f}), "t"});
  auto b = index_serialize(index);
  const std::string expected("SWIX1"
                             "\x01\x00\x00\x00"                  // dims
                             "\x01\x00\x00\x00\x00\x00\x00\x00"  // count
                             "\x01\x00\x00\x00"
                             "f"
                             "\x01\x00\x00\x00"
                             "i"
                             "\x01"
                             "\x00\x00\x80\x3f"  // 1.0f
                             "\x01\x00\x00\x00"
                             "t",
                             5 + 4 + 8 + 5 + 5 + 1 + 4 + 5);
  CHECK(b == expected);
}
