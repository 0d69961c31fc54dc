#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "memroute/backends.hpp"

namespace memroute {

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  /// Identical text gives an identical vector of length dimension().
  virtual std::vector<float> embed(std::string_view text) const = 0;
};

/// Feature hashing of character trigrams (per word, with boundary markers)
/// and whole words into D signed buckets, then L2 normalization. Uses a
/// seeded 64-bit FNV-1a hash, so vectors are identical across runs and
/// platforms. Text without any word yields the first basis vector.
class DeterministicEmbedder : public Embedder {
 public:
  explicit DeterministicEmbedder(std::size_t dim, std::uint64_t seed = 0x5eedf00dULL);

  std::size_t dimension() const override { return dim_; }
  std::vector<float> embed(std::string_view text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Client for an embeddings endpoint: POST <base>/embeddings with
/// {"model", "input"}, reply {"data": [{"embedding": [...]}]}.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(std::string base_url, std::string model, std::size_t dim, HttpOptions options = {});

  std::size_t dimension() const override { return dim_; }
  /// Throws BackendError on transport failure or a reply of the wrong size.
  std::vector<float> embed(std::string_view text) const override;

 private:
  HttpEndpoint endpoint_;
  std::string model_;
  std::size_t dim_;
  HttpOptions options_;
};

/// "deterministic-test" (or "deterministic") or an http:// base URL.
std::unique_ptr<Embedder> make_embedder(const std::string& spec, std::size_t dim, const std::string& model = "",
                                        HttpOptions options = {});

}  // namespace memroute
