#include "memroute/embedder.hpp"

#include <cmath>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "memroute/errors.hpp"
#include "memroute/tokenize.hpp"

namespace memroute {

using json = nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // Final avalanche.
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

}  // namespace

DeterministicEmbedder::DeterministicEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("embedder dimension must be positive");
}

std::vector<float> DeterministicEmbedder::embed(std::string_view text) const {
  std::vector<double> acc(dim_, 0.0);
  auto add = [&](std::string_view feature, double weight) {
    const std::uint64_t h = fnv1a(feature, seed_);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    acc[h % dim_] += sign * weight;
  };
  const auto words = word_tokens(text);
  for (const auto& w : words) {
    add("w:" + w, 1.0);
    const std::string padded = "#" + w + "#";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(std::string_view(padded).substr(i, 3), 0.5);
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(dim_, 0.0f);
  if (norm == 0.0) {
    out[0] = 1.0f;
    return out;
  }
  for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::string model, std::size_t dim, HttpOptions options)
    : endpoint_(HttpEndpoint::parse(base_url)), model_(std::move(model)), dim_(dim), options_(std::move(options)) {
  if (dim == 0) throw ConfigError("embedder dimension must be positive");
}

std::vector<float> HttpEmbedder::embed(std::string_view text) const {
  const std::string body = json{{"model", model_}, {"input", std::string(text)}}.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    httplib::Client cli(endpoint_.scheme_host_port);
    cli.set_connection_timeout(options_.timeout_seconds, 0);
    cli.set_read_timeout(options_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
    auto res = cli.Post(endpoint_.path_prefix + "/embeddings", headers, body, "application/json");
    if (!res) {
      last_error = "embedder at " + endpoint_.scheme_host_port + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200)
      throw BackendError(BackendError::Kind::http_status, "embedder: HTTP " + std::to_string(res->status));
    std::vector<float> v;
    try {
      v = json::parse(res->body).at("data").at(0).at("embedding").get<std::vector<float>>();
    } catch (const json::exception& e) {
      throw BackendError(BackendError::Kind::malformed, std::string("embedder reply: ") + e.what());
    }
    if (v.size() != dim_)
      throw BackendError(BackendError::Kind::malformed, "embedder returned dimension " + std::to_string(v.size()) +
                                                            ", expected " + std::to_string(dim_));
    return v;
  }
  throw BackendError(BackendError::Kind::transport, last_error);
}

std::unique_ptr<Embedder> make_embedder(const std::string& spec, std::size_t dim, const std::string& model,
                                        HttpOptions options) {
  if (spec == "deterministic-test" || spec == "deterministic") return std::make_unique<DeterministicEmbedder>(dim);
  if (spec.rfind("http://", 0) == 0) return std::make_unique<HttpEmbedder>(spec, model, dim, std::move(options));
  throw ConfigError("embedder: unsupported value '" + spec + "' (expected deterministic-test or an http:// URL)");
}

}  // namespace memroute
