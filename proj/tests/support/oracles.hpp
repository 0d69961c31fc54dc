#pragma once

// Brute-force reference implementations written independently of the
// library, used as test oracles.

#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

double cosine(const std::vector<float>& a, const std::vector<float>& b);

/// Lowercased alphanumeric words (non-ASCII bytes kept), then every
/// contiguous n-gram up to ngram_max, n-gram words joined by one space.
std::vector<std::string> terms(const std::string& text, int ngram_max);

struct Doc {
  std::uint64_t id;
  std::string text;
  std::vector<float> embedding;
};

/// BM25 of every document against the query, recomputing all statistics
/// from scratch by linear scans.
std::vector<double> bm25_all(const std::vector<Doc>& docs, const std::string& query, double k1, double b,
                             int ngram_max);

/// Ids of the top k by score descending, ties by ascending id.
std::vector<std::uint64_t> rank(const std::vector<Doc>& docs, const std::vector<double>& scores, std::size_t k,
                                bool drop_nonpositive);

std::vector<std::uint64_t> dense_topk(const std::vector<Doc>& docs, const std::vector<float>& q, std::size_t k);
std::vector<std::uint64_t> sparse_topk(const std::vector<Doc>& docs, const std::string& query, std::size_t k,
                                       double k1 = 1.2, double b = 0.75, int ngram_max = 2);

double eff_cost(long long in, long long out, double p);

/// Multiset overlap F1 over already-normalized tokens.
double f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

}  // namespace oracle
