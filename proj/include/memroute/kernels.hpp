#pragma once

// Per-document scoring kernels used by retrieval.
//
// Every kernel has a serial reference and an OpenMP version. Both compute
// each document's score with the same arithmetic in the same order, so their
// outputs are bit-identical; the tests and bench/retrieval_bench rely on that.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memroute/memory_store.hpp"

namespace memroute {

struct Bm25Params;

enum class Execution { serial, parallel };

/// Row-major copy of a partition's embeddings with precomputed row norms.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t dim, std::span<const MemoryRecord> records);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return norms_.size(); }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  double norm(std::size_t i) const { return norms_[i]; }

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<double> norms_;
};

double dot(std::span<const float> a, std::span<const float> b);

/// One query term's BM25 contribution: idf * tf (k1 + 1) / (tf + k1 (1 - b + b dl / avgdl)).
inline double bm25_term_weight(double idf, double tf, double dl, double avgdl, double k1, double b) {
  if (tf <= 0.0) return 0.0;
  const double len_norm = avgdl > 0.0 ? dl / avgdl : 0.0;
  return idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len_norm));
}

double l2_norm(std::span<const float> v);

/// Cosine of every row against the query. Rows with zero norm score 0.
/// The query must be nonzero and of matching dimension (checked by caller).
std::vector<double> dense_scores_serial(const EmbeddingMatrix& m, std::span<const float> query);
std::vector<double> dense_scores_parallel(const EmbeddingMatrix& m, std::span<const float> query);

/// Term statistics of one partition: per-document term frequencies over
/// interned term ids, document lengths, and document frequencies.
class Bm25Corpus {
 public:
  Bm25Corpus() = default;
  Bm25Corpus(std::span<const std::string> documents, int ngram_max);

  std::size_t doc_count() const noexcept { return doc_len_.size(); }
  double avgdl() const noexcept { return avgdl_; }
  std::size_t df(std::string_view term) const;

  /// Query terms after n-gram expansion, deduplicated in first-seen order,
  /// restricted to the vocabulary. Each entry is (term id, idf).
  std::vector<std::pair<std::uint32_t, double>> query_terms(std::string_view query) const;

  double score_document(std::size_t doc, std::span<const std::pair<std::uint32_t, double>> query,
                        const Bm25Params& params) const;

 private:
  int ngram_max_ = 2;
  std::unordered_map<std::string, std::uint32_t> vocab_;
  std::vector<std::uint32_t> df_;
  // Sorted (term id, tf) per document.
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> tf_;
  std::vector<std::uint32_t> doc_len_;
  double avgdl_ = 0.0;
};

std::vector<double> bm25_scores_serial(const Bm25Corpus& corpus, std::string_view query,
                                       const Bm25Params& params);
std::vector<double> bm25_scores_parallel(const Bm25Corpus& corpus, std::string_view query,
                                         const Bm25Params& params);

inline std::vector<double> dense_scores(const EmbeddingMatrix& m, std::span<const float> query,
                                        Execution exec = Execution::parallel) {
  return exec == Execution::serial ? dense_scores_serial(m, query) : dense_scores_parallel(m, query);
}

inline std::vector<double> bm25_scores(const Bm25Corpus& corpus, std::string_view query,
                                       const Bm25Params& params, Execution exec = Execution::parallel) {
  return exec == Execution::serial ? bm25_scores_serial(corpus, query, params)
                                   : bm25_scores_parallel(corpus, query, params);
}

}  // namespace memroute
