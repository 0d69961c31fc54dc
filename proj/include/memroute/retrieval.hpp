#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memroute/kernels.hpp"
#include "memroute/memory_store.hpp"

namespace memroute {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  int ngram_max = 2;

  void validate() const;
};

enum class FusionStrategy { reciprocal_rank, weighted, bm25_dominant };

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::reciprocal_rank;
  double rrf_k = 60.0;
  double dense_weight = 0.5;
  double sparse_weight = 0.5;
  /// Normalized sparse score at or above which bm25_dominant promotes a hit.
  double bm25_dominance_threshold = 0.8;

  void validate() const;
};

/// Which channels a search consults.
enum class RetrievalMode { dense, sparse, hybrid };

const char* to_string(FusionStrategy s) noexcept;
const char* to_string(RetrievalMode m) noexcept;
FusionStrategy parse_fusion_strategy(std::string_view s);
RetrievalMode parse_retrieval_mode(std::string_view s);

struct ScoredHit {
  RecordId record_id = 0;
  std::optional<double> dense_score;
  std::optional<double> sparse_score;
  double fused_score = 0.0;
  std::optional<std::size_t> dense_rank;
  std::optional<std::size_t> sparse_rank;

  bool operator==(const ScoredHit&) const = default;
};

/// dot(a, b) / (|a| |b|). Throws DimensionError on length mismatch and
/// std::invalid_argument when either vector has zero norm.
double cosine(std::span<const float> a, std::span<const float> b);

/// Statistics of the partition a BM25 score is computed against.
struct CorpusStats {
  std::size_t doc_count = 0;
  double avgdl = 0.0;
  std::map<std::string, std::size_t, std::less<>> df;

  static CorpusStats from_documents(std::span<const std::vector<std::string>> documents);
};

/// ln(1 + (N - df + 0.5) / (df + 0.5))
double bm25_idf(std::size_t doc_count, std::size_t df);

/// Okapi BM25 of one document. Query terms are counted once each.
/// An empty corpus scores 0.
double bm25_score(std::span<const std::string> query_terms, std::span<const std::string> record_terms,
                  const CorpusStats& stats, const Bm25Params& params);

/// Top-k by cosine, ties by ascending record id.
std::vector<ScoredHit> dense_search(std::span<const MemoryRecord> partition,
                                    std::span<const float> query_embedding, std::size_t k,
                                    Execution exec = Execution::parallel);

/// Top-k by BM25 over rendered_text, zero scores dropped, ties by ascending record id.
std::vector<ScoredHit> sparse_search(std::span<const MemoryRecord> partition, std::string_view query_text,
                                     std::size_t k, const Bm25Params& params,
                                     Execution exec = Execution::parallel);

/// Combines a dense and a sparse ranked list into at most k hits.
std::vector<ScoredHit> fuse(std::span<const ScoredHit> dense, std::span<const ScoredHit> sparse,
                            const FusionConfig& cfg, std::size_t k);

struct SearchRequest {
  std::string query_text;
  /// Absent when no embedding is available; hybrid then degrades to sparse.
  std::optional<std::vector<float>> query_embedding;
  std::size_t k = 5;
  RetrievalMode mode = RetrievalMode::hybrid;
  FusionConfig fusion;
  Bm25Params bm25;
  /// Each channel fetches overfetch * k candidates before fusion.
  std::size_t overfetch = 2;
};

std::vector<ScoredHit> search(std::span<const MemoryRecord> partition, const SearchRequest& req);

/// Store-facing wrapper: every call works on a scan() snapshot of one partition.
class Retriever {
 public:
  explicit Retriever(const MemoryStore& store) : store_(store) {}

  std::vector<ScoredHit> dense_search(std::span<const float> query_embedding, std::string_view user_id,
                                      std::size_t k) const;
  std::vector<ScoredHit> sparse_search(std::string_view query_text, std::string_view user_id,
                                       std::size_t k, const Bm25Params& params = {}) const;
  std::vector<ScoredHit> search(std::string_view user_id, const SearchRequest& req) const;

  /// Search plus resolution of hits to their records, in rank order.
  std::vector<MemoryRecord> retrieve(std::string_view user_id, const SearchRequest& req,
                                     std::vector<ScoredHit>* hits_out = nullptr) const;

 private:
  const MemoryStore& store_;
};

}  // namespace memroute
