#include "memroute/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "memroute/errors.hpp"
#include "memroute/tokenize.hpp"

namespace memroute {

void Bm25Params::validate() const {
  if (!(k1 >= 0.0)) throw ConfigError("bm25.k1 must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("bm25.b must be in [0, 1]");
  if (ngram_max < 1) throw ConfigError("bm25.ngram_max must be >= 1");
}

void FusionConfig::validate() const {
  if (!(rrf_k > 0.0)) throw ConfigError("fusion.rrf_k must be positive");
  if (!(dense_weight >= 0.0)) throw ConfigError("fusion.dense_weight must be >= 0");
  if (!(sparse_weight >= 0.0)) throw ConfigError("fusion.sparse_weight must be >= 0");
  if (strategy != FusionStrategy::reciprocal_rank && !(dense_weight + sparse_weight > 0.0))
    throw ConfigError("fusion.dense_weight + fusion.sparse_weight must be positive");
  if (!(bm25_dominance_threshold >= 0.0 && bm25_dominance_threshold <= 1.0))
    throw ConfigError("fusion.bm25_dominance_threshold must be in [0, 1]");
}

const char* to_string(FusionStrategy s) noexcept {
  switch (s) {
    case FusionStrategy::reciprocal_rank: return "reciprocal_rank";
    case FusionStrategy::weighted: return "weighted";
    case FusionStrategy::bm25_dominant: return "bm25_dominant";
  }
  return "?";
}

const char* to_string(RetrievalMode m) noexcept {
  switch (m) {
    case RetrievalMode::dense: return "dense";
    case RetrievalMode::sparse: return "sparse";
    case RetrievalMode::hybrid: return "hybrid";
  }
  return "?";
}

FusionStrategy parse_fusion_strategy(std::string_view s) {
  if (s == "reciprocal_rank" || s == "rrf") return FusionStrategy::reciprocal_rank;
  if (s == "weighted") return FusionStrategy::weighted;
  if (s == "bm25_dominant") return FusionStrategy::bm25_dominant;
  throw ConfigError("fusion.strategy: unknown value '" + std::string(s) +
                    "' (expected reciprocal_rank, weighted or bm25_dominant)");
}

RetrievalMode parse_retrieval_mode(std::string_view s) {
  if (s == "dense") return RetrievalMode::dense;
  if (s == "sparse") return RetrievalMode::sparse;
  if (s == "hybrid") return RetrievalMode::hybrid;
  throw ConfigError("retrieval mode: unknown value '" + std::string(s) +
                    "' (expected dense, sparse or hybrid)");
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError(a.size(), b.size());
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine of a zero-norm vector is undefined");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

CorpusStats CorpusStats::from_documents(std::span<const std::vector<std::string>> documents) {
  CorpusStats s;
  s.doc_count = documents.size();
  std::size_t total = 0;
  for (const auto& doc : documents) {
    total += doc.size();
    std::unordered_set<std::string_view> seen(doc.begin(), doc.end());
    for (auto t : seen) {
      auto it = s.df.find(t);
      if (it == s.df.end()) s.df.emplace(std::string(t), 1);
      else ++it->second;
    }
  }
  s.avgdl = documents.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(documents.size());
  return s;
}

double bm25_idf(std::size_t doc_count, std::size_t df) {
  const double n = static_cast<double>(doc_count);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_score(std::span<const std::string> query_terms, std::span<const std::string> record_terms,
                  const CorpusStats& stats, const Bm25Params& params) {
  if (stats.doc_count == 0) return 0.0;
  std::unordered_map<std::string_view, std::size_t> tf;
  for (const auto& t : record_terms) ++tf[t];
  std::unordered_set<std::string_view> seen;
  double s = 0.0;
  for (const auto& q : query_terms) {
    if (!seen.insert(q).second) continue;
    auto df_it = stats.df.find(q);
    auto tf_it = tf.find(q);
    if (df_it == stats.df.end() || tf_it == tf.end()) continue;
    s += bm25_term_weight(bm25_idf(stats.doc_count, df_it->second), static_cast<double>(tf_it->second),
                          static_cast<double>(record_terms.size()), stats.avgdl, params.k1, params.b);
  }
  return s;
}

namespace {

struct Scored {
  double score;
  RecordId id;
};

// Descending score, ascending id on ties.
bool ranks_before(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

std::vector<Scored> top_k(std::span<const MemoryRecord> partition, const std::vector<double>& scores,
                          std::size_t k, bool drop_zero) {
  std::vector<Scored> all;
  all.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (drop_zero && !(scores[i] > 0.0)) continue;
    all.push_back({scores[i], partition[i].id});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), ranks_before);
  all.resize(n);
  return all;
}

}  // namespace

std::vector<ScoredHit> dense_search(std::span<const MemoryRecord> partition,
                                    std::span<const float> query_embedding, std::size_t k, Execution exec) {
  if (partition.empty() || k == 0) return {};
  const std::size_t dim = partition.front().embedding.size();
  if (query_embedding.size() != dim) throw DimensionError(dim, query_embedding.size());
  if (l2_norm(query_embedding) == 0.0) throw std::invalid_argument("dense query embedding has zero norm");

  const EmbeddingMatrix m(dim, partition);
  const auto ranked = top_k(partition, dense_scores(m, query_embedding, exec), k, false);
  std::vector<ScoredHit> out;
  out.reserve(ranked.size());
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    ScoredHit h;
    h.record_id = ranked[r].id;
    h.dense_score = ranked[r].score;
    h.dense_rank = r + 1;
    h.fused_score = ranked[r].score;
    out.push_back(h);
  }
  return out;
}

std::vector<ScoredHit> sparse_search(std::span<const MemoryRecord> partition, std::string_view query_text,
                                     std::size_t k, const Bm25Params& params, Execution exec) {
  if (partition.empty() || k == 0) return {};
  std::vector<std::string> docs;
  docs.reserve(partition.size());
  for (const auto& r : partition) docs.push_back(r.rendered_text);
  const Bm25Corpus corpus(docs, params.ngram_max);
  const auto ranked = top_k(partition, bm25_scores(corpus, query_text, params, exec), k, true);
  std::vector<ScoredHit> out;
  out.reserve(ranked.size());
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    ScoredHit h;
    h.record_id = ranked[r].id;
    h.sparse_score = ranked[r].score;
    h.sparse_rank = r + 1;
    h.fused_score = ranked[r].score;
    out.push_back(h);
  }
  return out;
}

namespace {

// Min-max normalization within one channel's list. Lists of size <= 1 or
// with no spread normalize to 1.
std::unordered_map<RecordId, double> normalized(std::span<const ScoredHit> list, bool dense) {
  std::unordered_map<RecordId, double> out;
  if (list.empty()) return out;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& h : list) {
    const double s = dense ? h.dense_score.value_or(0.0) : h.sparse_score.value_or(0.0);
    if (first || s < lo) lo = s;
    if (first || s > hi) hi = s;
    first = false;
  }
  const double span = hi - lo;
  for (const auto& h : list) {
    const double s = dense ? h.dense_score.value_or(0.0) : h.sparse_score.value_or(0.0);
    out[h.record_id] = (list.size() <= 1 || span <= 0.0) ? 1.0 : (s - lo) / span;
  }
  return out;
}

bool fused_before(const ScoredHit& a, const ScoredHit& b) {
  if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
  return a.record_id < b.record_id;
}

}  // namespace

std::vector<ScoredHit> fuse(std::span<const ScoredHit> dense, std::span<const ScoredHit> sparse,
                            const FusionConfig& cfg, std::size_t k) {
  std::vector<ScoredHit> pool;
  std::unordered_map<RecordId, std::size_t> index;
  auto slot = [&](RecordId id) -> ScoredHit& {
    auto [it, inserted] = index.try_emplace(id, pool.size());
    if (inserted) {
      pool.emplace_back();
      pool.back().record_id = id;
    }
    return pool[it->second];
  };
  for (std::size_t i = 0; i < dense.size(); ++i) {
    auto& h = slot(dense[i].record_id);
    h.dense_score = dense[i].dense_score;
    h.dense_rank = dense[i].dense_rank.value_or(i + 1);
  }
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    auto& h = slot(sparse[i].record_id);
    h.sparse_score = sparse[i].sparse_score;
    h.sparse_rank = sparse[i].sparse_rank.value_or(i + 1);
  }

  if (cfg.strategy == FusionStrategy::reciprocal_rank) {
    for (auto& h : pool) {
      double s = 0.0;
      if (h.dense_rank) s += 1.0 / (cfg.rrf_k + static_cast<double>(*h.dense_rank));
      if (h.sparse_rank) s += 1.0 / (cfg.rrf_k + static_cast<double>(*h.sparse_rank));
      h.fused_score = s;
    }
    std::sort(pool.begin(), pool.end(), fused_before);
  } else {
    const auto nd = normalized(dense, true);
    const auto ns = normalized(sparse, false);
    auto norm_of = [](const std::unordered_map<RecordId, double>& m, RecordId id) {
      auto it = m.find(id);
      return it == m.end() ? 0.0 : it->second;
    };
    for (auto& h : pool)
      h.fused_score = cfg.dense_weight * norm_of(nd, h.record_id) + cfg.sparse_weight * norm_of(ns, h.record_id);
    std::sort(pool.begin(), pool.end(), fused_before);

    if (cfg.strategy == FusionStrategy::bm25_dominant) {
      auto promoted = [&](const ScoredHit& h) {
        return h.sparse_rank.has_value() && norm_of(ns, h.record_id) >= cfg.bm25_dominance_threshold;
      };
      auto mid = std::stable_partition(pool.begin(), pool.end(), promoted);
      std::sort(pool.begin(), mid,
                [](const ScoredHit& a, const ScoredHit& b) { return *a.sparse_rank < *b.sparse_rank; });
    }
  }
  if (pool.size() > k) pool.resize(k);
  return pool;
}

std::vector<ScoredHit> search(std::span<const MemoryRecord> partition, const SearchRequest& req) {
  if (partition.empty() || req.k == 0) return {};
  const bool have_embedding = req.query_embedding.has_value();
  switch (req.mode) {
    case RetrievalMode::dense:
      if (!have_embedding) return {};
      return dense_search(partition, *req.query_embedding, req.k);
    case RetrievalMode::sparse:
      return sparse_search(partition, req.query_text, req.k, req.bm25);
    case RetrievalMode::hybrid: {
      const std::size_t pool = req.k * std::max<std::size_t>(req.overfetch, 1);
      std::vector<ScoredHit> dense;
      if (have_embedding) dense = dense_search(partition, *req.query_embedding, pool);
      const auto sparse = sparse_search(partition, req.query_text, pool, req.bm25);
      return fuse(dense, sparse, req.fusion, req.k);
    }
  }
  return {};
}

std::vector<ScoredHit> Retriever::dense_search(std::span<const float> query_embedding,
                                               std::string_view user_id, std::size_t k) const {
  if (query_embedding.size() != store_.embedding_dim())
    throw DimensionError(store_.embedding_dim(), query_embedding.size());
  const auto partition = store_.scan(user_id);
  return memroute::dense_search(partition, query_embedding, k);
}

std::vector<ScoredHit> Retriever::sparse_search(std::string_view query_text, std::string_view user_id,
                                                std::size_t k, const Bm25Params& params) const {
  const auto partition = store_.scan(user_id);
  return memroute::sparse_search(partition, query_text, k, params);
}

std::vector<ScoredHit> Retriever::search(std::string_view user_id, const SearchRequest& req) const {
  if (req.query_embedding && req.query_embedding->size() != store_.embedding_dim())
    throw DimensionError(store_.embedding_dim(), req.query_embedding->size());
  const auto partition = store_.scan(user_id);
  return memroute::search(partition, req);
}

std::vector<MemoryRecord> Retriever::retrieve(std::string_view user_id, const SearchRequest& req,
                                              std::vector<ScoredHit>* hits_out) const {
  if (req.query_embedding && req.query_embedding->size() != store_.embedding_dim())
    throw DimensionError(store_.embedding_dim(), req.query_embedding->size());
  const auto partition = store_.scan(user_id);
  const auto hits = memroute::search(partition, req);
  std::unordered_map<RecordId, const MemoryRecord*> by_id;
  for (const auto& r : partition) by_id.emplace(r.id, &r);
  std::vector<MemoryRecord> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(*by_id.at(h.record_id));
  if (hits_out) *hits_out = hits;
  return out;
}

}  // namespace memroute
