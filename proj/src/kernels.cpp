#include "memroute/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "memroute/retrieval.hpp"
#include "memroute/tokenize.hpp"

namespace memroute {

namespace {

// Smaller partitions are scored on one thread.
constexpr std::size_t kParallelMinRows = 64;

double cosine_row(const EmbeddingMatrix& m, std::size_t i, std::span<const float> query, double qnorm) {
  const double rn = m.norm(i);
  if (rn == 0.0) return 0.0;
  return dot(m.row(i), query) / (rn * qnorm);
}

}  // namespace

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double l2_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim, std::span<const MemoryRecord> records) : dim_(dim) {
  data_.resize(dim * records.size());
  norms_.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& e = records[i].embedding;
    std::copy_n(e.begin(), std::min(e.size(), dim), data_.begin() + i * dim);
    norms_[i] = l2_norm(row(i));
  }
}

std::vector<double> dense_scores_serial(const EmbeddingMatrix& m, std::span<const float> query) {
  const double qnorm = l2_norm(query);
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = cosine_row(m, i, query, qnorm);
  return out;
}

std::vector<double> dense_scores_parallel(const EmbeddingMatrix& m, std::span<const float> query) {
  const double qnorm = l2_norm(query);
  const auto n = static_cast<std::int64_t>(m.rows());
  std::vector<double> out(m.rows());
#pragma omp parallel for schedule(static) if (m.rows() >= kParallelMinRows)
  for (std::int64_t i = 0; i < n; ++i) out[i] = cosine_row(m, i, query, qnorm);
  return out;
}

Bm25Corpus::Bm25Corpus(std::span<const std::string> documents, int ngram_max) : ngram_max_(ngram_max) {
  tf_.resize(documents.size());
  doc_len_.resize(documents.size());
  std::uint64_t total_len = 0;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    const auto terms = bm25_terms(documents[d], ngram_max);
    doc_len_[d] = static_cast<std::uint32_t>(terms.size());
    total_len += terms.size();
    std::unordered_map<std::uint32_t, std::uint32_t> counts;
    for (const auto& t : terms) {
      auto [it, inserted] = vocab_.try_emplace(t, static_cast<std::uint32_t>(vocab_.size()));
      if (inserted) df_.push_back(0);
      ++counts[it->second];
    }
    auto& row = tf_[d];
    row.assign(counts.begin(), counts.end());
    std::sort(row.begin(), row.end());
    for (const auto& [tid, _] : row) ++df_[tid];
  }
  avgdl_ = documents.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(documents.size());
}

std::size_t Bm25Corpus::df(std::string_view term) const {
  auto it = vocab_.find(std::string(term));
  return it == vocab_.end() ? 0 : df_[it->second];
}

std::vector<std::pair<std::uint32_t, double>> Bm25Corpus::query_terms(std::string_view query) const {
  std::vector<std::pair<std::uint32_t, double>> out;
  std::unordered_set<std::uint32_t> seen;
  for (const auto& t : bm25_terms(query, ngram_max_)) {
    auto it = vocab_.find(t);
    if (it == vocab_.end() || !seen.insert(it->second).second) continue;
    out.emplace_back(it->second, bm25_idf(doc_count(), df_[it->second]));
  }
  return out;
}

double Bm25Corpus::score_document(std::size_t doc, std::span<const std::pair<std::uint32_t, double>> query,
                                  const Bm25Params& params) const {
  const auto& row = tf_[doc];
  double s = 0.0;
  for (const auto& [tid, idf] : query) {
    auto it = std::lower_bound(row.begin(), row.end(), std::pair<std::uint32_t, std::uint32_t>{tid, 0});
    if (it == row.end() || it->first != tid) continue;
    s += bm25_term_weight(idf, it->second, doc_len_[doc], avgdl_, params.k1, params.b);
  }
  return s;
}

std::vector<double> bm25_scores_serial(const Bm25Corpus& corpus, std::string_view query,
                                       const Bm25Params& params) {
  const auto q = corpus.query_terms(query);
  std::vector<double> out(corpus.doc_count(), 0.0);
  if (q.empty()) return out;
  for (std::size_t d = 0; d < corpus.doc_count(); ++d) out[d] = corpus.score_document(d, q, params);
  return out;
}

std::vector<double> bm25_scores_parallel(const Bm25Corpus& corpus, std::string_view query,
                                         const Bm25Params& params) {
  const auto q = corpus.query_terms(query);
  std::vector<double> out(corpus.doc_count(), 0.0);
  if (q.empty()) return out;
  const auto n = static_cast<std::int64_t>(corpus.doc_count());
#pragma omp parallel for schedule(static) if (corpus.doc_count() >= kParallelMinRows)
  for (std::int64_t d = 0; d < n; ++d) out[d] = corpus.score_document(d, q, params);
  return out;
}

}  // namespace memroute
