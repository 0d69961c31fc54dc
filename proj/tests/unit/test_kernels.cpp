#include <doctest.h>

#include <random>

#include "memroute/embedder.hpp"
#include "memroute/kernels.hpp"
#include "memroute/retrieval.hpp"

using namespace memroute;

TEST_SUITE("kernels") {
  TEST_CASE("dense serial and parallel are bit-identical") {
    std::mt19937_64 rng(5);
    std::normal_distribution<float> n(0, 1);
    for (std::size_t rows : {0, 1, 7, 300, 3000}) {
      std::vector<MemoryRecord> part(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        part[i].id = i + 1;
        part[i].embedding.resize(48);
        for (auto& x : part[i].embedding) x = n(rng);
      }
      if (rows > 3) std::fill(part[2].embedding.begin(), part[2].embedding.end(), 0.0f);
      EmbeddingMatrix m(48, part);
      std::vector<float> q(48);
      for (auto& x : q) x = n(rng);
      const auto a = dense_scores_serial(m, q);
      const auto b = dense_scores_parallel(m, q);
      REQUIRE(a.size() == rows);
      CHECK(a == b);
      if (rows > 3) CHECK(a[2] == 0.0);
    }
  }

  TEST_CASE("bm25 serial and parallel are bit-identical") {
    std::mt19937_64 rng(6);
    const std::vector<std::string> vocab{"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"};
    for (std::size_t rows : {0, 1, 50, 4000}) {
      std::vector<std::string> docs;
      for (std::size_t i = 0; i < rows; ++i) {
        std::string d;
        const auto len = 1 + rng() % 12;
        for (std::size_t j = 0; j < len; ++j) d += vocab[rng() % vocab.size()] + " ";
        docs.push_back(d);
      }
      Bm25Corpus c(docs, 2);
      for (const char* q : {"alpha beta", "theta", "nothing here", "gamma delta gamma"}) {
        const auto a = bm25_scores_serial(c, q, Bm25Params{});
        const auto b = bm25_scores_parallel(c, q, Bm25Params{});
        CHECK(a == b);
      }
    }
  }

  TEST_CASE("corpus statistics") {
    const std::vector<std::string> docs{"a b a", "b c", "c c c c"};
    Bm25Corpus c(docs, 1);
    CHECK(c.doc_count() == 3);
    CHECK(c.avgdl() == doctest::Approx(3.0));
    CHECK(c.df("a") == 1);
    CHECK(c.df("c") == 2);
    CHECK(c.df("zz") == 0);
    const auto q = c.query_terms("c a c zz");
    REQUIRE(q.size() == 2);
    CHECK(q[0].second == doctest::Approx(bm25_idf(3, 2)));
  }

  TEST_CASE("execution modes agree through dense_search and sparse_search") {
    DeterministicEmbedder emb(64);
    std::vector<MemoryRecord> part;
    for (int i = 0; i < 2500; ++i) {
      MemoryRecord r;
      r.id = i + 1;
      r.rendered_text = "record " + std::to_string(i % 97) + " talks about " + std::to_string(i % 13);
      r.embedding = emb.embed(r.rendered_text);
      part.push_back(std::move(r));
    }
    const auto q = emb.embed("record 12 talks");
    CHECK(dense_search(part, q, 20, Execution::serial) == dense_search(part, q, 20, Execution::parallel));
    CHECK(sparse_search(part, "record 12 talks about 3", 20, Bm25Params{}, Execution::serial) ==
          sparse_search(part, "record 12 talks about 3", 20, Bm25Params{}, Execution::parallel));
  }
}
