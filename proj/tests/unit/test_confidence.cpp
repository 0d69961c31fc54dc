#include <doctest.h>

#include <cmath>
#include <random>

#include "memroute/confidence.hpp"
#include "memroute/errors.hpp"

using namespace memroute;

namespace {
std::vector<TokenLogprob> seq(std::initializer_list<double> lps) {
  std::vector<TokenLogprob> out;
  for (double lp : lps) out.push_back({"t", lp});
  return out;
}
}  // namespace

TEST_SUITE("confidence") {
  TEST_CASE("mean logprob") {
    CHECK(mean_logprob(seq({-1, -1, -1})) == -1.0);
    CHECK(mean_logprob(seq({0, 0})) == 0.0);
    CHECK(mean_logprob(seq({-0.5, -2.5})) == -1.5);
    CHECK_THROWS_AS(mean_logprob(seq({})), std::invalid_argument);
  }

  TEST_CASE("normalization anchors") {
    CHECK(normalize_confidence(-3, -3) == 0.0);
    CHECK(normalize_confidence(0, -3) == 1.0);
    CHECK(normalize_confidence(-1.5, -3) == 0.5);
    CHECK(normalize_confidence(-4.2, -3) == 0.0);
    CHECK(normalize_confidence(0.7, -3) == 1.0);
    CHECK_THROWS_AS(normalize_confidence(-1, 0), ConfigError);
    CHECK_THROWS_AS(normalize_confidence(-1, 2), ConfigError);
  }

  TEST_CASE("threshold correspondence with geometric-mean probability") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 0.0);
    for (int i = 0; i < 2000; ++i) {
      const double l = u(rng);
      const bool accept = normalize_confidence(l, -3) >= 0.5;
      CHECK(accept == (l >= -1.5));
      CHECK(accept == (std::exp(l) >= std::exp(-1.5)));
    }
    CHECK(std::exp(-1.5) == doctest::Approx(0.2231).epsilon(1e-3));
  }

  TEST_CASE("score carries mean, floor and value") {
    const auto s = score_confidence(seq({-0.21, -0.21, -0.21}));
    CHECK(s.mean_logprob == doctest::Approx(-0.21));
    CHECK(s.floor == -3.0);
    CHECK(s.value == doctest::Approx(0.93));
    CHECK(score_confidence(seq({-1.0})).value == doctest::Approx(2.0 / 3.0));
    CHECK(score_confidence(seq({-2.4})).value == doctest::Approx(0.2));
    CHECK(score_confidence(seq({-1.0}), -2.0).value == doctest::Approx(0.5));
  }
}
