#include "memroute/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "memroute/errors.hpp"

namespace memroute {

double mean_logprob(std::span<const TokenLogprob> tokens) {
  if (tokens.empty()) throw std::invalid_argument("mean log-probability of an empty token sequence");
  double sum = 0.0;
  for (const auto& t : tokens) sum += t.logprob;
  return sum / static_cast<double>(tokens.size());
}

double normalize_confidence(double mean, double floor) {
  if (!(floor < 0.0)) throw ConfigError("ell_min must be negative, got " + std::to_string(floor));
  if (std::isnan(mean)) return 0.0;
  return std::clamp((mean - floor) / std::abs(floor), 0.0, 1.0);
}

ConfidenceScore score_confidence(std::span<const TokenLogprob> tokens, double floor) {
  const double mean = mean_logprob(tokens);
  return {mean, floor, normalize_confidence(mean, floor)};
}

}  // namespace memroute
