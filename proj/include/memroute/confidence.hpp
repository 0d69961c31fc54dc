#pragma once

#include <span>
#include <string>

namespace memroute {

struct TokenLogprob {
  std::string token_text;
  /// Natural log of the token probability, <= 0.
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

struct ConfidenceScore {
  double mean_logprob = 0.0;
  double floor = -3.0;
  double value = 0.0;

  bool operator==(const ConfidenceScore&) const = default;
};

inline constexpr double kDefaultLogprobFloor = -3.0;
inline constexpr double kDefaultTau = 0.5;

/// Arithmetic mean over every token, punctuation and whitespace included.
/// Throws std::invalid_argument on an empty sequence.
double mean_logprob(std::span<const TokenLogprob> tokens);

/// (mean - floor) / |floor| clamped to [0, 1]. Throws ConfigError unless floor < 0.
double normalize_confidence(double mean, double floor);

ConfidenceScore score_confidence(std::span<const TokenLogprob> tokens, double floor = kDefaultLogprobFloor);

}  // namespace memroute
