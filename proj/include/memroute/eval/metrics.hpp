#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memroute::eval {

/// SQuAD-style normalization: lowercase, drop ASCII punctuation, drop the
/// articles a/an/the, split on whitespace.
std::vector<std::string> normalize_answer(std::string_view text);

/// Multiset token overlap F1 over normalized tokens. Both empty scores 1,
/// exactly one empty scores 0.
double token_f1(std::string_view prediction, std::string_view gold);

/// Clipped unigram precision over normalized tokens, times the brevity
/// penalty min(1, exp(1 - ref_len / pred_len)) unless disabled. An empty
/// prediction scores 0.
double bleu1(std::string_view prediction, std::string_view gold, bool brevity_penalty = true);

/// Fraction of distinct evidence sessions found among the first k hit
/// sessions. Undefined (nullopt) without evidence.
std::optional<double> retrieval_recall(std::span<const std::string> hit_sessions,
                                       std::span<const std::string> evidence_sessions, std::size_t k);

}  // namespace memroute::eval
