#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace memroute {

/// Lowercased maximal runs of ASCII letters/digits. Bytes >= 0x80 count as
/// word characters so UTF-8 words stay intact.
std::vector<std::string> word_tokens(std::string_view text);

/// Unigrams followed by every contiguous n-gram for n = 2..ngram_max,
/// n-gram words joined with a single space.
std::vector<std::string> expand_ngrams(const std::vector<std::string>& words, int ngram_max);

inline std::vector<std::string> bm25_terms(std::string_view text, int ngram_max) {
  return expand_ngrams(word_tokens(text), ngram_max);
}

/// Whitespace-separated word count; the offline token estimate is based on it.
std::size_t whitespace_word_count(std::string_view text);

/// Deterministic prompt-size estimate: ceil(1.3 * whitespace words).
std::size_t estimate_tokens(std::string_view text);

}  // namespace memroute
