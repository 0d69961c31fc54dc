#include "memroute/tokenize.hpp"

namespace memroute {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> expand_ngrams(const std::vector<std::string>& words, int ngram_max) {
  std::vector<std::string> out(words.begin(), words.end());
  for (int n = 2; n <= ngram_max; ++n) {
    if (words.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string gram = words[i];
      for (int j = 1; j < n; ++j) {
        gram += ' ';
        gram += words[i + j];
      }
      out.push_back(std::move(gram));
    }
  }
  return out;
}

std::size_t whitespace_word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::size_t estimate_tokens(std::string_view text) {
  // ceil(1.3 n) in integers.
  const std::size_t n = whitespace_word_count(text);
  return (13 * n + 9) / 10;
}

}  // namespace memroute
