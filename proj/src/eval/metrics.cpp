#include "memroute/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>

namespace memroute::eval {

std::vector<std::string> normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (c < 0x80 && std::ispunct(c)) continue;
    cleaned.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && cur != "a" && cur != "an" && cur != "the") out.push_back(cur);
    cur.clear();
  };
  for (char c : cleaned) {
    if (std::isspace(static_cast<unsigned char>(c))) flush();
    else cur.push_back(c);
  }
  flush();
  return out;
}

namespace {

std::size_t clipped_overlap(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  std::unordered_map<std::string, std::size_t> gold_counts;
  for (const auto& t : gold) ++gold_counts[t];
  std::size_t common = 0;
  for (const auto& t : pred) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  return common;
}

}  // namespace

double token_f1(std::string_view prediction, std::string_view gold) {
  const auto p = normalize_answer(prediction);
  const auto g = normalize_answer(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  const std::size_t common = clipped_overlap(p, g);
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double bleu1(std::string_view prediction, std::string_view gold, bool brevity_penalty) {
  const auto p = normalize_answer(prediction);
  if (p.empty()) return 0.0;
  const auto g = normalize_answer(gold);
  const double precision = static_cast<double>(clipped_overlap(p, g)) / static_cast<double>(p.size());
  if (!brevity_penalty) return precision;
  const double ratio = static_cast<double>(g.size()) / static_cast<double>(p.size());
  return precision * std::min(1.0, std::exp(1.0 - ratio));
}

std::optional<double> retrieval_recall(std::span<const std::string> hit_sessions,
                                       std::span<const std::string> evidence_sessions, std::size_t k) {
  const std::set<std::string> evidence(evidence_sessions.begin(), evidence_sessions.end());
  if (evidence.empty()) return std::nullopt;
  std::set<std::string> found;
  for (std::size_t i = 0; i < std::min(k, hit_sessions.size()); ++i)
    if (evidence.count(hit_sessions[i])) found.insert(hit_sessions[i]);
  return static_cast<double>(found.size()) / static_cast<double>(evidence.size());
}

}  // namespace memroute::eval
