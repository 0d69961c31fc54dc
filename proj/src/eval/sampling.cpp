#include "memroute/eval/sampling.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <tuple>

namespace memroute::eval {

std::map<std::string, std::size_t> proportional_allocation(const std::map<std::string, std::size_t>& counts,
                                                           std::size_t n) {
  std::size_t total = 0;
  for (const auto& [_, c] : counts) total += c;
  if (n > total) throw std::invalid_argument("sample size exceeds population");
  std::map<std::string, std::size_t> out;
  if (total == 0) return out;

  // Remainders are kept as exact numerators over `total`.
  std::vector<std::tuple<std::size_t, std::string>> remainders;
  std::size_t assigned = 0;
  for (const auto& [label, c] : counts) {
    const std::size_t scaled = n * c;
    out[label] = scaled / total;
    assigned += scaled / total;
    remainders.emplace_back(scaled % total, label);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::get<1>(a) < std::get<1>(b);
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++out[std::get<1>(remainders[i])];
  return out;
}

namespace {

// Unbiased draw in [0, bound) from the raw engine output; the standard
// distributions are not specified bit-for-bit across library vendors.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

std::vector<QAItem> stratified_sample(std::span<const QAItem> items, std::size_t n, std::uint64_t seed) {
  if (n > items.size()) throw std::invalid_argument("sample size exceeds population");
  std::map<std::string, std::vector<const QAItem*>> groups;
  for (const auto& it : items) groups[it.category].push_back(&it);
  std::map<std::string, std::size_t> counts;
  for (const auto& [label, g] : groups) counts[label] = g.size();
  const auto alloc = proportional_allocation(counts, n);

  std::mt19937_64 rng(seed);
  std::vector<QAItem> out;
  out.reserve(n);
  for (auto& [label, g] : groups) {
    std::sort(g.begin(), g.end(), [](const QAItem* a, const QAItem* b) { return a->question_id < b->question_id; });
    for (std::size_t i = g.size(); i > 1; --i) std::swap(g[i - 1], g[bounded(rng, i)]);
    const std::size_t take = alloc.at(label);
    for (std::size_t i = 0; i < take; ++i) out.push_back(*g[i]);
  }
  std::sort(out.begin(), out.end(), [](const QAItem& a, const QAItem& b) { return a.question_id < b.question_id; });
  return out;
}

}  // namespace memroute::eval
