#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "memroute/eval/datasets.hpp"

namespace memroute::eval {

/// Largest-remainder apportionment of n over the given group sizes. Floors
/// of n * count / total are handed out first; the leftover seats go to the
/// largest exact remainders, ties broken by ascending group label.
std::map<std::string, std::size_t> proportional_allocation(const std::map<std::string, std::size_t>& counts,
                                                           std::size_t n);

/// Stratified sample of n items, allocation proportional to category. Within
/// a category the items are ordered by question_id and shuffled with a
/// seeded mt19937_64 Fisher-Yates, so the result depends only on
/// (items, n, seed). Output is sorted by question_id. Throws
/// std::invalid_argument when n exceeds the population.
std::vector<QAItem> stratified_sample(std::span<const QAItem> items, std::size_t n, std::uint64_t seed);

}  // namespace memroute::eval
