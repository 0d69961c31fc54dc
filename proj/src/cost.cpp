#include "memroute/cost.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace memroute {

using json = nlohmann::json;

double eff_cost(std::int64_t input_tokens, std::int64_t output_tokens, double params_billion) {
  if (input_tokens < 0 || output_tokens < 0) throw std::invalid_argument("token counts must be >= 0");
  if (!(params_billion > 0.0)) throw std::invalid_argument("params_billion must be positive");
  const double weighted = static_cast<double>(input_tokens) + 4.0 * static_cast<double>(output_tokens);
  return weighted * (params_billion / 8.0);
}

CostLedgerEntry make_ledger_entry(std::string request_id, std::string model, double params_billion,
                                  std::int64_t input_tokens, std::int64_t output_tokens) {
  CostLedgerEntry e;
  e.request_id = std::move(request_id);
  e.model = std::move(model);
  e.params_billion = params_billion;
  e.input_tokens = input_tokens;
  e.output_tokens = output_tokens;
  e.eff_cost = eff_cost(input_tokens, output_tokens, params_billion);
  return e;
}

double round_one_decimal(double pct) { return std::round(pct * 10.0) / 10.0; }

CostSummary aggregate(std::span<const CostLedgerEntry> entries, std::string_view small_model) {
  CostSummary s;
  std::vector<std::string> order;
  std::unordered_map<std::string, std::string> accepted;
  for (const auto& e : entries) {
    auto& m = s.per_model[e.model];
    ++m.invocations;
    m.input_tokens += e.input_tokens;
    m.output_tokens += e.output_tokens;
    m.eff_cost += e.eff_cost;
    ++s.total.invocations;
    s.total.input_tokens += e.input_tokens;
    s.total.output_tokens += e.output_tokens;
    s.total.eff_cost += e.eff_cost;
    auto [it, inserted] = accepted.try_emplace(e.request_id, e.model);
    if (inserted) order.push_back(e.request_id);
    else it->second = e.model;
  }
  s.requests = order.size();
  for (const auto& id : order)
    if (accepted[id] == small_model) ++s.served_by_small;
  if (s.requests > 0)
    s.pct_on_small = 100.0 * static_cast<double>(s.served_by_small) / static_cast<double>(s.requests);
  return s;
}

void CostLedger::append(CostLedgerEntry entry) {
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(entry));
}

void CostLedger::append(std::span<const CostLedgerEntry> entries) {
  std::lock_guard lock(mutex_);
  entries_.insert(entries_.end(), entries.begin(), entries.end());
}

std::vector<CostLedgerEntry> CostLedger::snapshot() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t CostLedger::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void CostLedger::export_jsonl(std::ostream& out) const {
  for (const auto& e : snapshot()) {
    out << json{{"request_id", e.request_id},
                {"model", e.model},
                {"params_billion", e.params_billion},
                {"input_tokens", e.input_tokens},
                {"output_tokens", e.output_tokens},
                {"eff_cost", e.eff_cost}}
               .dump()
        << '\n';
  }
}

std::vector<CostLedgerEntry> CostLedger::import_jsonl(std::istream& in) {
  std::vector<CostLedgerEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    CostLedgerEntry e;
    e.request_id = j.at("request_id").get<std::string>();
    e.model = j.at("model").get<std::string>();
    e.params_billion = j.at("params_billion").get<double>();
    e.input_tokens = j.at("input_tokens").get<std::int64_t>();
    e.output_tokens = j.at("output_tokens").get<std::int64_t>();
    e.eff_cost = j.at("eff_cost").get<double>();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace memroute
