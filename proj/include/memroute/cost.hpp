#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memroute {

/// (input + 4 * output) * (P / 8). Unitless, normalized to an 8B model.
/// Throws std::invalid_argument for negative counts or non-positive P.
double eff_cost(std::int64_t input_tokens, std::int64_t output_tokens, double params_billion);

/// One backend invocation.
struct CostLedgerEntry {
  std::string request_id;
  std::string model;
  double params_billion = 0.0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double eff_cost = 0.0;

  bool operator==(const CostLedgerEntry&) const = default;
};

CostLedgerEntry make_ledger_entry(std::string request_id, std::string model, double params_billion,
                                  std::int64_t input_tokens, std::int64_t output_tokens);

struct ModelTotals {
  std::size_t invocations = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double eff_cost = 0.0;
};

struct CostSummary {
  std::map<std::string, ModelTotals> per_model;
  ModelTotals total;
  std::size_t requests = 0;
  std::size_t served_by_small = 0;
  /// Percent of requests whose accepted model is the small one; absent when
  /// there are no requests.
  std::optional<double> pct_on_small;
};

/// Rounds a percentage to one decimal for reporting.
double round_one_decimal(double pct);

/// Sums entries per model and overall. Entries sharing a request id form
/// one request, whose accepted model is its last entry (cascades accept the
/// last model they invoke).
CostSummary aggregate(std::span<const CostLedgerEntry> entries, std::string_view small_model);

/// Append-only, thread-safe ledger.
class CostLedger {
 public:
  void append(CostLedgerEntry entry);
  void append(std::span<const CostLedgerEntry> entries);
  std::vector<CostLedgerEntry> snapshot() const;
  std::size_t size() const;

  /// One JSON object per line.
  void export_jsonl(std::ostream& out) const;
  static std::vector<CostLedgerEntry> import_jsonl(std::istream& in);

 private:
  mutable std::mutex mutex_;
  std::vector<CostLedgerEntry> entries_;
};

}  // namespace memroute
