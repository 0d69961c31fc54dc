#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memroute/backends.hpp"
#include "memroute/confidence.hpp"
#include "memroute/cost.hpp"
#include "memroute/embedder.hpp"
#include "memroute/memory_store.hpp"
#include "memroute/retrieval.hpp"

namespace memroute {

inline constexpr std::string_view kDefaultPreamble =
    "You are a helpful assistant. The lines below are earlier conversation turns with this user, "
    "each prefixed with its date. Use them if they are relevant and answer the question concisely.";

struct CascadeConfig {
  /// Ordered cheapest first; params_billion must strictly increase.
  std::vector<ModelSpec> models;
  double tau = kDefaultTau;
  double floor = kDefaultLogprobFloor;
  bool memory_enabled = true;
  std::size_t top_k = 5;
  std::size_t probe_memory_token_budget = 512;
  std::size_t full_memory_token_budget = 8192;
  RetrievalMode retrieval = RetrievalMode::hybrid;
  FusionConfig fusion;
  Bm25Params bm25;
  std::size_t overfetch = 2;
  int max_output_tokens = 256;
  std::string preamble = std::string(kDefaultPreamble);

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Prompt assembled from a query and ranked memories.
struct AugmentedPrompt {
  std::string preamble;
  std::vector<std::string> memory_lines;
  std::vector<RecordId> memory_ids;
  std::string query;
  std::size_t memory_tokens = 0;

  /// Memory lines joined by newlines.
  std::string memory_text() const;
  /// Preamble, memory block and query joined by blank lines.
  std::string full_text() const;
  ChatRequest to_request(std::string model, bool want_logprobs, int max_output_tokens) const;
};

/// Preamble, then whole memories in rank order while their estimated tokens
/// fit in token_budget (stopping at the first that does not), then the query.
AugmentedPrompt build_augmented_prompt(std::string_view query, std::span<const MemoryRecord> memories,
                                       std::size_t token_budget, std::string_view preamble = kDefaultPreamble);

/// Per-request switches layered over CascadeConfig. Nothing here persists.
struct RouteOptions {
  std::optional<bool> memory_enabled;
  /// false: call the first model once with the full memory budget, no probe.
  bool routing_enabled = true;
  std::optional<double> tau;
  std::optional<std::size_t> top_k;
  std::optional<RetrievalMode> retrieval;
  std::optional<FusionConfig> fusion;
  /// Store the accepted turn-pair afterwards. Independent of memory_enabled.
  bool store_interaction = true;
  std::optional<std::string> session_timestamp;
  /// Replaces retrieval with these context lines, unbudgeted.
  std::optional<std::vector<std::string>> inline_context;
  std::string request_id;
};

struct Invocation {
  std::string model;
  double params_billion = 0.0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double eff_cost = 0.0;
  /// The backend call threw; counts are zero.
  bool failed = false;
};

struct RouteDecision {
  std::string request_id;
  std::string chosen_model;
  /// The first model's probe; absent when routing is off.
  std::optional<ConfidenceScore> confidence;
  double tau = kDefaultTau;
  double floor = kDefaultLogprobFloor;
  bool escalated = false;
  /// Accepted on the last cascade member with probe confidence below tau.
  bool forced_accept = false;
  bool probe_failed = false;
  std::string probe_error;
  /// Memories in the probe prompt (or the single call when routing is off).
  std::vector<RecordId> injected_memory_ids;
  std::vector<Invocation> invocations;
  double eff_cost = 0.0;
  std::optional<RecordId> stored_record_id;
  bool memory_write_failed = false;
};

struct RouteResult {
  std::string response;
  RouteDecision decision;
  AugmentedPrompt first_prompt;
};

/// "D Mon YYYY" for the current local date.
std::string today_timestamp();

/// Probe-then-escalate router with memory retrieval and turn-pair storage.
/// Safe to share between threads.
class Router {
 public:
  Router(CascadeConfig config, MemoryStore& store, const Embedder& embedder, BackendPool& backends,
         CostLedger* ledger = nullptr);

  /// Throws BackendError when the last model that would answer fails, and
  /// ConfigError for an unusable per-request override.
  RouteResult route(std::string_view query, std::string_view user_id, const RouteOptions& options = {});

  /// Embeds and inserts the pair; one retry, then the loss is logged and
  /// nullopt returned. Never throws.
  std::optional<RecordId> store_interaction(std::string_view user_id, std::string_view query,
                                            std::string_view response, std::string_view session_timestamp,
                                            std::string_view source_model);

  /// Memories the router would inject for this query, best first.
  std::vector<MemoryRecord> retrieve(std::string_view query, std::string_view user_id, std::size_t k,
                                     RetrievalMode mode, const FusionConfig& fusion,
                                     std::vector<ScoredHit>* hits = nullptr) const;

  const CascadeConfig& config() const noexcept { return config_; }
  std::uint64_t memory_loss_events() const noexcept { return memory_loss_events_.load(); }

 private:
  CascadeConfig config_;
  MemoryStore& store_;
  const Embedder& embedder_;
  BackendPool& backends_;
  CostLedger* ledger_;
  std::atomic<std::uint64_t> request_counter_{0};
  std::atomic<std::uint64_t> memory_loss_events_{0};
};

}  // namespace memroute
