#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memroute/backends.hpp"
#include "memroute/embedder.hpp"
#include "memroute/eval/datasets.hpp"
#include "memroute/router.hpp"

namespace memroute::eval {

/// One cell of the experiment grid.
struct EvalCondition {
  std::string name;
  bool memory_enabled = false;
  bool routing_enabled = false;
  /// Model names, cheapest first. Routing needs at least two.
  std::vector<std::string> cascade;
  RetrievalMode retrieval = RetrievalMode::hybrid;
  std::optional<FusionConfig> fusion;
  /// Inline the whole conversation instead of retrieving.
  bool full_context = false;

  void validate() const;
};

/// The six LoCoMo conditions: cold-small, cold-compound, warm-memory-only,
/// warm-compound, cold-large, full-context-large. The first four are the
/// memory x routing factorial.
std::vector<EvalCondition> standard_conditions(const std::string& small_model, const std::string& large_model);
EvalCondition standard_condition(const std::string& name, const std::string& small_model,
                                 const std::string& large_model);

/// Questions plus the memories each question's partition is preloaded with.
struct EvalDataset {
  std::string name;
  std::vector<QAItem> items;
  /// question_id -> partition (user id)
  std::map<std::string, std::string> partition_of;
  std::map<std::string, std::vector<TurnPair>> memories;
  /// partition -> full conversation as text lines, for full-context runs
  std::map<std::string, std::vector<std::string>> transcripts;

  /// Keeps only the given items (and the partitions they use).
  EvalDataset subset(const std::vector<QAItem>& keep) const;
};

/// One partition holding every turn-pair of the conversation.
EvalDataset make_locomo_dataset(const LocomoConversation& conv, PairingMode pairing);
/// One partition per question (user id = question_id), holding its haystack.
EvalDataset make_longmemeval_dataset(const std::vector<LongMemEvalItem>& items, PairingMode pairing);

struct EvalSettings {
  /// Every model a condition may name; tau, budgets, retrieval knobs too.
  CascadeConfig cascade;
  /// Model whose share of answers is reported as routing distribution.
  std::string small_model;
  int parallelism = 1;
  bool bleu_brevity_penalty = true;
  /// Depth used for retrieval recall.
  std::size_t recall_k = 5;
};

struct QuestionRecord {
  std::string question_id;
  std::string category;
  std::string question;
  std::string gold;
  std::string prediction;
  double f1 = 0.0;
  double bleu1 = 0.0;
  std::optional<double> recall;
  bool failed = false;
  std::string error;
  RouteDecision decision;
};

/// Means over questions, as fractions in [0, 1]; rounding to one-decimal
/// percent happens only when rendering.
struct CategoryStats {
  std::size_t n = 0;
  double f1 = 0.0;
  double bleu1 = 0.0;
  /// Percent of questions answered by the small model.
  std::optional<double> pct_on_small;
  std::optional<double> recall;
  double eff_cost = 0.0;
};

struct EvalReport {
  std::string dataset;
  EvalCondition condition;
  std::string small_model;
  double tau = kDefaultTau;
  /// Sorted by question_id.
  std::vector<QuestionRecord> questions;

  // Aggregates; recomputed by summarize().
  std::map<std::string, CategoryStats> per_category;
  CategoryStats overall;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double total_eff_cost = 0.0;
  std::size_t failures = 0;
  bool complete = true;
};

/// Recomputes every aggregate from the per-question records.
void summarize(EvalReport& report);

/// Routes every question of the dataset under one condition. Warm
/// conditions preload each partition; cold ones start empty. Interactions
/// are not stored back, so questions do not see each other's answers.
EvalReport run_condition(const EvalCondition& cond, const EvalDataset& dataset, const EvalSettings& settings,
                         BackendPool& backends, const Embedder& embedder);

struct TypeDelta {
  std::string type;
  std::size_t n = 0;
  /// Percent.
  double baseline_f1 = 0.0;
  double candidate_f1 = 0.0;
  double delta = 0.0;
  std::optional<double> baseline_recall;
  std::optional<double> candidate_recall;
};

struct RetrievalComparison {
  EvalReport baseline;
  EvalReport candidate;
  std::vector<TypeDelta> per_type;
};

/// Runs the same questions twice through the warm compound pipeline, once
/// per retrieval arm, and reports per-type F1 deltas (candidate - baseline).
RetrievalComparison compare_retrieval(const EvalDataset& dataset, const EvalSettings& settings,
                                      BackendPool& backends, const Embedder& embedder,
                                      RetrievalMode baseline_mode = RetrievalMode::dense,
                                      std::optional<FusionConfig> baseline_fusion = std::nullopt,
                                      RetrievalMode candidate_mode = RetrievalMode::hybrid,
                                      std::optional<FusionConfig> candidate_fusion = std::nullopt);

/// Category display order: known labels first in their conventional order.
std::vector<std::string> ordered_categories(const std::map<std::string, CategoryStats>& per_category);

}  // namespace memroute::eval
