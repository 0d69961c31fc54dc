#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memroute/eval/runner.hpp"

namespace memroute::eval {

nlohmann::json decision_to_json(const RouteDecision& d);
RouteDecision decision_from_json(const nlohmann::json& j);

nlohmann::json condition_to_json(const EvalCondition& c);
EvalCondition condition_from_json(const nlohmann::json& j);

nlohmann::json stats_to_json(const CategoryStats& s);

/// A run line, one line per question, then a summary line.
void write_report(std::ostream& out, const EvalReport& report);
/// Reads the run and question lines back and recomputes the aggregates, so
/// a hand-edited summary line has no effect. Throws DatasetError.
EvalReport read_report(std::istream& in);
/// Several runs written back to back, each starting at its run line.
std::vector<EvalReport> read_reports(std::istream& in);

/// One row per report: condition, F1, BLEU-1, % on small, EffCost.
std::string render_summary_table(const std::vector<EvalReport>& reports);
/// F1 per category, one column per report.
std::string render_category_table(const std::vector<EvalReport>& reports);
/// Per-type F1 of both arms and their delta.
std::string render_comparison_table(const RetrievalComparison& cmp);

}  // namespace memroute::eval
