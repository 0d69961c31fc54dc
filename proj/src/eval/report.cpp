#include "memroute/eval/report.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "memroute/cost.hpp"
#include "memroute/errors.hpp"

namespace memroute::eval {

using json = nlohmann::json;

namespace {

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pct(double fraction) { return fmt("%.1f", round_one_decimal(100.0 * fraction)); }

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

std::string lpad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string cost_k(double c) { return fmt("%.1fK", c / 1000.0); }

}  // namespace

json decision_to_json(const RouteDecision& d) {
  json inv = json::array();
  for (const auto& i : d.invocations)
    inv.push_back({{"model", i.model},
                   {"params_billion", i.params_billion},
                   {"prompt_tokens", i.prompt_tokens},
                   {"completion_tokens", i.completion_tokens},
                   {"eff_cost", i.eff_cost},
                   {"failed", i.failed}});
  json conf = nullptr;
  if (d.confidence)
    conf = {{"mean_logprob", d.confidence->mean_logprob}, {"floor", d.confidence->floor}, {"value", d.confidence->value}};
  return {{"request_id", d.request_id},
          {"chosen_model", d.chosen_model},
          {"confidence", conf},
          {"tau", d.tau},
          {"floor", d.floor},
          {"escalated", d.escalated},
          {"forced_accept", d.forced_accept},
          {"probe_failed", d.probe_failed},
          {"probe_error", d.probe_error},
          {"memory_ids", d.injected_memory_ids},
          {"invocations", inv},
          {"eff_cost", d.eff_cost},
          {"stored_record_id", opt(d.stored_record_id)},
          {"memory_write_failed", d.memory_write_failed}};
}

RouteDecision decision_from_json(const json& j) {
  RouteDecision d;
  d.request_id = j.value("request_id", std::string{});
  d.chosen_model = j.value("chosen_model", std::string{});
  if (j.contains("confidence") && j["confidence"].is_object()) {
    const auto& c = j["confidence"];
    d.confidence = ConfidenceScore{c.at("mean_logprob").get<double>(), c.at("floor").get<double>(),
                                   c.at("value").get<double>()};
  }
  d.tau = j.value("tau", kDefaultTau);
  d.floor = j.value("floor", kDefaultLogprobFloor);
  d.escalated = j.value("escalated", false);
  d.forced_accept = j.value("forced_accept", false);
  d.probe_failed = j.value("probe_failed", false);
  d.probe_error = j.value("probe_error", std::string{});
  d.injected_memory_ids = j.value("memory_ids", std::vector<RecordId>{});
  for (const auto& i : j.value("invocations", json::array()))
    d.invocations.push_back({i.at("model").get<std::string>(), i.at("params_billion").get<double>(),
                             i.at("prompt_tokens").get<std::int64_t>(), i.at("completion_tokens").get<std::int64_t>(),
                             i.at("eff_cost").get<double>(), i.value("failed", false)});
  d.eff_cost = j.value("eff_cost", 0.0);
  d.stored_record_id = opt_from<RecordId>(j, "stored_record_id");
  d.memory_write_failed = j.value("memory_write_failed", false);
  return d;
}

json condition_to_json(const EvalCondition& c) {
  json fusion = nullptr;
  if (c.fusion)
    fusion = {{"strategy", to_string(c.fusion->strategy)},
              {"rrf_k", c.fusion->rrf_k},
              {"dense_weight", c.fusion->dense_weight},
              {"sparse_weight", c.fusion->sparse_weight},
              {"bm25_dominance_threshold", c.fusion->bm25_dominance_threshold}};
  return {{"name", c.name},
          {"memory_enabled", c.memory_enabled},
          {"routing_enabled", c.routing_enabled},
          {"cascade", c.cascade},
          {"retrieval", to_string(c.retrieval)},
          {"fusion", fusion},
          {"full_context", c.full_context}};
}

EvalCondition condition_from_json(const json& j) {
  EvalCondition c;
  c.name = j.at("name").get<std::string>();
  c.memory_enabled = j.value("memory_enabled", false);
  c.routing_enabled = j.value("routing_enabled", false);
  c.cascade = j.value("cascade", std::vector<std::string>{});
  c.retrieval = parse_retrieval_mode(j.value("retrieval", std::string("hybrid")));
  if (j.contains("fusion") && j["fusion"].is_object()) {
    const auto& f = j["fusion"];
    FusionConfig fc;
    fc.strategy = parse_fusion_strategy(f.value("strategy", std::string("reciprocal_rank")));
    fc.rrf_k = f.value("rrf_k", fc.rrf_k);
    fc.dense_weight = f.value("dense_weight", fc.dense_weight);
    fc.sparse_weight = f.value("sparse_weight", fc.sparse_weight);
    fc.bm25_dominance_threshold = f.value("bm25_dominance_threshold", fc.bm25_dominance_threshold);
    c.fusion = fc;
  }
  c.full_context = j.value("full_context", false);
  return c;
}

json stats_to_json(const CategoryStats& s) {
  return {{"n", s.n},
          {"f1", s.f1},
          {"bleu1", s.bleu1},
          {"pct_on_small", opt(s.pct_on_small)},
          {"recall", opt(s.recall)},
          {"eff_cost", s.eff_cost}};
}

void write_report(std::ostream& out, const EvalReport& r) {
  out << json{{"type", "run"},
              {"dataset", r.dataset},
              {"condition", condition_to_json(r.condition)},
              {"small_model", r.small_model},
              {"tau", r.tau}}
             .dump()
      << '\n';
  for (const auto& q : r.questions)
    out << json{{"type", "question"},
                {"question_id", q.question_id},
                {"category", q.category},
                {"question", q.question},
                {"gold", q.gold},
                {"prediction", q.prediction},
                {"f1", q.f1},
                {"bleu1", q.bleu1},
                {"recall", opt(q.recall)},
                {"failed", q.failed},
                {"error", q.error},
                {"decision", decision_to_json(q.decision)}}
               .dump()
        << '\n';
  json per = json::object();
  for (const auto& [cat, s] : r.per_category) per[cat] = stats_to_json(s);
  out << json{{"type", "summary"},
              {"overall", stats_to_json(r.overall)},
              {"per_category", per},
              {"input_tokens", r.input_tokens},
              {"output_tokens", r.output_tokens},
              {"total_eff_cost", r.total_eff_cost},
              {"failures", r.failures},
              {"complete", r.complete}}
             .dump()
      << '\n';
  out.flush();
}

std::vector<EvalReport> read_reports(std::istream& in) {
  std::vector<EvalReport> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "report line " + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "run") {
        EvalReport r;
        r.dataset = j.at("dataset").get<std::string>();
        r.condition = condition_from_json(j.at("condition"));
        r.small_model = j.at("small_model").get<std::string>();
        r.tau = j.value("tau", kDefaultTau);
        out.push_back(std::move(r));
      } else if (type == "question") {
        if (out.empty()) throw DatasetError(where + ": question line before any run line");
        QuestionRecord q;
        q.question_id = j.at("question_id").get<std::string>();
        q.category = j.at("category").get<std::string>();
        q.question = j.value("question", std::string{});
        q.gold = j.value("gold", std::string{});
        q.prediction = j.value("prediction", std::string{});
        q.f1 = j.at("f1").get<double>();
        q.bleu1 = j.at("bleu1").get<double>();
        q.recall = opt_from<double>(j, "recall");
        q.failed = j.value("failed", false);
        q.error = j.value("error", std::string{});
        q.decision = decision_from_json(j.at("decision"));
        out.back().questions.push_back(std::move(q));
      } else if (type != "summary") {
        throw DatasetError(where + ": unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw DatasetError(where + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DatasetError(where + ": " + e.what());
    }
  }
  for (auto& r : out) summarize(r);
  return out;
}

EvalReport read_report(std::istream& in) {
  auto all = read_reports(in);
  if (all.empty()) throw DatasetError("report: missing run header line");
  if (all.size() > 1) throw DatasetError("report: holds " + std::to_string(all.size()) + " runs, expected one");
  return std::move(all.front());
}

std::string render_summary_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << pad("Condition", 22) << lpad("N", 6) << lpad("F1", 8) << lpad("BLEU-1", 8) << lpad("%Small", 8)
      << lpad("EffCost", 12) << "\n";
  for (const auto& r : reports) {
    out << pad(r.condition.name, 22) << lpad(std::to_string(r.overall.n), 6) << lpad(pct(r.overall.f1), 8)
        << lpad(pct(r.overall.bleu1), 8)
        << lpad(r.overall.pct_on_small ? fmt("%.1f", round_one_decimal(*r.overall.pct_on_small)) : "-", 8)
        << lpad(cost_k(r.total_eff_cost), 12);
    if (!r.complete) out << "  (" << r.failures << " failed)";
    out << "\n";
  }
  return out.str();
}

std::string render_category_table(const std::vector<EvalReport>& reports) {
  std::map<std::string, CategoryStats> all;
  for (const auto& r : reports)
    for (const auto& [c, s] : r.per_category) all[c] = s;
  const auto cats = ordered_categories(all);
  std::ostringstream out;
  out << pad("Condition", 22);
  std::vector<std::size_t> widths;
  for (const auto& c : cats) {
    widths.push_back(std::max<std::size_t>(12, c.size() + 2));
    out << lpad(c, widths.back());
  }
  out << "\n";
  for (const auto& r : reports) {
    out << pad(r.condition.name, 22);
    for (std::size_t i = 0; i < cats.size(); ++i) {
      auto it = r.per_category.find(cats[i]);
      out << lpad(it == r.per_category.end() ? "-" : pct(it->second.f1), widths[i]);
    }
    out << "\n";
  }
  return out.str();
}

std::string render_comparison_table(const RetrievalComparison& cmp) {
  std::ostringstream out;
  out << pad("Type", 28) << lpad("N", 6) << lpad(to_string(cmp.baseline.condition.retrieval), 10)
      << lpad(to_string(cmp.candidate.condition.retrieval), 10) << lpad("Delta", 10) << "\n";
  for (const auto& t : cmp.per_type)
    out << pad(t.type, 28) << lpad(std::to_string(t.n), 6) << lpad(fmt("%.1f", round_one_decimal(t.baseline_f1)), 10)
        << lpad(fmt("%.1f", round_one_decimal(t.candidate_f1)), 10) << lpad(fmt("%+.1f", round_one_decimal(t.delta)), 10)
        << "\n";
  out << pad("overall", 28) << lpad(std::to_string(cmp.baseline.overall.n), 6) << lpad(pct(cmp.baseline.overall.f1), 10)
      << lpad(pct(cmp.candidate.overall.f1), 10)
      << lpad(fmt("%+.1f", round_one_decimal(100.0 * (cmp.candidate.overall.f1 - cmp.baseline.overall.f1))), 10)
      << "\n";
  return out.str();
}

}  // namespace memroute::eval
