#include "memroute/eval/runner.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "memroute/errors.hpp"
#include "memroute/eval/metrics.hpp"

namespace memroute::eval {

void EvalCondition::validate() const {
  if (cascade.empty()) throw ConfigError("condition '" + name + "': cascade is empty");
  if (routing_enabled && cascade.size() < 2)
    throw ConfigError("condition '" + name + "': routing needs a cascade of at least two models");
  if (full_context && memory_enabled)
    throw ConfigError("condition '" + name + "': full_context replaces memory retrieval");
}

std::vector<EvalCondition> standard_conditions(const std::string& small_model, const std::string& large_model) {
  return {
      {"cold-small", false, false, {small_model}, RetrievalMode::hybrid, std::nullopt, false},
      {"cold-compound", false, true, {small_model, large_model}, RetrievalMode::hybrid, std::nullopt, false},
      {"warm-memory-only", true, false, {small_model}, RetrievalMode::hybrid, std::nullopt, false},
      {"warm-compound", true, true, {small_model, large_model}, RetrievalMode::hybrid, std::nullopt, false},
      {"cold-large", false, false, {large_model}, RetrievalMode::hybrid, std::nullopt, false},
      {"full-context-large", false, false, {large_model}, RetrievalMode::hybrid, std::nullopt, true},
  };
}

EvalCondition standard_condition(const std::string& name, const std::string& small_model,
                                 const std::string& large_model) {
  for (auto& c : standard_conditions(small_model, large_model))
    if (c.name == name) return c;
  throw ConfigError("unknown condition '" + name +
                    "' (expected cold-small, cold-compound, warm-memory-only, warm-compound, cold-large or "
                    "full-context-large)");
}

EvalDataset EvalDataset::subset(const std::vector<QAItem>& keep) const {
  EvalDataset out;
  out.name = name;
  out.items = keep;
  for (const auto& item : keep) {
    auto it = partition_of.find(item.question_id);
    if (it == partition_of.end()) continue;
    out.partition_of[item.question_id] = it->second;
    if (auto m = memories.find(it->second); m != memories.end()) out.memories[it->second] = m->second;
    if (auto t = transcripts.find(it->second); t != transcripts.end()) out.transcripts[it->second] = t->second;
  }
  return out;
}

EvalDataset make_locomo_dataset(const LocomoConversation& conv, PairingMode pairing) {
  EvalDataset d;
  d.name = "locomo/" + conv.sample_id;
  d.items = conv.qa;
  for (const auto& item : conv.qa) d.partition_of[item.question_id] = conv.sample_id;
  d.memories[conv.sample_id] = make_turn_pairs(conv.sessions, pairing);
  auto& lines = d.transcripts[conv.sample_id];
  for (const auto& s : conv.sessions)
    for (const auto& t : s.turns) lines.push_back("[" + s.timestamp + "] " + t.speaker + ": " + t.text);
  return d;
}

EvalDataset make_longmemeval_dataset(const std::vector<LongMemEvalItem>& items, PairingMode pairing) {
  EvalDataset d;
  d.name = "longmemeval";
  for (const auto& item : items) {
    d.items.push_back(item.qa);
    d.partition_of[item.qa.question_id] = item.qa.question_id;
    d.memories[item.qa.question_id] = make_turn_pairs(item.haystack, pairing);
    auto& lines = d.transcripts[item.qa.question_id];
    for (const auto& s : item.haystack)
      for (const auto& t : s.turns) lines.push_back("[" + s.timestamp + "] " + t.speaker + ": " + t.text);
  }
  return d;
}

namespace {

struct Accumulator {
  std::size_t n = 0;
  double f1 = 0.0;
  double bleu = 0.0;
  std::size_t on_small = 0;
  std::size_t routed = 0;
  double recall = 0.0;
  std::size_t recall_n = 0;
  double cost = 0.0;

  void add(const QuestionRecord& q, const std::string& small) {
    ++n;
    f1 += q.f1;
    bleu += q.bleu1;
    cost += q.decision.eff_cost;
    if (!q.failed) {
      ++routed;
      if (q.decision.chosen_model == small) ++on_small;
    }
    if (q.recall) {
      recall += *q.recall;
      ++recall_n;
    }
  }

  CategoryStats stats() const {
    CategoryStats s;
    s.n = n;
    if (n) {
      s.f1 = f1 / static_cast<double>(n);
      s.bleu1 = bleu / static_cast<double>(n);
    }
    if (routed) s.pct_on_small = 100.0 * static_cast<double>(on_small) / static_cast<double>(routed);
    if (recall_n) s.recall = recall / static_cast<double>(recall_n);
    s.eff_cost = cost;
    return s;
  }
};

std::vector<ModelSpec> select_models(const CascadeConfig& base, const std::vector<std::string>& names) {
  std::vector<ModelSpec> out;
  for (const auto& n : names) {
    auto it = std::find_if(base.models.begin(), base.models.end(), [&](const ModelSpec& m) { return m.name == n; });
    if (it == base.models.end()) throw ConfigError("condition names model '" + n + "' which is not configured");
    out.push_back(*it);
  }
  return out;
}

}  // namespace

void summarize(EvalReport& report) {
  std::sort(report.questions.begin(), report.questions.end(),
            [](const QuestionRecord& a, const QuestionRecord& b) { return a.question_id < b.question_id; });
  std::map<std::string, Accumulator> per;
  Accumulator all;
  report.input_tokens = 0;
  report.output_tokens = 0;
  report.failures = 0;
  for (const auto& q : report.questions) {
    per[q.category].add(q, report.small_model);
    all.add(q, report.small_model);
    for (const auto& inv : q.decision.invocations) {
      report.input_tokens += inv.prompt_tokens;
      report.output_tokens += inv.completion_tokens;
    }
    if (q.failed) ++report.failures;
  }
  report.per_category.clear();
  for (const auto& [cat, acc] : per) report.per_category[cat] = acc.stats();
  report.overall = all.stats();
  report.total_eff_cost = all.cost;
  report.complete = report.failures == 0;
}

EvalReport run_condition(const EvalCondition& cond, const EvalDataset& dataset, const EvalSettings& settings,
                         BackendPool& backends, const Embedder& embedder) {
  cond.validate();
  CascadeConfig cfg = settings.cascade;
  cfg.models = select_models(settings.cascade, cond.cascade);
  cfg.retrieval = cond.retrieval;
  cfg.memory_enabled = cond.memory_enabled;
  if (cond.fusion) cfg.fusion = *cond.fusion;

  MemoryStore store(StoreConfig{embedder.dimension(), {}});
  std::unordered_map<RecordId, std::string> session_of;
  if (cond.memory_enabled) {
    std::set<std::string> partitions;
    for (const auto& item : dataset.items)
      if (auto it = dataset.partition_of.find(item.question_id); it != dataset.partition_of.end())
        partitions.insert(it->second);
    for (const auto& p : partitions) {
      auto mem = dataset.memories.find(p);
      if (mem == dataset.memories.end()) continue;
      const auto& pairs = mem->second;
      std::vector<std::vector<float>> embeddings(pairs.size());
      const auto n = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(static) num_threads(std::max(1, settings.parallelism))
      for (std::int64_t i = 0; i < n; ++i)
        embeddings[i] = embedder.embed(render_turn_pair(pairs[i].timestamp, pairs[i].question, pairs[i].answer));
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto id = store.insert(p, pairs[i].timestamp, pairs[i].question, pairs[i].answer, "dataset",
                                     embeddings[i]);
        session_of[id] = pairs[i].session_id;
      }
    }
  }

  Router router(cfg, store, embedder, backends);
  EvalReport report;
  report.dataset = dataset.name;
  report.condition = cond;
  report.small_model = settings.small_model;
  report.tau = cfg.tau;
  report.questions.resize(dataset.items.size());

  const auto n = static_cast<std::int64_t>(dataset.items.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, settings.parallelism))
  for (std::int64_t i = 0; i < n; ++i) {
    const QAItem& item = dataset.items[i];
    QuestionRecord& rec = report.questions[i];
    rec.question_id = item.question_id;
    rec.category = item.category;
    rec.question = item.question;
    rec.gold = item.answer;
    const auto part = dataset.partition_of.find(item.question_id);
    const std::string user = part == dataset.partition_of.end() ? item.question_id : part->second;

    RouteOptions opt;
    opt.memory_enabled = cond.memory_enabled;
    opt.routing_enabled = cond.routing_enabled;
    opt.store_interaction = false;
    opt.request_id = item.question_id;
    if (cond.full_context) {
      auto t = dataset.transcripts.find(user);
      opt.inline_context = t == dataset.transcripts.end() ? std::vector<std::string>{} : t->second;
    }
    try {
      auto result = router.route(item.question, user, opt);
      rec.prediction = std::move(result.response);
      rec.decision = std::move(result.decision);
      if (cond.memory_enabled && item.has_evidence) {
        const auto hits = router.retrieve(item.question, user, settings.recall_k, cfg.retrieval, cfg.fusion);
        std::vector<std::string> sessions;
        for (const auto& h : hits) sessions.push_back(session_of[h.id]);
        rec.recall = retrieval_recall(sessions, item.evidence_ids, settings.recall_k);
      }
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
      rec.decision.request_id = item.question_id;
    }
    rec.f1 = token_f1(rec.prediction, rec.gold);
    rec.bleu1 = bleu1(rec.prediction, rec.gold, settings.bleu_brevity_penalty);
  }
  summarize(report);
  if (!report.complete)
    spdlog::warn("condition {}: {} of {} questions failed", cond.name, report.failures, report.questions.size());
  return report;
}

RetrievalComparison compare_retrieval(const EvalDataset& dataset, const EvalSettings& settings,
                                      BackendPool& backends, const Embedder& embedder, RetrievalMode baseline_mode,
                                      std::optional<FusionConfig> baseline_fusion, RetrievalMode candidate_mode,
                                      std::optional<FusionConfig> candidate_fusion) {
  std::vector<std::string> cascade;
  for (const auto& m : settings.cascade.models) cascade.push_back(m.name);
  EvalCondition base{"warm-compound-" + std::string(to_string(baseline_mode)), true, cascade.size() >= 2, cascade,
                     baseline_mode, baseline_fusion, false};
  EvalCondition cand{"warm-compound-" + std::string(to_string(candidate_mode)), true, cascade.size() >= 2, cascade,
                     candidate_mode, candidate_fusion, false};

  RetrievalComparison out;
  out.baseline = run_condition(base, dataset, settings, backends, embedder);
  out.candidate = run_condition(cand, dataset, settings, backends, embedder);
  for (const auto& type : ordered_categories(out.baseline.per_category)) {
    const auto& b = out.baseline.per_category.at(type);
    const auto& c = out.candidate.per_category.at(type);
    TypeDelta d;
    d.type = type;
    d.n = b.n;
    d.baseline_f1 = 100.0 * b.f1;
    d.candidate_f1 = 100.0 * c.f1;
    d.delta = d.candidate_f1 - d.baseline_f1;
    d.baseline_recall = b.recall;
    d.candidate_recall = c.recall;
    out.per_type.push_back(d);
  }
  return out;
}

std::vector<std::string> ordered_categories(const std::map<std::string, CategoryStats>& per_category) {
  std::vector<std::string> order;
  for (const auto* known : {&locomo_categories(), &longmemeval_types()})
    for (const auto& c : *known)
      if (per_category.count(c)) order.push_back(c);
  for (const auto& [c, _] : per_category)
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  return order;
}

}  // namespace memroute::eval
