#include "memroute/router.hpp"

#include <ctime>
#include <set>

#include <spdlog/spdlog.h>

#include "memroute/errors.hpp"
#include "memroute/tokenize.hpp"

namespace memroute {

void CascadeConfig::validate() const {
  if (models.empty()) throw ConfigError("models: at least one model is required");
  std::set<std::string> names;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    const std::string where = "models[" + std::to_string(i) + "]";
    if (m.name.empty()) throw ConfigError(where + ".name must not be empty");
    if (!names.insert(m.name).second) throw ConfigError(where + ".name '" + m.name + "' is duplicated");
    if (!(m.params_billion > 0.0)) throw ConfigError(where + ".params_billion must be positive");
    if (i > 0 && !(m.params_billion > models[i - 1].params_billion))
      throw ConfigError(where + ".params_billion must exceed the previous model's (cascade is cheapest first)");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0, 1]");
  if (!(floor < 0.0)) throw ConfigError("ell_min must be negative");
  if (top_k == 0) throw ConfigError("top_k must be positive");
  if (probe_memory_token_budget > full_memory_token_budget)
    throw ConfigError("probe_memory_token_budget must not exceed full_memory_token_budget");
  if (max_output_tokens <= 0) throw ConfigError("max_output_tokens must be positive");
  fusion.validate();
  bm25.validate();
}

std::string AugmentedPrompt::memory_text() const {
  std::string out;
  for (std::size_t i = 0; i < memory_lines.size(); ++i) {
    if (i) out += '\n';
    out += memory_lines[i];
  }
  return out;
}

std::string AugmentedPrompt::full_text() const {
  std::string out = preamble;
  if (!memory_lines.empty()) {
    out += "\n\n";
    out += memory_text();
  }
  out += "\n\n";
  out += query;
  return out;
}

ChatRequest AugmentedPrompt::to_request(std::string model, bool want_logprobs, int max_output_tokens) const {
  ChatRequest req;
  req.model = std::move(model);
  req.want_logprobs = want_logprobs;
  req.max_output_tokens = max_output_tokens;
  req.segments.push_back({SegmentKind::preamble, preamble});
  if (!memory_lines.empty()) req.segments.push_back({SegmentKind::memory, memory_text()});
  req.segments.push_back({SegmentKind::query, query});
  return req;
}

AugmentedPrompt build_augmented_prompt(std::string_view query, std::span<const MemoryRecord> memories,
                                       std::size_t token_budget, std::string_view preamble) {
  AugmentedPrompt p;
  p.preamble = preamble;
  p.query = query;
  for (const auto& m : memories) {
    const std::size_t cost = estimate_tokens(m.rendered_text);
    if (p.memory_tokens + cost > token_budget) break;
    p.memory_tokens += cost;
    p.memory_lines.push_back(m.rendered_text);
    p.memory_ids.push_back(m.id);
  }
  return p;
}

std::string today_timestamp() {
  static constexpr const char* kMonths[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                            "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  return std::to_string(tm.tm_mday) + " " + kMonths[tm.tm_mon] + " " + std::to_string(tm.tm_year + 1900);
}

Router::Router(CascadeConfig config, MemoryStore& store, const Embedder& embedder, BackendPool& backends,
               CostLedger* ledger)
    : config_(std::move(config)), store_(store), embedder_(embedder), backends_(backends), ledger_(ledger) {
  config_.validate();
  for (std::size_t i = 0; i < config_.models.size(); ++i) config_.models[i].probe_role = static_cast<int>(i + 1);
  if (embedder_.dimension() != store_.embedding_dim())
    throw ConfigError("embedder dimension " + std::to_string(embedder_.dimension()) +
                      " does not match store.embedding_dim " + std::to_string(store_.embedding_dim()));
}

std::vector<MemoryRecord> Router::retrieve(std::string_view query, std::string_view user_id, std::size_t k,
                                           RetrievalMode mode, const FusionConfig& fusion,
                                           std::vector<ScoredHit>* hits) const {
  SearchRequest req;
  req.query_text = query;
  req.k = k;
  req.mode = mode;
  req.fusion = fusion;
  req.bm25 = config_.bm25;
  req.overfetch = config_.overfetch;
  if (mode != RetrievalMode::sparse) {
    try {
      req.query_embedding = embedder_.embed(query);
    } catch (const std::exception& e) {
      spdlog::warn("query embedding failed, dense channel skipped: {}", e.what());
    }
  }
  return Retriever(store_).retrieve(user_id, req, hits);
}

std::optional<RecordId> Router::store_interaction(std::string_view user_id, std::string_view query,
                                                  std::string_view response, std::string_view session_timestamp,
                                                  std::string_view source_model) {
  const std::string rendered = render_turn_pair(session_timestamp, query, response);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      const auto embedding = embedder_.embed(rendered);
      return store_.insert(user_id, session_timestamp, query, response, source_model, embedding);
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  ++memory_loss_events_;
  spdlog::error("memory-loss event: turn-pair for user '{}' not stored: {}", user_id, last_error);
  return std::nullopt;
}

RouteResult Router::route(std::string_view query, std::string_view user_id, const RouteOptions& options) {
  const auto& models = config_.models;
  const bool memory_on = options.memory_enabled.value_or(config_.memory_enabled);
  const std::size_t k = options.top_k.value_or(config_.top_k);
  const auto fusion = options.fusion.value_or(config_.fusion);
  const auto mode = options.retrieval.value_or(config_.retrieval);
  if (k == 0) throw ConfigError("top_k must be positive");
  fusion.validate();

  RouteResult result;
  RouteDecision& d = result.decision;
  d.request_id = options.request_id.empty() ? "req-" + std::to_string(++request_counter_) : options.request_id;
  d.tau = options.tau.value_or(config_.tau);
  d.floor = config_.floor;

  std::vector<MemoryRecord> memories;
  if (!options.inline_context && memory_on) memories = retrieve(query, user_id, k, mode, fusion);

  auto make_prompt = [&](std::size_t budget) {
    if (options.inline_context) {
      AugmentedPrompt p;
      p.preamble = config_.preamble;
      p.query = query;
      p.memory_lines = *options.inline_context;
      for (const auto& l : p.memory_lines) p.memory_tokens += estimate_tokens(l);
      return p;
    }
    return build_augmented_prompt(query, memories, budget, config_.preamble);
  };

  auto invoke = [&](const ModelSpec& m, const AugmentedPrompt& p, bool want_logprobs) {
    ChatResponse resp;
    try {
      resp = backends_.resolve(m)->complete(m, p.to_request(m.name, want_logprobs, config_.max_output_tokens));
    } catch (const BackendError&) {
      d.invocations.push_back({m.name, m.params_billion, 0, 0, 0.0, true});
      throw;
    }
    Invocation inv;
    inv.model = m.name;
    inv.params_billion = m.params_billion;
    inv.prompt_tokens = resp.prompt_token_count;
    inv.completion_tokens = resp.completion_token_count;
    inv.eff_cost = eff_cost(inv.prompt_tokens, inv.completion_tokens, m.params_billion);
    d.eff_cost += inv.eff_cost;
    d.invocations.push_back(std::move(inv));
    return resp;
  };

  auto flush_ledger = [&] {
    if (!ledger_) return;
    for (const auto& inv : d.invocations)
      ledger_->append(make_ledger_entry(d.request_id, inv.model, inv.params_billion, inv.prompt_tokens,
                                        inv.completion_tokens));
  };

  try {
    if (!options.routing_enabled) {
      result.first_prompt = make_prompt(config_.full_memory_token_budget);
      d.injected_memory_ids = result.first_prompt.memory_ids;
      result.response = invoke(models.front(), result.first_prompt, false).text;
      d.chosen_model = models.front().name;
    } else {
      result.first_prompt = make_prompt(config_.probe_memory_token_budget);
      d.injected_memory_ids = result.first_prompt.memory_ids;

      std::optional<ChatResponse> probe;
      try {
        probe = invoke(models.front(), result.first_prompt, true);
      } catch (const BackendError& e) {
        if (models.size() == 1) throw;
        d.probe_failed = true;
        d.probe_error = e.what();
        spdlog::warn("probe of {} failed ({}), escalating: {}", models.front().name, to_string(e.kind()), e.what());
      }

      if (probe && probe->tokens && !probe->tokens->empty()) {
        d.confidence = score_confidence(*probe->tokens, config_.floor);
      } else {
        d.confidence = ConfidenceScore{config_.floor, config_.floor, 0.0};
      }

      const bool accepted_on_probe = probe && d.confidence->value >= d.tau;
      if (accepted_on_probe || models.size() == 1) {
        result.response = probe->text;
        d.chosen_model = models.front().name;
        d.forced_accept = !accepted_on_probe;
      } else {
        d.escalated = true;
        const AugmentedPrompt full = make_prompt(config_.full_memory_token_budget);
        for (std::size_t i = 1; i < models.size(); ++i) {
          const bool last = i + 1 == models.size();
          try {
            result.response = invoke(models[i], full, false).text;
            d.chosen_model = models[i].name;
            d.forced_accept = last;
            break;
          } catch (const BackendError& e) {
            if (last) throw;
            spdlog::warn("escalation to {} failed, trying next model: {}", models[i].name, e.what());
          }
        }
      }
    }
  } catch (...) {
    flush_ledger();
    throw;
  }
  flush_ledger();

  if (options.store_interaction) {
    const std::string ts = options.session_timestamp.value_or(today_timestamp());
    d.stored_record_id = store_interaction(user_id, query, result.response, ts, d.chosen_model);
    d.memory_write_failed = !d.stored_record_id.has_value();
  }
  return result;
}

}  // namespace memroute
