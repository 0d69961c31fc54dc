#include "memroute/gateway.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "memroute/errors.hpp"

namespace memroute {

using json = nlohmann::json;

namespace {

class BadRequest : public Error {
 public:
  using Error::Error;
};

HttpReply error_reply(int status, const std::string& type, const std::string& message) {
  return {status, {{"error", {{"message", message}, {"type", type}}}}};
}

std::string message_text(const json& content, const std::string& where) {
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text" && part.contains("text") && part["text"].is_string()) {
        if (!out.empty()) out += '\n';
        out += part["text"].get<std::string>();
      }
    }
    return out;
  }
  throw BadRequest(where + ".content must be a string or a list of text parts");
}

template <class T>
std::optional<T> ext_field(const json& ext, const char* key, const char* type_name) {
  if (!ext.contains(key) || ext[key].is_null()) return std::nullopt;
  try {
    return ext[key].get<T>();
  } catch (const json::exception&) {
    throw BadRequest(std::string("memroute.") + key + " must be " + type_name);
  }
}

std::string require_string(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_string())
    throw BadRequest(std::string("field '") + key + "' is required and must be a string");
  return body[key].get<std::string>();
}

/// Strategy names for search: a channel (dense, sparse, hybrid) or a fusion
/// strategy, which implies hybrid.
void apply_strategy(const std::string& s, RetrievalMode& mode, FusionConfig& fusion) {
  if (s == "dense" || s == "sparse" || s == "hybrid") {
    mode = parse_retrieval_mode(s);
    return;
  }
  try {
    fusion.strategy = parse_fusion_strategy(s);
  } catch (const Error&) {
    throw BadRequest("strategy must be dense, sparse, hybrid, reciprocal_rank, weighted or bm25_dominant, got '" +
                     s + "'");
  }
  mode = RetrievalMode::hybrid;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

GatewayService::GatewayService(GatewayConfig config, std::shared_ptr<ChatBackend> mock)
    : config_(std::move(config)) {
  config_.validate();
  small_model_ = config_.small_model.empty() ? config_.cascade.models.front().name : config_.small_model;
  store_ = std::make_unique<MemoryStore>(StoreConfig{config_.embedding_dim, config_.store_path});
  embedder_ = make_embedder(config_.embedder, config_.embedding_dim, config_.embedding_model, config_.http);
  backends_.set_http_options(config_.http);
  if (mock) {
    backends_.set_mock(std::move(mock));
  } else if (!config_.mock_script.empty()) {
    backends_.set_mock(std::shared_ptr<ChatBackend>(MockBackend::load_script(config_.mock_script)));
  } else {
    backends_.set_mock(std::make_shared<MockBackend>(std::vector<ScriptedBehavior>{}));
  }
  router_ = std::make_unique<Router>(config_.cascade, *store_, *embedder_, backends_, &ledger_);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  id_prefix_ = "chatcmpl-" + std::to_string(ms) + "-";
}

GatewayService::~GatewayService() {
  try {
    flush();
  } catch (const std::exception& e) {
    spdlog::error("ledger flush on shutdown failed: {}", e.what());
  }
}

void GatewayService::flush() {
  if (config_.ledger_path.empty()) return;
  std::lock_guard lock(ledger_file_mutex_);
  const auto entries = ledger_.snapshot();
  if (ledger_written_ >= entries.size()) return;
  std::ofstream out(config_.ledger_path, std::ios::app);
  if (!out) throw StoreError("cannot open ledger file " + config_.ledger_path);
  for (std::size_t i = ledger_written_; i < entries.size(); ++i) {
    const auto& e = entries[i];
    out << json{{"request_id", e.request_id},
                {"model", e.model},
                {"params_billion", e.params_billion},
                {"input_tokens", e.input_tokens},
                {"output_tokens", e.output_tokens},
                {"eff_cost", e.eff_cost}}
               .dump()
        << '\n';
  }
  out.flush();
  if (!out) throw StoreError("write to ledger file " + config_.ledger_path + " failed");
  ledger_written_ = entries.size();
}

HttpReply GatewayService::handle_chat(const json& body) {
  std::string query;
  std::string user = "default";
  RouteOptions opt;
  opt.routing_enabled = config_.routing_enabled;
  try {
    if (!body.is_object()) throw BadRequest("request body must be a JSON object");
    if (!body.contains("messages") || !body["messages"].is_array() || body["messages"].empty())
      throw BadRequest("field 'messages' must be a non-empty list");
    const auto& messages = body["messages"];
    for (std::size_t i = messages.size(); i-- > 0;) {
      const auto& m = messages[i];
      const std::string where = "messages[" + std::to_string(i) + "]";
      if (!m.is_object() || !m.contains("role") || !m["role"].is_string())
        throw BadRequest(where + " must be an object with a string 'role'");
      if (m["role"] == "user") {
        if (!m.contains("content")) throw BadRequest(where + ".content is required");
        query = message_text(m["content"], where);
        break;
      }
    }
    if (query.empty()) throw BadRequest("no user message with text content");
    if (body.contains("user")) {
      if (!body["user"].is_string()) throw BadRequest("field 'user' must be a string");
      user = body["user"].get<std::string>();
    }
    if (body.contains("memroute")) {
      const json& ext = body["memroute"];
      if (!ext.is_object()) throw BadRequest("field 'memroute' must be an object");
      if (auto u = ext_field<std::string>(ext, "user_id", "a string")) user = *u;
      opt.memory_enabled = ext_field<bool>(ext, "memory", "true or false");
      if (auto r = ext_field<bool>(ext, "routing", "true or false")) opt.routing_enabled = *r;
      opt.tau = ext_field<double>(ext, "tau", "a number");
      if (opt.tau && !(*opt.tau >= 0.0)) throw BadRequest("memroute.tau must not be negative");
      if (auto k = ext_field<std::int64_t>(ext, "k", "an integer")) {
        if (*k <= 0) throw BadRequest("memroute.k must be positive");
        opt.top_k = static_cast<std::size_t>(*k);
      }
      if (auto s = ext_field<std::string>(ext, "retrieval", "a string")) {
        RetrievalMode mode = config_.cascade.retrieval;
        FusionConfig fusion = config_.cascade.fusion;
        apply_strategy(*s, mode, fusion);
        opt.retrieval = mode;
        if (fusion.strategy != config_.cascade.fusion.strategy) opt.fusion = fusion;
      }
      if (auto s = ext_field<std::string>(ext, "fusion", "a string")) {
        FusionConfig fusion = opt.fusion.value_or(config_.cascade.fusion);
        try {
          fusion.strategy = parse_fusion_strategy(*s);
        } catch (const Error& e) {
          throw BadRequest(std::string("memroute.fusion: ") + e.what());
        }
        opt.fusion = fusion;
      }
      opt.session_timestamp = ext_field<std::string>(ext, "session_timestamp", "a string");
      if (auto s = ext_field<bool>(ext, "store", "true or false")) opt.store_interaction = *s;
    }
  } catch (const BadRequest& e) {
    return error_reply(400, "invalid_request_error", e.what());
  }
  if (user.empty()) return error_reply(400, "invalid_request_error", "user id must not be empty");

  opt.request_id = id_prefix_ + std::to_string(++next_request_);
  RouteResult result;
  try {
    result = router_->route(query, user, opt);
  } catch (const BackendError& e) {
    ++chat_failed_;
    flush();
    HttpReply r = error_reply(502, "backend_error", e.what());
    r.body["error"]["kind"] = to_string(e.kind());
    r.body["memroute"] = {{"request_id", opt.request_id}};
    return r;
  } catch (const ConfigError& e) {
    return error_reply(400, "invalid_request_error", e.what());
  }
  flush();

  const RouteDecision& d = result.decision;
  ++chat_ok_;
  if (d.chosen_model == small_model_) ++served_by_small_;
  if (d.escalated) ++escalated_;
  if (d.forced_accept) ++forced_accepts_;

  std::int64_t prompt = 0, completion = 0;
  for (const auto& inv : d.invocations) {
    prompt += inv.prompt_tokens;
    completion += inv.completion_tokens;
  }
  json ext = {{"request_id", d.request_id},
              {"chosen_model", d.chosen_model},
              {"confidence", d.confidence ? json(d.confidence->value) : json(nullptr)},
              {"mean_logprob", d.confidence ? json(d.confidence->mean_logprob) : json(nullptr)},
              {"tau", d.tau},
              {"ell_min", d.floor},
              {"escalated", d.escalated},
              {"forced_accept", d.forced_accept},
              {"probe_failed", d.probe_failed},
              {"memory_ids", d.injected_memory_ids},
              {"eff_cost", d.eff_cost},
              {"stored_record_id", d.stored_record_id ? json(*d.stored_record_id) : json(nullptr)},
              {"memory_write_failed", d.memory_write_failed}};
  json inv = json::array();
  for (const auto& i : d.invocations)
    inv.push_back({{"model", i.model},
                   {"prompt_tokens", i.prompt_tokens},
                   {"completion_tokens", i.completion_tokens},
                   {"eff_cost", i.eff_cost},
                   {"failed", i.failed}});
  ext["invocations"] = inv;

  const auto created =
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  return {200,
          {{"id", d.request_id},
           {"object", "chat.completion"},
           {"created", created},
           {"model", d.chosen_model},
           {"choices",
            json::array({{{"index", 0},
                          {"message", {{"role", "assistant"}, {"content", result.response}}},
                          {"finish_reason", "stop"}}})},
           {"usage", {{"prompt_tokens", prompt}, {"completion_tokens", completion}, {"total_tokens", prompt + completion}}},
           {"memroute", ext}}};
}

HttpReply GatewayService::handle_memory_insert(const json& body) {
  std::string user;
  std::vector<json> pairs;
  try {
    if (!body.is_object()) throw BadRequest("request body must be a JSON object");
    user = require_string(body, "user_id");
    if (user.empty()) throw BadRequest("field 'user_id' must not be empty");
    if (body.contains("pairs")) {
      if (!body["pairs"].is_array()) throw BadRequest("field 'pairs' must be a list");
      for (const auto& p : body["pairs"]) pairs.push_back(p);
    } else {
      pairs.push_back(body);
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const std::string where = body.contains("pairs") ? "pairs[" + std::to_string(i) + "]" : std::string("body");
      const auto& p = pairs[i];
      if (!p.is_object()) throw BadRequest(where + " must be an object");
      for (const char* key : {"question", "answer"})
        if (!p.contains(key) || !p[key].is_string())
          throw BadRequest(where + "." + key + " is required and must be a string");
      for (const char* key : {"session_timestamp", "source_model"})
        if (p.contains(key) && !p[key].is_string()) throw BadRequest(where + "." + key + " must be a string");
    }
  } catch (const BadRequest& e) {
    return error_reply(400, "invalid_request_error", e.what());
  }

  json ids = json::array();
  for (const auto& p : pairs) {
    const std::string ts = p.value("session_timestamp", today_timestamp());
    const std::string q = p["question"].get<std::string>();
    const std::string a = p["answer"].get<std::string>();
    try {
      const auto embedding = embedder_->embed(render_turn_pair(ts, q, a));
      ids.push_back(store_->insert(user, ts, q, a, p.value("source_model", std::string("client")), embedding));
      ++memories_inserted_;
    } catch (const BackendError& e) {
      HttpReply r = error_reply(502, "embedder_error", e.what());
      r.body["ids"] = ids;
      return r;
    } catch (const StoreError& e) {
      HttpReply r = error_reply(500, "store_error", e.what());
      r.body["ids"] = ids;
      return r;
    }
  }
  return {201, {{"user_id", user}, {"ids", ids}}};
}

HttpReply GatewayService::handle_memory_search(const std::map<std::string, std::string>& params) const {
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = params.find(key);
    return it == params.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  std::string user, query;
  std::size_t k = config_.cascade.top_k;
  RetrievalMode mode = config_.cascade.retrieval;
  FusionConfig fusion = config_.cascade.fusion;
  try {
    auto u = get("user_id");
    if (!u || u->empty()) throw BadRequest("query parameter 'user_id' is required");
    auto q = get("query");
    if (!q) throw BadRequest("query parameter 'query' is required");
    user = *u;
    query = *q;
    if (auto ks = get("k")) {
      std::size_t pos = 0;
      long long v = 0;
      try {
        v = std::stoll(*ks, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != ks->size() || v <= 0) throw BadRequest("query parameter 'k' must be a positive integer");
      k = static_cast<std::size_t>(v);
    }
    if (auto s = get("strategy")) apply_strategy(*s, mode, fusion);
  } catch (const BadRequest& e) {
    return error_reply(400, "invalid_request_error", e.what());
  }

  std::vector<ScoredHit> hits;
  const auto records = router_->retrieve(query, user, k, mode, fusion, &hits);
  json out = json::array();
  for (std::size_t i = 0; i < records.size() && i < hits.size(); ++i) {
    const auto& h = hits[i];
    out.push_back({{"rank", i + 1},
                   {"record_id", h.record_id},
                   {"fused_score", h.fused_score},
                   {"dense_score", optional_json(h.dense_score)},
                   {"sparse_score", optional_json(h.sparse_score)},
                   {"dense_rank", optional_json(h.dense_rank)},
                   {"sparse_rank", optional_json(h.sparse_rank)},
                   {"session_timestamp", records[i].session_timestamp},
                   {"rendered_text", records[i].rendered_text}});
  }
  return {200,
          {{"user_id", user}, {"query", query}, {"k", k}, {"strategy", to_string(mode)},
           {"fusion", to_string(fusion.strategy)}, {"hits", out}}};
}

HttpReply GatewayService::handle_metrics() const {
  const auto entries = ledger_.snapshot();
  const auto summary = aggregate(entries, small_model_);
  json per_model = json::object();
  for (const auto& [name, t] : summary.per_model)
    per_model[name] = {{"invocations", t.invocations},
                       {"input_tokens", t.input_tokens},
                       {"output_tokens", t.output_tokens},
                       {"eff_cost", t.eff_cost}};
  const std::uint64_t ok = chat_ok_.load();
  json pct = nullptr;
  if (ok) pct = round_one_decimal(100.0 * static_cast<double>(served_by_small_.load()) / static_cast<double>(ok));
  json per_user = json::object();
  for (const auto& [u, n] : store_->counts_by_user()) per_user[u] = n;
  return {200,
          {{"requests", {{"total", ok + chat_failed_.load()}, {"succeeded", ok}, {"failed", chat_failed_.load()}}},
           {"routing",
            {{"small_model", small_model_},
             {"served_by_small", served_by_small_.load()},
             {"escalated", escalated_.load()},
             {"forced_accept", forced_accepts_.load()},
             {"pct_on_small", pct}}},
           {"cost",
            {{"invocations", summary.total.invocations},
             {"input_tokens", summary.total.input_tokens},
             {"output_tokens", summary.total.output_tokens},
             {"eff_cost", summary.total.eff_cost},
             {"per_model", per_model}}},
           {"memory",
            {{"total", store_->total_count()},
             {"per_user", per_user},
             {"inserted_via_api", memories_inserted_.load()},
             {"memory_loss_events", router_->memory_loss_events()}}}}};
}

void GatewayService::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse_body = [](const httplib::Request& req, json& out) -> std::optional<HttpReply> {
    try {
      out = json::parse(req.body);
      return std::nullopt;
    } catch (const json::exception& e) {
      return error_reply(400, "invalid_request_error", std::string("request body is not valid JSON: ") + e.what());
    }
  };
  server.Post("/v1/chat/completions", [this, send, parse_body](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (auto err = parse_body(req, body)) return send(res, *err);
    send(res, handle_chat(body));
  });
  server.Post("/v1/memories", [this, send, parse_body](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (auto err = parse_body(req, body)) return send(res, *err);
    send(res, handle_memory_insert(body));
  });
  server.Get("/v1/memories/search", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> params;
    for (const auto& [k, v] : req.params) params[k] = v;
    send(res, handle_memory_search(params));
  });
  server.Get("/v1/metrics", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, handle_metrics());
  });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("unhandled error: {}", what);
    send(res, error_reply(500, "internal_error", what));
  });
}

bool run_server(GatewayService& service, const std::string& host, int port, const std::atomic<bool>& stop) {
  httplib::Server server;
  service.mount(server);
  if (!server.bind_to_port(host, port)) return false;
  std::thread watcher([&] {
    while (!stop.load() && !server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  spdlog::info("listening on {}:{}", host, port);
  server.listen_after_bind();
  watcher.join();
  service.flush();
  spdlog::info("stopped; ledger flushed, {} memories on record", service.store().total_count());
  return true;
}

}  // namespace memroute
