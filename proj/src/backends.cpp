#include "memroute/backends.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "memroute/errors.hpp"
#include "memroute/tokenize.hpp"

namespace memroute {

using json = nlohmann::json;

const char* to_string(BackendError::Kind kind) noexcept {
  switch (kind) {
    case BackendError::Kind::transport: return "transport";
    case BackendError::Kind::timeout: return "timeout";
    case BackendError::Kind::http_status: return "http_status";
    case BackendError::Kind::malformed: return "malformed";
    case BackendError::Kind::no_logprobs: return "no_logprobs";
  }
  return "?";
}

std::string_view ChatRequest::query() const {
  for (const auto& s : segments)
    if (s.kind == SegmentKind::query) return s.text;
  return {};
}

std::string_view ChatRequest::memory() const {
  for (const auto& s : segments)
    if (s.kind == SegmentKind::memory) return s.text;
  return {};
}

void ChatRequest::validate() const {
  int last = -1;
  bool has_query = false;
  for (const auto& s : segments) {
    const int k = static_cast<int>(s.kind);
    if (k < last) throw std::invalid_argument("prompt segments must be ordered preamble, memory, query");
    last = k;
    has_query = has_query || s.kind == SegmentKind::query;
  }
  if (!has_query) throw std::invalid_argument("prompt has no query segment");
}

std::vector<std::string> mock_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// HTTP client

HttpEndpoint HttpEndpoint::parse(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError("endpoint '" + std::string(url) + "' has no scheme");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http")
    throw ConfigError("endpoint '" + std::string(url) + "': only http:// endpoints are supported");
  const auto path_start = url.find('/', scheme_end + 3);
  HttpEndpoint e;
  if (path_start == std::string_view::npos) {
    e.scheme_host_port = std::string(url);
  } else {
    e.scheme_host_port = std::string(url.substr(0, path_start));
    e.path_prefix = std::string(url.substr(path_start));
    while (!e.path_prefix.empty() && e.path_prefix.back() == '/') e.path_prefix.pop_back();
  }
  return e;
}

HttpChatBackend::HttpChatBackend(std::string base_url, HttpOptions options)
    : endpoint_(HttpEndpoint::parse(base_url)), options_(std::move(options)) {}

std::string HttpChatBackend::request_body(const ModelSpec& spec, const ChatRequest& req) {
  json messages = json::array();
  for (const auto& s : req.segments) {
    if (s.text.empty() && s.kind != SegmentKind::query) continue;
    messages.push_back({{"role", s.kind == SegmentKind::query ? "user" : "system"}, {"content", s.text}});
  }
  json body{{"model", spec.name}, {"messages", messages}, {"max_tokens", req.max_output_tokens}, {"stream", false}};
  if (req.want_logprobs) body["logprobs"] = true;
  return body.dump();
}

ChatResponse HttpChatBackend::parse_response(std::string_view body, const ChatRequest& req) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw BackendError(BackendError::Kind::malformed, std::string("reply is not JSON: ") + e.what());
  }
  ChatResponse out;
  try {
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    out.text = content.is_null() ? std::string{} : content.get<std::string>();
    if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
        choice["logprobs"]["content"].is_array()) {
      std::vector<TokenLogprob> tokens;
      for (const auto& t : choice["logprobs"]["content"])
        tokens.push_back({t.value("token", std::string{}), t.at("logprob").get<double>()});
      out.tokens = std::move(tokens);
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      out.prompt_token_count = j["usage"].value("prompt_tokens", std::int64_t{0});
      out.completion_token_count = j["usage"].value("completion_tokens", std::int64_t{0});
    } else {
      std::size_t words = 0;
      for (const auto& s : req.segments) words += whitespace_word_count(s.text);
      out.prompt_token_count = static_cast<std::int64_t>(words);
      out.completion_token_count = static_cast<std::int64_t>(whitespace_word_count(out.text));
    }
  } catch (const json::exception& e) {
    throw BackendError(BackendError::Kind::malformed, std::string("unexpected reply shape: ") + e.what());
  }
  if (req.want_logprobs && !out.tokens)
    throw BackendError(BackendError::Kind::no_logprobs, "backend returned no token logprobs");
  if (out.tokens) out.completion_token_count = static_cast<std::int64_t>(out.tokens->size());
  return out;
}

ChatResponse HttpChatBackend::complete(const ModelSpec& spec, const ChatRequest& req) {
  req.validate();
  const std::string body = request_body(spec, req);
  const std::string path = endpoint_.path_prefix + "/chat/completions";

  std::string last_error;
  BackendError::Kind last_kind = BackendError::Kind::transport;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    httplib::Client cli(endpoint_.scheme_host_port);
    cli.set_connection_timeout(options_.timeout_seconds, 0);
    cli.set_read_timeout(options_.timeout_seconds, 0);
    cli.set_write_timeout(options_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      last_kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                      ? BackendError::Kind::timeout
                      : BackendError::Kind::transport;
      last_error = spec.name + " at " + endpoint_.scheme_host_port + ": " + httplib::to_string(err);
      continue;
    }
    if (res->status != 200)
      throw BackendError(BackendError::Kind::http_status,
                         spec.name + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    return parse_response(res->body, req);
  }
  throw BackendError(last_kind, last_error);
}

// ---------------------------------------------------------------------------
// Scripted mock

MockBackend::MockBackend(std::vector<ScriptedBehavior> script, std::string fallback_reply, double fallback_logprob) {
  fallback_.reply = std::move(fallback_reply);
  fallback_.logprob = fallback_logprob;
  if (fallback_logprob > 0.0) throw ConfigError("mock fallback logprob must be <= 0");
  for (std::size_t i = 0; i < script.size(); ++i) {
    auto& b = script[i];
    const std::string where = "mock rule " + std::to_string(i);
    if (b.logprob > 0.0) throw ConfigError(where + ": logprob must be <= 0");
    if (b.logprobs) {
      for (double lp : *b.logprobs)
        if (lp > 0.0) throw ConfigError(where + ": logprobs must be <= 0");
      if (b.reply.find('{') == std::string::npos && b.logprobs->size() != mock_tokenize(b.reply).size())
        throw ConfigError(where + ": logprobs length does not match the reply's word count");
    }
    Rule r{std::move(b), std::nullopt};
    if (r.behavior.query_pattern) {
      try {
        r.pattern.emplace(*r.behavior.query_pattern, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw ConfigError(where + ": bad query_pattern: " + e.what());
      }
    }
    rules_.push_back(std::move(r));
  }
}

namespace {

ScriptedBehavior behavior_from_json(const json& j) {
  ScriptedBehavior b;
  if (j.contains("model")) b.model = j["model"].get<std::string>();
  if (j.contains("query_contains")) b.query_contains = j["query_contains"].get<std::string>();
  if (j.contains("query_pattern")) b.query_pattern = j["query_pattern"].get<std::string>();
  if (j.contains("context_contains")) b.context_contains = j["context_contains"].get<std::string>();
  if (j.contains("context_present")) b.context_present = j["context_present"].get<bool>();
  b.reply = j.value("reply", std::string{});
  b.logprob = j.value("logprob", -0.1);
  if (j.contains("logprobs")) b.logprobs = j["logprobs"].get<std::vector<double>>();
  if (j.contains("fail")) b.fail = j["fail"].get<std::string>();
  b.omit_logprobs = j.value("omit_logprobs", false);
  return b;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

std::unique_ptr<MockBackend> MockBackend::from_json_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mock script is not valid JSON: ") + e.what());
  }
  std::vector<ScriptedBehavior> rules;
  try {
    for (const auto& r : j.value("rules", json::array())) rules.push_back(behavior_from_json(r));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mock script rule: ") + e.what());
  }
  const auto fb = j.value("fallback", json::object());
  return std::make_unique<MockBackend>(std::move(rules), fb.value("reply", std::string("I don't know.")),
                                       fb.value("logprob", -0.5));
}

std::unique_ptr<MockBackend> MockBackend::load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock script " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

ChatResponse MockBackend::complete(const ModelSpec& spec, const ChatRequest& req) {
  req.validate();
  const std::string_view query = req.query();
  const std::string_view memory = req.memory();

  const ScriptedBehavior* chosen = &fallback_;
  for (const auto& r : rules_) {
    const auto& b = r.behavior;
    if (b.model && *b.model != spec.name) continue;
    if (b.query_contains && query.find(*b.query_contains) == std::string_view::npos) continue;
    if (r.pattern && !std::regex_search(query.begin(), query.end(), *r.pattern)) continue;
    if (b.context_contains && memory.find(*b.context_contains) == std::string_view::npos) continue;
    if (b.context_present && *b.context_present == memory.empty()) continue;
    chosen = &b;
    break;
  }

  if (chosen->fail) {
    const auto& f = *chosen->fail;
    const auto kind = f == "timeout"     ? BackendError::Kind::timeout
                      : f == "malformed" ? BackendError::Kind::malformed
                      : f == "http"      ? BackendError::Kind::http_status
                                         : BackendError::Kind::transport;
    throw BackendError(kind, "mock " + spec.name + ": scripted " + f + " failure");
  }

  ChatResponse out;
  out.text = chosen->reply;
  replace_all(out.text, "{segments}", std::to_string(req.segments.size()));
  replace_all(out.text, "{model}", spec.name);

  const auto words = mock_tokenize(out.text);
  std::size_t prompt_words = 0;
  for (const auto& s : req.segments) prompt_words += whitespace_word_count(s.text);
  out.prompt_token_count = static_cast<std::int64_t>(prompt_words);
  out.completion_token_count = static_cast<std::int64_t>(words.size());

  if (req.want_logprobs) {
    if (chosen->omit_logprobs)
      throw BackendError(BackendError::Kind::no_logprobs, "mock " + spec.name + ": logprobs not supported");
    std::vector<TokenLogprob> tokens;
    tokens.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
      double lp = chosen->logprob;
      if (chosen->logprobs && !chosen->logprobs->empty())
        lp = (*chosen->logprobs)[std::min(i, chosen->logprobs->size() - 1)];
      tokens.push_back({words[i], lp});
    }
    out.tokens = std::move(tokens);
  }
  return out;
}

// ---------------------------------------------------------------------------

void BackendPool::set_mock(std::shared_ptr<ChatBackend> mock) {
  std::lock_guard lock(mutex_);
  mock_ = std::move(mock);
}

void BackendPool::register_endpoint(std::string endpoint, std::shared_ptr<ChatBackend> backend) {
  std::lock_guard lock(mutex_);
  endpoints_[std::move(endpoint)] = std::move(backend);
}

void BackendPool::set_http_options(HttpOptions options) {
  std::lock_guard lock(mutex_);
  http_options_ = std::move(options);
}

std::shared_ptr<ChatBackend> BackendPool::resolve(const ModelSpec& spec) {
  std::lock_guard lock(mutex_);
  if (auto it = endpoints_.find(spec.endpoint); it != endpoints_.end()) return it->second;
  if (spec.endpoint == "mock" || spec.endpoint.rfind("mock:", 0) == 0) {
    if (!mock_) throw ConfigError("model '" + spec.name + "' uses a mock endpoint but no mock script is loaded");
    return mock_;
  }
  if (spec.endpoint.rfind("http://", 0) == 0) {
    auto backend = std::make_shared<HttpChatBackend>(spec.endpoint, http_options_);
    endpoints_.emplace(spec.endpoint, backend);
    return backend;
  }
  throw ConfigError("model '" + spec.name + "': unsupported endpoint '" + spec.endpoint + "'");
}

}  // namespace memroute
