#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "memroute/confidence.hpp"

namespace memroute {

/// One cascade member.
struct ModelSpec {
  std::string name;
  double params_billion = 8.0;
  /// "mock", "mock:<label>" or an http:// base URL such as http://host:8000/v1
  std::string endpoint = "mock";
  std::size_t context_budget = 32768;
  /// 1 = cheapest.
  int probe_role = 1;

  bool operator==(const ModelSpec&) const = default;
};

enum class SegmentKind { preamble, memory, query };

struct PromptSegment {
  SegmentKind kind;
  std::string text;
};

/// A chat request. Segments are ordered preamble, memory, query; the memory
/// segment is omitted when no memory is injected.
struct ChatRequest {
  std::string model;
  std::vector<PromptSegment> segments;
  bool want_logprobs = false;
  int max_output_tokens = 256;

  std::string_view query() const;
  /// Memory segment text, empty when there is none.
  std::string_view memory() const;
  /// Throws std::invalid_argument if the segments are out of order or the
  /// query segment is missing.
  void validate() const;
};

struct ChatResponse {
  std::string text;
  /// Present when logprobs were requested and returned.
  std::optional<std::vector<TokenLogprob>> tokens;
  std::int64_t prompt_token_count = 0;
  std::int64_t completion_token_count = 0;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Throws BackendError. When req.want_logprobs is set and the backend does
  /// not return them, the error kind is no_logprobs.
  virtual ChatResponse complete(const ModelSpec& spec, const ChatRequest& req) = 0;
};

/// Base URL split into what cpp-httplib wants.
struct HttpEndpoint {
  std::string scheme_host_port;
  std::string path_prefix;

  static HttpEndpoint parse(std::string_view url);
};

struct HttpOptions {
  int timeout_seconds = 120;
  /// Extra attempts after a transport failure.
  int retries = 1;
  std::string api_key;
};

/// Client for the common chat-completions wire protocol:
/// POST <base>/chat/completions with {model, messages, logprobs, max_tokens},
/// reply {choices[0].message.content, choices[0].logprobs.content[], usage}.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(std::string base_url, HttpOptions options = {});
  ChatResponse complete(const ModelSpec& spec, const ChatRequest& req) override;

  static std::string request_body(const ModelSpec& spec, const ChatRequest& req);
  static ChatResponse parse_response(std::string_view body, const ChatRequest& req);

 private:
  HttpEndpoint endpoint_;
  HttpOptions options_;
};

/// One mock rule. Every present matcher must hold for the rule to apply.
struct ScriptedBehavior {
  std::optional<std::string> model;
  std::optional<std::string> query_contains;
  std::optional<std::string> query_pattern;
  std::optional<std::string> context_contains;
  /// true: some memory must be injected; false: none may be.
  std::optional<bool> context_present;

  /// "{segments}" expands to the request's segment count, "{model}" to the
  /// model name.
  std::string reply;
  /// Uniform per-token logprob, used unless `logprobs` is given.
  double logprob = -0.1;
  /// Explicit per-token logprobs; length must equal the reply's word count.
  std::optional<std::vector<double>> logprobs;
  /// Simulated failure instead of a reply.
  std::optional<std::string> fail;
  bool omit_logprobs = false;
};

/// Deterministic scripted backend. First matching rule wins; tokens are the
/// whitespace-split reply, one TokenLogprob per word.
class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(std::vector<ScriptedBehavior> script, std::string fallback_reply = "I don't know.",
                       double fallback_logprob = -0.5);

  /// {"fallback": {"reply": ..., "logprob": ...}, "rules": [{...}, ...]}
  static std::unique_ptr<MockBackend> from_json_text(std::string_view text);
  static std::unique_ptr<MockBackend> load_script(const std::filesystem::path& path);

  ChatResponse complete(const ModelSpec& spec, const ChatRequest& req) override;

  std::size_t rule_count() const noexcept { return rules_.size(); }

 private:
  struct Rule {
    ScriptedBehavior behavior;
    std::optional<std::regex> pattern;
  };
  std::vector<Rule> rules_;
  ScriptedBehavior fallback_;
};

/// Resolves a ModelSpec's endpoint to a backend. "mock" and "mock:*"
/// endpoints go to the registered mock; http:// endpoints get a cached
/// HttpChatBackend; anything else must be registered explicitly.
class BackendPool {
 public:
  BackendPool() = default;
  explicit BackendPool(std::shared_ptr<ChatBackend> mock) : mock_(std::move(mock)) {}

  void set_mock(std::shared_ptr<ChatBackend> mock);
  void register_endpoint(std::string endpoint, std::shared_ptr<ChatBackend> backend);
  void set_http_options(HttpOptions options);

  std::shared_ptr<ChatBackend> resolve(const ModelSpec& spec);

 private:
  std::mutex mutex_;
  std::shared_ptr<ChatBackend> mock_;
  std::map<std::string, std::shared_ptr<ChatBackend>> endpoints_;
  HttpOptions http_options_;
};

/// Reply text split on whitespace.
std::vector<std::string> mock_tokenize(std::string_view text);

}  // namespace memroute
