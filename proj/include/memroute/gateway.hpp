#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "memroute/backends.hpp"
#include "memroute/config.hpp"
#include "memroute/cost.hpp"
#include "memroute/embedder.hpp"
#include "memroute/memory_store.hpp"
#include "memroute/router.hpp"

namespace httplib {
class Server;
}

namespace memroute {

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

/// The routing layer behind the HTTP endpoints. Handlers take and return
/// JSON so they can be driven without a socket.
///
///   POST /v1/chat/completions   chat-completions body plus optional "user" and
///                               "memroute": {memory, routing, tau, k, retrieval,
///                               fusion, session_timestamp, store}
///   POST /v1/memories           {user_id, question, answer, session_timestamp?}
///                               or {user_id, pairs: [...]}
///   GET  /v1/memories/search    ?user_id=&query=&k=&strategy=
///   GET  /v1/metrics
class GatewayService {
 public:
  /// A mock passed here takes precedence over config.mock_script.
  explicit GatewayService(GatewayConfig config, std::shared_ptr<ChatBackend> mock = nullptr);
  ~GatewayService();

  HttpReply handle_chat(const nlohmann::json& body);
  HttpReply handle_memory_insert(const nlohmann::json& body);
  HttpReply handle_memory_search(const std::map<std::string, std::string>& params) const;
  HttpReply handle_metrics() const;

  void mount(httplib::Server& server);
  /// Writes pending ledger entries to config.ledger_path.
  void flush();

  const GatewayConfig& config() const noexcept { return config_; }
  MemoryStore& store() noexcept { return *store_; }
  CostLedger& ledger() noexcept { return ledger_; }
  BackendPool& backends() noexcept { return backends_; }
  Router& router() noexcept { return *router_; }
  const std::string& small_model() const noexcept { return small_model_; }

 private:
  GatewayConfig config_;
  std::string small_model_;
  std::unique_ptr<MemoryStore> store_;
  std::unique_ptr<Embedder> embedder_;
  BackendPool backends_;
  CostLedger ledger_;
  std::unique_ptr<Router> router_;

  std::string id_prefix_;
  std::atomic<std::uint64_t> next_request_{0};
  std::atomic<std::uint64_t> chat_ok_{0};
  std::atomic<std::uint64_t> chat_failed_{0};
  std::atomic<std::uint64_t> served_by_small_{0};
  std::atomic<std::uint64_t> escalated_{0};
  std::atomic<std::uint64_t> forced_accepts_{0};
  std::atomic<std::uint64_t> memories_inserted_{0};
  std::mutex ledger_file_mutex_;
  std::size_t ledger_written_ = 0;
};

/// Serves until stop is set (polled), then flushes. Returns false if the
/// address could not be bound.
bool run_server(GatewayService& service, const std::string& host, int port, const std::atomic<bool>& stop);

}  // namespace memroute
