#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "memroute/backends.hpp"
#include "memroute/eval/datasets.hpp"
#include "memroute/router.hpp"

namespace memroute {

/// Prefix of the environment variables that override config fields.
/// MEMROUTE_TAU=0.6, MEMROUTE_FUSION__STRATEGY=weighted,
/// MEMROUTE_MODELS__1__ENDPOINT=http://gpu:8000/v1 ("__" descends a level;
/// numbers index arrays). Values are read as JSON, falling back to a plain
/// string; fields that hold strings always take the raw text.
inline constexpr const char* kEnvPrefix = "MEMROUTE_";
/// Names the config file when --config is not given. Not itself a field.
inline constexpr const char* kConfigPathEnv = "MEMROUTE_CONFIG";

struct GatewayConfig {
  /// models, tau, ell_min, top_k, budgets, retrieval, fusion, bm25.
  CascadeConfig cascade;
  bool routing_enabled = true;
  /// Defaults to the first model.
  std::string small_model;

  std::string embedder = "deterministic-test";
  std::string embedding_model;
  std::size_t embedding_dim = 768;
  /// Empty: in-memory store, lost on exit.
  std::string store_path;
  /// Append-only JSONL of cost ledger entries; empty disables it.
  std::string ledger_path;
  std::string listen = "127.0.0.1:8080";
  HttpOptions http;
  /// Scripted responses for "mock" endpoints.
  std::string mock_script;

  int parallelism = 1;
  eval::PairingMode pairing = eval::PairingMode::consecutive;
  bool bleu_brevity_penalty = true;
  std::string log_level = "info";

  /// Throws ConfigError naming the field.
  void validate() const;
  std::pair<std::string, int> listen_host_port() const;
};

/// A two-model mock cascade: small (8B) and large (235B).
GatewayConfig default_config();

GatewayConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const GatewayConfig& c);

/// Applies MEMROUTE_* entries of env to the document. Unknown paths are
/// ConfigErrors naming the variable.
void apply_env_overrides(nlohmann::json& doc, const std::map<std::string, std::string>& env);

std::map<std::string, std::string> process_environment();

/// Defaults, then the file (if any), then env overrides; validated.
GatewayConfig load_config(const std::optional<std::filesystem::path>& path,
                          const std::map<std::string, std::string>& env = process_environment());

}  // namespace memroute
