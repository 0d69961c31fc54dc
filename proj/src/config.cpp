#include "memroute/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "memroute/errors.hpp"

extern char** environ;

namespace memroute {

using json = nlohmann::json;

namespace {

/// Reads the members of one JSON object, rejecting unknown keys.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(label() + " must be an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key) + " must be a number");
      out = v->get<double>();
    }
  }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0)
        throw ConfigError(at(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key) + " must be an integer");
      out = v->get<int>();
    }
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  template <class Parse>
  void get_enum(const std::string& key, Parse parse) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    try {
      parse(s);
    } catch (const Error& e) {
      std::string msg = e.what();
      for (const std::string& p : {at(key) + ": ", key + ": "})
        if (msg.rfind(p, 0) == 0) msg = msg.substr(p.size());
      throw ConfigError(at(key) + ": " + msg);
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()) + " is not a known config field");
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

ModelSpec model_from_json(const json& j, const std::string& path) {
  Fields f(j, path);
  ModelSpec m;
  f.get("name", m.name);
  if (!f.find("name")) throw ConfigError(path + ".name is required");
  f.get("params_billion", m.params_billion);
  f.get("endpoint", m.endpoint);
  f.get("context_budget", m.context_budget);
  f.find("probe_role");
  f.finish();
  return m;
}

json model_to_json(const ModelSpec& m) {
  return {{"name", m.name},
          {"params_billion", m.params_billion},
          {"endpoint", m.endpoint},
          {"context_budget", m.context_budget}};
}

const char* pairing_name(eval::PairingMode p) {
  return p == eval::PairingMode::consecutive ? "consecutive" : "per_turn";
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

void GatewayConfig::validate() const {
  cascade.validate();
  if (!small_model.empty()) {
    bool found = false;
    for (const auto& m : cascade.models) found = found || m.name == small_model;
    if (!found) throw ConfigError("small_model '" + small_model + "' is not one of models[].name");
  }
  if (embedding_dim == 0) throw ConfigError("embedder.dim must be positive");
  if (embedder.empty()) throw ConfigError("embedder.endpoint must not be empty");
  if (embedder != "deterministic-test" && embedder != "deterministic" && embedder.rfind("http://", 0) != 0)
    throw ConfigError("embedder.endpoint must be \"deterministic-test\" or an http:// URL, got '" + embedder + "'");
  for (std::size_t i = 0; i < cascade.models.size(); ++i) {
    const auto& e = cascade.models[i].endpoint;
    if (e != "mock" && e.rfind("mock:", 0) != 0 && e.rfind("http://", 0) != 0)
      throw ConfigError("models[" + std::to_string(i) + "].endpoint must be \"mock\", \"mock:<label>\" or an http:// URL");
  }
  if (http.timeout_seconds <= 0) throw ConfigError("backend.timeout_seconds must be positive");
  if (http.retries < 0) throw ConfigError("backend.retries must not be negative");
  if (parallelism < 1) throw ConfigError("eval.parallelism must be at least 1");
  static const std::set<std::string> kLevels = {"trace", "debug", "info", "warn", "error", "critical", "off"};
  if (!kLevels.count(log_level)) throw ConfigError("log_level must be one of trace, debug, info, warn, error, critical, off");
  listen_host_port();
}

std::pair<std::string, int> GatewayConfig::listen_host_port() const {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0 || !all_digits(listen.substr(colon + 1)))
    throw ConfigError("listen must be host:port, got '" + listen + "'");
  const int port = std::stoi(listen.substr(colon + 1));
  if (port < 0 || port > 65535) throw ConfigError("listen port out of range in '" + listen + "'");
  return {listen.substr(0, colon), port};
}

GatewayConfig default_config() {
  GatewayConfig c;
  c.cascade.models = {{"small", 8.0, "mock", 32768, 1}, {"large", 235.0, "mock", 131072, 2}};
  return c;
}

json config_to_json(const GatewayConfig& c) {
  json models = json::array();
  for (const auto& m : c.cascade.models) models.push_back(model_to_json(m));
  const auto& cc = c.cascade;
  return {{"models", models},
          {"small_model", c.small_model},
          {"tau", cc.tau},
          {"ell_min", cc.floor},
          {"top_k", cc.top_k},
          {"memory_enabled", cc.memory_enabled},
          {"routing_enabled", c.routing_enabled},
          {"probe_memory_token_budget", cc.probe_memory_token_budget},
          {"full_memory_token_budget", cc.full_memory_token_budget},
          {"max_output_tokens", cc.max_output_tokens},
          {"preamble", cc.preamble},
          {"retrieval", {{"mode", to_string(cc.retrieval)}, {"overfetch", cc.overfetch}}},
          {"fusion",
           {{"strategy", to_string(cc.fusion.strategy)},
            {"rrf_k", cc.fusion.rrf_k},
            {"dense_weight", cc.fusion.dense_weight},
            {"sparse_weight", cc.fusion.sparse_weight},
            {"bm25_dominance_threshold", cc.fusion.bm25_dominance_threshold}}},
          {"bm25", {{"k1", cc.bm25.k1}, {"b", cc.bm25.b}, {"ngram_max", cc.bm25.ngram_max}}},
          {"embedder", {{"endpoint", c.embedder}, {"model", c.embedding_model}, {"dim", c.embedding_dim}}},
          {"store", {{"path", c.store_path}}},
          {"ledger", {{"path", c.ledger_path}}},
          {"listen", c.listen},
          {"backend",
           {{"timeout_seconds", c.http.timeout_seconds}, {"retries", c.http.retries}, {"api_key", c.http.api_key}}},
          {"mock_script", c.mock_script},
          {"eval",
           {{"parallelism", c.parallelism},
            {"pairing", pairing_name(c.pairing)},
            {"bleu_brevity_penalty", c.bleu_brevity_penalty}}},
          {"log_level", c.log_level}};
}

GatewayConfig config_from_json(const json& j) {
  GatewayConfig c = default_config();
  auto& cc = c.cascade;
  Fields f(j, "");
  if (const json* models = f.find("models")) {
    if (!models->is_array()) throw ConfigError("models must be a list");
    cc.models.clear();
    for (std::size_t i = 0; i < models->size(); ++i) {
      cc.models.push_back(model_from_json((*models)[i], "models[" + std::to_string(i) + "]"));
      cc.models.back().probe_role = static_cast<int>(i + 1);
    }
  }
  f.get("small_model", c.small_model);
  f.get("tau", cc.tau);
  f.get("ell_min", cc.floor);
  f.get("top_k", cc.top_k);
  f.get("memory_enabled", cc.memory_enabled);
  f.get("routing_enabled", c.routing_enabled);
  f.get("probe_memory_token_budget", cc.probe_memory_token_budget);
  f.get("full_memory_token_budget", cc.full_memory_token_budget);
  f.get("max_output_tokens", cc.max_output_tokens);
  f.get("preamble", cc.preamble);
  if (const json* r = f.find("retrieval")) {
    Fields g(*r, "retrieval");
    g.get_enum("mode", [&](const std::string& s) { cc.retrieval = parse_retrieval_mode(s); });
    g.get("overfetch", cc.overfetch);
    g.finish();
  }
  if (const json* r = f.find("fusion")) {
    Fields g(*r, "fusion");
    g.get_enum("strategy", [&](const std::string& s) { cc.fusion.strategy = parse_fusion_strategy(s); });
    g.get("rrf_k", cc.fusion.rrf_k);
    g.get("dense_weight", cc.fusion.dense_weight);
    g.get("sparse_weight", cc.fusion.sparse_weight);
    g.get("bm25_dominance_threshold", cc.fusion.bm25_dominance_threshold);
    g.finish();
  }
  if (const json* r = f.find("bm25")) {
    Fields g(*r, "bm25");
    g.get("k1", cc.bm25.k1);
    g.get("b", cc.bm25.b);
    g.get("ngram_max", cc.bm25.ngram_max);
    g.finish();
  }
  if (const json* r = f.find("embedder")) {
    Fields g(*r, "embedder");
    g.get("endpoint", c.embedder);
    g.get("model", c.embedding_model);
    g.get("dim", c.embedding_dim);
    g.finish();
  }
  if (const json* r = f.find("store")) {
    Fields g(*r, "store");
    g.get("path", c.store_path);
    g.finish();
  }
  if (const json* r = f.find("ledger")) {
    Fields g(*r, "ledger");
    g.get("path", c.ledger_path);
    g.finish();
  }
  f.get("listen", c.listen);
  if (const json* r = f.find("backend")) {
    Fields g(*r, "backend");
    g.get("timeout_seconds", c.http.timeout_seconds);
    g.get("retries", c.http.retries);
    g.get("api_key", c.http.api_key);
    g.finish();
  }
  f.get("mock_script", c.mock_script);
  if (const json* r = f.find("eval")) {
    Fields g(*r, "eval");
    g.get("parallelism", c.parallelism);
    g.get_enum("pairing", [&](const std::string& s) { c.pairing = eval::parse_pairing_mode(s); });
    g.get("bleu_brevity_penalty", c.bleu_brevity_penalty);
    g.finish();
  }
  f.get("log_level", c.log_level);
  f.finish();
  try {
    cc.fusion.validate();
    cc.bm25.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void apply_env_overrides(json& doc, const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0 || name == kConfigPathEnv) continue;
    const std::string rest = name.substr(prefix.size());
    std::vector<std::string> path;
    for (std::size_t start = 0;;) {
      const auto sep = rest.find("__", start);
      path.push_back(lower(rest.substr(start, sep == std::string::npos ? std::string::npos : sep - start)));
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
    json* node = &doc;
    std::string where;
    for (const auto& seg : path) {
      if (node->is_array() && all_digits(seg)) {
        const std::size_t i = std::stoul(seg);
        if (i > node->size()) throw ConfigError(name + ": index " + seg + " is past the end of " + where);
        if (i == node->size()) node->push_back(json::object());
        node = &(*node)[i];
        where += "[" + seg + "]";
      } else if (node->is_object()) {
        where += (where.empty() ? "" : ".") + seg;
        if (!node->contains(seg) && !(where.find('[') != std::string::npos))
          throw ConfigError(name + ": no config field '" + where + "'");
        node = &(*node)[seg];
      } else {
        throw ConfigError(name + ": '" + where + "' has no field '" + seg + "'");
      }
    }
    if (node->is_string()) {
      *node = value;
      continue;
    }
    try {
      *node = json::parse(value);
    } catch (const json::exception&) {
      *node = value;
    }
  }
}

std::map<std::string, std::string> process_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq != std::string::npos && kv.rfind(kEnvPrefix, 0) == 0) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return env;
}

GatewayConfig load_config(const std::optional<std::filesystem::path>& path,
                          const std::map<std::string, std::string>& env) {
  json doc = config_to_json(default_config());
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file " + path->string());
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path->string() + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config file " + path->string() + " must hold a JSON object");
    config_from_json(file);
    for (auto it = file.begin(); it != file.end(); ++it) {
      if (it->is_object() && doc.contains(it.key()) && doc[it.key()].is_object())
        doc[it.key()].update(*it);
      else
        doc[it.key()] = *it;
    }
  }
  apply_env_overrides(doc, env);
  GatewayConfig c = config_from_json(doc);
  c.validate();
  return c;
}

}  // namespace memroute
