#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "memroute/config.hpp"
#include "memroute/errors.hpp"
#include "memroute/eval/datasets.hpp"
#include "memroute/eval/report.hpp"
#include "memroute/eval/runner.hpp"
#include "memroute/eval/sampling.hpp"
#include "memroute/gateway.hpp"

using namespace memroute;
using json = nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDataset = 3, kBackend = 4 };

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

struct Common {
  std::string config_path;
  std::string mock_script;
  std::string store_path;
  std::string log_level;
};

GatewayConfig load(const Common& c) {
  std::optional<std::filesystem::path> path;
  if (!c.config_path.empty()) {
    path = c.config_path;
  } else if (const char* env = std::getenv(kConfigPathEnv); env && *env) {
    path = env;
  }
  GatewayConfig cfg = load_config(path);
  if (!c.mock_script.empty()) cfg.mock_script = c.mock_script;
  if (!c.store_path.empty()) cfg.store_path = c.store_path;
  if (!c.log_level.empty()) cfg.log_level = c.log_level;
  cfg.validate();
  spdlog::set_level(spdlog::level::from_str(cfg.log_level));
  return cfg;
}

std::shared_ptr<ChatBackend> make_mock(const GatewayConfig& cfg) {
  if (cfg.mock_script.empty()) return std::make_shared<MockBackend>(std::vector<ScriptedBehavior>{});
  return std::shared_ptr<ChatBackend>(MockBackend::load_script(cfg.mock_script));
}

// ---- serve ----

int cmd_serve(const Common& common, const std::string& listen) {
  GatewayConfig cfg = load(common);
  if (!listen.empty()) cfg.listen = listen;
  const auto [host, port] = cfg.listen_host_port();
  GatewayService service(cfg);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  if (!run_server(service, host, port, g_stop)) {
    spdlog::error("cannot bind {}", cfg.listen);
    return kConfig;
  }
  return kOk;
}

// ---- ingest ----

struct IngestOptions {
  std::string user;
  std::string file;
  std::string format = "auto";
  std::string sample_id;
  std::string pairing;
};

std::vector<eval::TurnPair> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("ingest: cannot open " + path);
  std::vector<json> rows;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    const json j = json::parse(text);
    if (!j.is_array()) throw DatasetError("ingest: " + path + " must hold a list of {question, answer} objects");
    rows.assign(j.begin(), j.end());
  } catch (const json::parse_error&) {
    std::istringstream lines(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        rows.push_back(json::parse(line));
      } catch (const json::exception& e) {
        throw DatasetError("ingest: " + path + " line " + std::to_string(n) + " is not valid JSON: " + e.what());
      }
    }
  }
  std::vector<eval::TurnPair> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = path + "[" + std::to_string(i) + "]";
    if (!r.is_object()) throw DatasetError(where + ": expected an object");
    for (const char* key : {"question", "answer"})
      if (!r.contains(key) || !r[key].is_string())
        throw DatasetError(where + ": missing string field '" + key + "'");
    out.push_back({r.value("session_id", std::string{}), r.value("session_timestamp", today_timestamp()),
                   r["question"].get<std::string>(), r["answer"].get<std::string>()});
  }
  return out;
}

bool looks_like_locomo(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("ingest: cannot open " + path);
  try {
    const json j = json::parse(in);
    const json& first = j.is_array() && !j.empty() ? j[0] : j;
    return first.is_object() && first.contains("conversation");
  } catch (const json::exception&) {
    return false;
  }
}

int cmd_ingest(const Common& common, const IngestOptions& o) {
  GatewayConfig cfg = load(common);
  if (cfg.store_path.empty()) throw ConfigError("store.path must be set for ingest (config, MEMROUTE_STORE__PATH or --store)");
  const auto pairing = o.pairing.empty() ? cfg.pairing : eval::parse_pairing_mode(o.pairing);

  std::string format = o.format;
  if (format == "auto") format = looks_like_locomo(o.file) ? "locomo" : "pairs";
  std::vector<eval::TurnPair> pairs;
  std::string user = o.user;
  if (format == "locomo") {
    const auto conv = eval::load_locomo(o.file, o.sample_id);
    pairs = eval::make_turn_pairs(conv.sessions, pairing);
    if (user.empty()) user = conv.sample_id;
  } else if (format == "pairs") {
    pairs = read_pairs(o.file);
  } else {
    throw ConfigError("--format must be auto, locomo or pairs");
  }
  if (user.empty()) throw ConfigError("--user is required for this file");

  MemoryStore store(StoreConfig{cfg.embedding_dim, cfg.store_path});
  const auto embedder = make_embedder(cfg.embedder, cfg.embedding_dim, cfg.embedding_model, cfg.http);
  for (const auto& p : pairs)
    store.insert(user, p.timestamp, p.question, p.answer, "ingest",
                 embedder->embed(render_turn_pair(p.timestamp, p.question, p.answer)));
  std::cout << "ingested " << pairs.size() << " turn-pairs into '" << user << "' (" << store.count(user)
            << " total)\n";
  return kOk;
}

// ---- search ----

int cmd_search(const Common& common, const std::string& user, const std::string& query, int k,
               const std::string& strategy, bool as_json) {
  GatewayConfig cfg = load(common);
  GatewayService service(cfg, make_mock(cfg));
  std::map<std::string, std::string> params{{"user_id", user}, {"query", query}};
  if (k > 0) params["k"] = std::to_string(k);
  if (!strategy.empty()) params["strategy"] = strategy;
  const HttpReply r = service.handle_memory_search(params);
  if (r.status != 200) throw ConfigError(r.body["error"]["message"].get<std::string>());
  if (as_json) {
    std::cout << r.body.dump(2) << "\n";
    return kOk;
  }
  for (const auto& h : r.body["hits"]) {
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", h["fused_score"].get<double>());
    std::cout << h["rank"] << "\t#" << h["record_id"] << "\t" << score << "\t"
              << h["rendered_text"].get<std::string>() << "\n";
  }
  if (r.body["hits"].empty()) std::cout << "no memories for '" << user << "'\n";
  return kOk;
}

// ---- eval ----

struct EvalOptions {
  std::string data;
  std::vector<std::string> conditions;
  std::optional<double> tau;
  int k = 0;
  std::string fusion;
  std::string retrieval;
  std::uint64_t seed = 42;
  std::size_t sample = 0;
  std::string out;
  std::string sample_id;
  std::string pairing;
  int parallelism = 0;
  bool compare = false;
  bool no_brevity_penalty = false;
};

int cmd_eval(const Common& common, const std::string& dataset_kind, const EvalOptions& o) {
  GatewayConfig cfg = load(common);
  if (o.tau) cfg.cascade.tau = *o.tau;
  if (o.k > 0) cfg.cascade.top_k = static_cast<std::size_t>(o.k);
  if (!o.fusion.empty()) cfg.cascade.fusion.strategy = parse_fusion_strategy(o.fusion);
  if (!o.retrieval.empty()) cfg.cascade.retrieval = parse_retrieval_mode(o.retrieval);
  if (o.parallelism > 0) cfg.parallelism = o.parallelism;
  if (!o.pairing.empty()) cfg.pairing = eval::parse_pairing_mode(o.pairing);
  if (o.no_brevity_penalty) cfg.bleu_brevity_penalty = false;
  cfg.validate();

  eval::EvalDataset dataset;
  if (dataset_kind == "locomo") {
    const auto conv = eval::load_locomo(o.data, o.sample_id);
    spdlog::info("{}: {} sessions, {} turns ({} stored pairs), {} questions, {} adversarial skipped", conv.sample_id,
                 conv.sessions.size(), conv.turn_count, conv.pair_count(cfg.pairing), conv.qa.size(),
                 conv.skipped_questions);
    dataset = eval::make_locomo_dataset(conv, cfg.pairing);
  } else {
    dataset = eval::make_longmemeval_dataset(eval::load_longmemeval(o.data), cfg.pairing);
  }
  if (o.sample > 0) dataset = dataset.subset(eval::stratified_sample(dataset.items, o.sample, o.seed));

  eval::EvalSettings settings;
  settings.cascade = cfg.cascade;
  settings.small_model = cfg.small_model.empty() ? cfg.cascade.models.front().name : cfg.small_model;
  settings.parallelism = cfg.parallelism;
  settings.bleu_brevity_penalty = cfg.bleu_brevity_penalty;
  settings.recall_k = cfg.cascade.top_k;

  BackendPool pool(make_mock(cfg));
  pool.set_http_options(cfg.http);
  const auto embedder = make_embedder(cfg.embedder, cfg.embedding_dim, cfg.embedding_model, cfg.http);

  std::vector<eval::EvalReport> reports;
  std::optional<eval::RetrievalComparison> comparison;
  if (o.compare) {
    comparison = eval::compare_retrieval(dataset, settings, pool, *embedder);
    reports = {comparison->baseline, comparison->candidate};
  } else {
    const std::string small = cfg.cascade.models.front().name;
    const std::string large = cfg.cascade.models.back().name;
    std::vector<eval::EvalCondition> conds;
    std::vector<std::string> names = o.conditions;
    if (names.empty()) names = {"warm-compound"};
    for (const auto& n : names) {
      if (n == "all") {
        for (auto& c : eval::standard_conditions(small, large)) conds.push_back(c);
      } else if (n == "factorial") {
        for (auto& c : eval::standard_conditions(small, large))
          if (!c.full_context && c.name != "cold-large") conds.push_back(c);
      } else {
        conds.push_back(eval::standard_condition(n, small, large));
      }
    }
    for (auto& c : conds) {
      c.retrieval = cfg.cascade.retrieval;
      reports.push_back(eval::run_condition(c, dataset, settings, pool, *embedder));
    }
  }

  if (!o.out.empty()) {
    std::error_code ec;
    if (const auto parent = std::filesystem::path(o.out).parent_path(); !parent.empty())
      std::filesystem::create_directories(parent, ec);
    std::ofstream out(o.out);
    if (!out) throw ConfigError("--out: cannot write " + o.out);
    for (const auto& r : reports) eval::write_report(out, r);
  }
  std::cout << dataset.name << ", " << dataset.items.size() << " questions, tau " << cfg.cascade.tau << "\n\n";
  std::cout << eval::render_summary_table(reports) << "\n" << eval::render_category_table(reports);
  if (comparison) std::cout << "\n" << eval::render_comparison_table(*comparison);

  std::size_t failures = 0;
  for (const auto& r : reports) failures += r.failures;
  if (failures) {
    spdlog::error("{} questions failed; report marked incomplete", failures);
    return kBackend;
  }
  return kOk;
}

// ---- report ----

int cmd_report(const std::vector<std::string>& files, bool as_json) {
  std::vector<eval::EvalReport> reports;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DatasetError("report: cannot open " + f);
    for (auto& r : eval::read_reports(in)) reports.push_back(std::move(r));
  }
  if (as_json) {
    json out = json::array();
    for (const auto& r : reports) {
      json per = json::object();
      for (const auto& [c, s] : r.per_category) per[c] = eval::stats_to_json(s);
      out.push_back({{"dataset", r.dataset},
                     {"condition", eval::condition_to_json(r.condition)},
                     {"overall", eval::stats_to_json(r.overall)},
                     {"per_category", per},
                     {"input_tokens", r.input_tokens},
                     {"output_tokens", r.output_tokens},
                     {"total_eff_cost", r.total_eff_cost},
                     {"failures", r.failures},
                     {"complete", r.complete}});
    }
    std::cout << out.dump(2) << "\n";
    return kOk;
  }
  std::cout << eval::render_summary_table(reports) << "\n" << eval::render_category_table(reports);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memroute: memory-augmented confidence routing gateway"};
  app.require_subcommand(1);
  Common common;
  app.add_option("-c,--config", common.config_path, "Config file (JSON); default $MEMROUTE_CONFIG");
  app.add_option("--mock-script", common.mock_script, "Scripted responses for mock model endpoints");
  app.add_option("--store", common.store_path, "Memory store directory");
  app.add_option("--log-level", common.log_level, "trace, debug, info, warn, error, critical or off");

  std::string listen;
  auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  serve->add_option("--listen", listen, "host:port");

  IngestOptions ingest_opts;
  auto* ingest = app.add_subcommand("ingest", "Bulk-load a conversation file into a user partition");
  ingest->add_option("file", ingest_opts.file, "LoCoMo JSON or a list of {question, answer, session_timestamp}")
      ->required();
  ingest->add_option("-u,--user", ingest_opts.user, "Partition (defaults to the LoCoMo sample id)");
  ingest->add_option("--format", ingest_opts.format, "auto, locomo or pairs");
  ingest->add_option("--sample-id", ingest_opts.sample_id, "Conversation to take from a LoCoMo file");
  ingest->add_option("--pairing", ingest_opts.pairing, "consecutive or per_turn");

  std::string s_user, s_query, s_strategy;
  int s_k = 0;
  bool s_json = false;
  auto* search = app.add_subcommand("search", "Rank a user's memories against a query");
  search->add_option("-u,--user", s_user)->required();
  search->add_option("-q,--query", s_query)->required();
  search->add_option("-k,--k", s_k, "Results to return");
  search->add_option("--strategy", s_strategy, "dense, sparse, hybrid, reciprocal_rank, weighted or bm25_dominant");
  search->add_flag("--json", s_json);

  EvalOptions eval_opts;
  double tau = 0.0;
  auto* eval_cmd = app.add_subcommand("eval", "Run benchmark conditions");
  eval_cmd->require_subcommand(1);
  std::string eval_kind;
  for (const char* kind : {"locomo", "longmemeval"}) {
    auto* sub = eval_cmd->add_subcommand(kind, std::string("Evaluate on ") + kind);
    sub->add_option("-d,--data", eval_opts.data, "Dataset file")->required();
    sub->add_option("--condition", eval_opts.conditions,
                    "cold-small, cold-compound, warm-memory-only, warm-compound, cold-large, full-context-large, "
                    "factorial or all (repeatable)");
    sub->add_option("--tau", tau, "Confidence threshold");
    sub->add_option("--k", eval_opts.k, "Memories retrieved per query");
    sub->add_option("--fusion", eval_opts.fusion, "reciprocal_rank, weighted or bm25_dominant");
    sub->add_option("--retrieval", eval_opts.retrieval, "dense, sparse or hybrid");
    sub->add_option("--seed", eval_opts.seed, "Sampling seed");
    sub->add_option("--sample", eval_opts.sample, "Stratified sample size (0 = all)");
    sub->add_option("-o,--out", eval_opts.out, "Write the JSONL report here");
    sub->add_option("--sample-id", eval_opts.sample_id, "LoCoMo conversation (default: first)");
    sub->add_option("--pairing", eval_opts.pairing, "consecutive or per_turn");
    sub->add_option("-j,--parallelism", eval_opts.parallelism, "Questions in flight");
    sub->add_flag("--compare", eval_opts.compare, "Dense-only vs hybrid, per-type deltas");
    sub->add_flag("--no-brevity-penalty", eval_opts.no_brevity_penalty, "BLEU-1 without brevity penalty");
    sub->callback([&eval_kind, kind] { eval_kind = kind; });
  }

  std::vector<std::string> report_files;
  bool r_json = false;
  auto* report = app.add_subcommand("report", "Re-render saved eval runs");
  report->add_option("files", report_files, "JSONL reports")->required();
  report->add_flag("--json", r_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*serve) return cmd_serve(common, listen);
    if (*ingest) return cmd_ingest(common, ingest_opts);
    if (*search) return cmd_search(common, s_user, s_query, s_k, s_strategy, s_json);
    if (*eval_cmd) {
      for (auto* sub : eval_cmd->get_subcommands())
        if (sub->count_all() && sub->get_option("--tau")->count()) eval_opts.tau = tau;
      return cmd_eval(common, eval_kind, eval_opts);
    }
    if (*report) return cmd_report(report_files, r_json);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kDataset;
  } catch (const BackendError& e) {
    std::cerr << "backend unreachable (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kBackend;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
