#include <doctest.h>

#include <fstream>

#include "memroute/config.hpp"
#include "memroute/errors.hpp"
#include "test_util.hpp"

using namespace memroute;
using nlohmann::json;

namespace {

std::string config_error(const std::optional<std::filesystem::path>& path,
                         const std::map<std::string, std::string>& env) {
  try {
    load_config(path, env);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults are valid") {
    const auto c = load_config(std::nullopt, {});
    CHECK(c.cascade.models.size() == 2);
    CHECK(c.cascade.tau == 0.5);
    CHECK(c.cascade.floor == -3.0);
    CHECK(c.cascade.top_k == 5);
    CHECK(c.cascade.probe_memory_token_budget == 512);
    CHECK(c.cascade.full_memory_token_budget == 8192);
    CHECK(c.cascade.fusion.rrf_k == 60.0);
    CHECK(c.cascade.bm25.k1 == 1.2);
    CHECK(c.embedder == "deterministic-test");
    CHECK(c.listen_host_port() == std::pair<std::string, int>{"127.0.0.1", 8080});
  }

  TEST_CASE("json round-trip") {
    auto c = default_config();
    c.cascade.tau = 0.6;
    c.cascade.fusion.strategy = FusionStrategy::weighted;
    c.store_path = "/tmp/x";
    const auto back = config_from_json(config_to_json(c));
    CHECK(back.cascade.tau == 0.6);
    CHECK(back.cascade.fusion.strategy == FusionStrategy::weighted);
    CHECK(back.store_path == "/tmp/x");
    CHECK(back.cascade.models == c.cascade.models);
  }

  TEST_CASE("file values then environment overrides") {
    testutil::TempDir dir;
    std::ofstream(dir / "c.json") << json{{"tau", 0.7},
                                          {"fusion", {{"strategy", "weighted"}}},
                                          {"store", {{"path", "/data/mem"}}},
                                          {"listen", "0.0.0.0:9000"}}
                                         .dump();
    const auto file_only = load_config(dir / "c.json", {});
    CHECK(file_only.cascade.tau == 0.7);
    CHECK(file_only.cascade.fusion.strategy == FusionStrategy::weighted);
    CHECK(file_only.cascade.fusion.rrf_k == 60.0);
    CHECK(file_only.store_path == "/data/mem");

    const auto c = load_config(dir / "c.json", {{"MEMROUTE_TAU", "0.55"},
                                                {"MEMROUTE_FUSION__STRATEGY", "bm25_dominant"},
                                                {"MEMROUTE_MODELS__1__ENDPOINT", "http://gpu:8000/v1"},
                                                {"MEMROUTE_STORE__PATH", "123"},
                                                {"MEMROUTE_BACKEND__RETRIES", "3"},
                                                {"MEMROUTE_CONFIG", "ignored.json"},
                                                {"OTHER_VAR", "x"}});
    CHECK(c.cascade.tau == 0.55);
    CHECK(c.cascade.fusion.strategy == FusionStrategy::bm25_dominant);
    CHECK(c.cascade.models[1].endpoint == "http://gpu:8000/v1");
    CHECK(c.store_path == "123");
    CHECK(c.http.retries == 3);
    CHECK(c.listen == "0.0.0.0:9000");
  }

  TEST_CASE("environment can extend the model list") {
    const auto c = load_config(std::nullopt, {{"MEMROUTE_MODELS__2__NAME", "huge"},
                                              {"MEMROUTE_MODELS__2__PARAMS_BILLION", "671"}});
    REQUIRE(c.cascade.models.size() == 3);
    CHECK(c.cascade.models[2].name == "huge");
    CHECK(c.cascade.models[2].params_billion == 671);
  }

  TEST_CASE("errors name the offending field") {
    testutil::TempDir dir;
    auto with = [&](const json& j) {
      std::ofstream(dir / "bad.json") << j.dump();
      return config_error(dir / "bad.json", {});
    };
    CHECK(with({{"tua", 0.5}}).find("tua is not a known config field") != std::string::npos);
    CHECK(with({{"tau", "high"}}).find("tau must be a number") != std::string::npos);
    CHECK(with({{"tau", 1.5}}).find("tau") != std::string::npos);
    CHECK(with({{"fusion", {{"strategy", "bogus"}}}}).find("fusion.strategy") != std::string::npos);
    CHECK(with({{"bm25", {{"b", 2}}}}).find("bm25.b") != std::string::npos);
    CHECK(with({{"models", json::array()}}).find("models") != std::string::npos);
    CHECK(with({{"models", {{{"name", "a"}, {"params_billion", 70}}, {{"name", "b"}, {"params_billion", 8}}}}})
              .find("models[1].params_billion") != std::string::npos);
    CHECK(with({{"small_model", "medium"}}).find("small_model") != std::string::npos);
    CHECK(with({{"listen", "nowhere"}}).find("listen") != std::string::npos);
    CHECK(with({{"embedder", {{"endpoint", "grpc://x"}}}}).find("embedder.endpoint") != std::string::npos);
    CHECK(with({{"probe_memory_token_budget", 9000}}).find("probe_memory_token_budget") != std::string::npos);

    std::ofstream(dir / "broken.json") << "{ \"tau\": ";
    CHECK(config_error(dir / "broken.json", {}).find("not valid JSON") != std::string::npos);
    CHECK(config_error(dir / "missing.json", {}).find("cannot open") != std::string::npos);

    CHECK(config_error(std::nullopt, {{"MEMROUTE_TAUU", "0.4"}}).find("MEMROUTE_TAUU") != std::string::npos);
    CHECK(config_error(std::nullopt, {{"MEMROUTE_FUSION__NOPE", "1"}}).find("fusion.nope") != std::string::npos);
    CHECK(config_error(std::nullopt, {{"MEMROUTE_TOP_K", "many"}}).find("top_k") != std::string::npos);
    CHECK(config_error(std::nullopt, {{"MEMROUTE_MODELS__5__NAME", "x"}}).find("past the end") != std::string::npos);
  }
}
