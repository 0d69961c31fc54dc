#include <doctest.h>

#include <sstream>

#include "memroute/errors.hpp"
#include "memroute/eval/metrics.hpp"
#include "memroute/eval/report.hpp"
#include "memroute/eval/runner.hpp"
#include "memroute/eval/sampling.hpp"
#include "test_util.hpp"

using namespace memroute;
using namespace memroute::eval;

namespace {

const char* kCities[] = {"Lisbon", "Kyoto", "Banff", "Oaxaca", "Bergen", "Hobart", "Tromso", "Valparaiso"};

/// One partition "p"; question i asks where trip i went.
EvalDataset trips_dataset() {
  EvalDataset d;
  d.name = "trips";
  for (int i = 0; i < 8; ++i) {
    QAItem q;
    q.question_id = "q" + std::to_string(i);
    q.question = "Where did trip number " + std::to_string(i) + " go?";
    q.answer = kCities[i];
    q.category = i % 2 ? "single-hop" : "temporal";
    q.evidence_ids = {"session_" + std::to_string(i)};
    q.has_evidence = true;
    d.items.push_back(q);
    d.partition_of[q.question_id] = "p";
    d.memories["p"].push_back({"session_" + std::to_string(i), std::to_string(i + 1) + " May 2023",
                               "Trip number " + std::to_string(i) + " plans?",
                               std::string("We went to ") + kCities[i] + "."});
    d.transcripts["p"].push_back("[1 May 2023] A: trip " + std::to_string(i) + " went to " + kCities[i]);
  }
  return d;
}

std::vector<ScriptedBehavior> trips_script() {
  std::vector<ScriptedBehavior> rules;
  for (int i = 0; i < 8; ++i) {
    auto r = testutil::rule(kCities[i], -0.1);
    r.query_contains = "number " + std::to_string(i) + " ";
    r.context_contains = kCities[i];
    r.model = "small";
    rules.push_back(r);
  }
  auto wrong = testutil::rule("Paris", -0.2);
  wrong.model = "small";
  rules.push_back(wrong);
  auto large = testutil::rule("Madrid", -0.1);
  large.model = "large";
  rules.push_back(large);
  return rules;
}

EvalSettings settings() {
  EvalSettings s;
  ModelSpec small{"small", 8, "mock", 32768, 1};
  ModelSpec large{"large", 235, "mock", 131072, 2};
  s.cascade.models = {small, large};
  s.small_model = "small";
  return s;
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("condition validation") {
    EvalCondition c{"x", false, true, {"small"}, RetrievalMode::hybrid, std::nullopt, false};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.routing_enabled = false;
    CHECK_NOTHROW(c.validate());
    c.cascade.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(standard_conditions("s", "l").size() == 6);
    CHECK(standard_condition("warm-compound", "s", "l").memory_enabled);
    CHECK_THROWS_AS(standard_condition("lukewarm", "s", "l"), ConfigError);
  }

  TEST_CASE("factorial pattern over the scripted pair") {
    const auto d = trips_dataset();
    BackendPool pool(std::make_shared<MockBackend>(trips_script()));
    DeterministicEmbedder emb(64);
    std::map<std::string, EvalReport> r;
    for (const auto& name : {"cold-small", "cold-compound", "warm-memory-only", "warm-compound"})
      r[name] = run_condition(standard_condition(name, "small", "large"), d, settings(), pool, emb);
    CHECK(r["cold-small"].overall.f1 == 0.0);
    CHECK(r["cold-compound"].overall.f1 == 0.0);
    CHECK(r["warm-memory-only"].overall.f1 == 1.0);
    CHECK(r["warm-compound"].overall.f1 == 1.0);
    for (auto& [name, rep] : r) {
      CHECK(*rep.overall.pct_on_small == 100.0);
      CHECK(rep.complete);
      CHECK(rep.questions.size() == 8);
    }
    REQUIRE(r["warm-compound"].overall.recall.has_value());
    CHECK(*r["warm-compound"].overall.recall == 1.0);
    CHECK(!r["cold-small"].overall.recall.has_value());
  }

  TEST_CASE("aggregation equals the mean of per-question scores") {
    const auto d = trips_dataset();
    auto rules = trips_script();
    rules.erase(rules.begin() + 3, rules.begin() + 8);
    BackendPool pool(std::make_shared<MockBackend>(rules));
    DeterministicEmbedder emb(64);
    const auto rep = run_condition(standard_condition("warm-compound", "small", "large"), d, settings(), pool, emb);
    double f1 = 0, bleu = 0, cost = 0;
    for (const auto& q : rep.questions) {
      f1 += q.f1;
      bleu += q.bleu1;
      cost += q.decision.eff_cost;
      CHECK(q.f1 == token_f1(q.prediction, q.gold));
    }
    CHECK(rep.overall.f1 == doctest::Approx(f1 / 8));
    CHECK(rep.overall.f1 == doctest::Approx(3.0 / 8));
    CHECK(rep.overall.bleu1 == doctest::Approx(bleu / 8));
    CHECK(rep.total_eff_cost == doctest::Approx(cost));
    CHECK(rep.per_category.at("single-hop").n == 4);
    CHECK(rep.per_category.at("temporal").n == 4);
  }

  TEST_CASE("cold-small predictions equal direct backend calls") {
    const auto d = trips_dataset();
    auto mock = std::make_shared<MockBackend>(trips_script());
    BackendPool pool(mock);
    DeterministicEmbedder emb(64);
    const auto s = settings();
    const auto rep = run_condition(standard_condition("cold-small", "small", "large"), d, s, pool, emb);
    for (const auto& q : rep.questions) {
      const auto prompt = build_augmented_prompt(q.question, {}, 0, s.cascade.preamble);
      const auto direct = mock->complete(s.cascade.models[0], prompt.to_request("small", false, s.cascade.max_output_tokens));
      CHECK(q.prediction == direct.text);
      REQUIRE(q.decision.invocations.size() == 1);
      CHECK(q.decision.invocations[0].prompt_tokens == direct.prompt_token_count);
    }
  }

  TEST_CASE("full context inlines the transcript into one large call") {
    const auto d = trips_dataset();
    auto rules = trips_script();
    auto full = testutil::rule("from transcript", -0.1);
    full.model = "large";
    full.context_contains = "trip 5 went to Hobart";
    rules.insert(rules.begin(), full);
    BackendPool pool(std::make_shared<MockBackend>(rules));
    DeterministicEmbedder emb(64);
    const auto rep = run_condition(standard_condition("full-context-large", "small", "large"), d, settings(), pool, emb);
    for (const auto& q : rep.questions) {
      CHECK(q.prediction == "from transcript");
      CHECK(q.decision.chosen_model == "large");
      CHECK(q.decision.injected_memory_ids.empty());
    }
    CHECK(*rep.overall.pct_on_small == 0.0);
  }

  TEST_CASE("reports are reproducible and round-trip") {
    const auto d = trips_dataset();
    DeterministicEmbedder emb(64);
    auto run = [&](int parallelism) {
      BackendPool pool(std::make_shared<MockBackend>(trips_script()));
      auto s = settings();
      s.parallelism = parallelism;
      std::ostringstream out;
      for (const auto& c : standard_conditions("small", "large"))
        write_report(out, run_condition(c, d, s, pool, emb));
      return out.str();
    };
    const auto a = run(1);
    CHECK(a == run(1));
    CHECK(a == run(4));

    std::istringstream in(a);
    const auto reports = read_reports(in);
    REQUIRE(reports.size() == 6);
    std::ostringstream again;
    for (const auto& r : reports) write_report(again, r);
    CHECK(again.str() == a);
    CHECK(reports[3].condition.name == "warm-compound");
    const auto table = render_summary_table(reports);
    CHECK(table.find("warm-compound") != std::string::npos);
    CHECK(table.find("100.0") != std::string::npos);
    CHECK(render_category_table(reports).find("single-hop") != std::string::npos);
  }

  TEST_CASE("edited summary lines are ignored on read") {
    const auto d = trips_dataset();
    BackendPool pool(std::make_shared<MockBackend>(trips_script()));
    DeterministicEmbedder emb(64);
    const auto rep = run_condition(standard_condition("warm-compound", "small", "large"), d, settings(), pool, emb);
    std::ostringstream out;
    write_report(out, rep);
    std::string text = out.str();
    const auto pos = text.rfind("\"f1\":1.0");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 8, "\"f1\":0.2");
    std::istringstream in(text);
    CHECK(read_report(in).overall.f1 == 1.0);
    std::istringstream bad("{\"type\":\"question\"}\n");
    CHECK_THROWS_AS(read_report(bad), DatasetError);
  }

  TEST_CASE("backend failures are recorded per question") {
    const auto d = trips_dataset();
    auto rules = trips_script();
    auto boom = testutil::rule("", 0);
    boom.query_contains = "number 2 ";
    boom.fail = "transport";
    rules.insert(rules.begin(), boom);
    BackendPool pool(std::make_shared<MockBackend>(rules));
    DeterministicEmbedder emb(64);
    const auto rep = run_condition(standard_condition("cold-small", "small", "large"), d, settings(), pool, emb);
    CHECK(!rep.complete);
    CHECK(rep.failures == 1);
    const auto& q2 = rep.questions[2];
    CHECK(q2.failed);
    CHECK(!q2.error.empty());
    CHECK(q2.f1 == 0.0);
  }

  TEST_CASE("retrieval comparison") {
    const auto d = trips_dataset();
    BackendPool pool(std::make_shared<MockBackend>(trips_script()));
    DeterministicEmbedder emb(64);
    const auto same = compare_retrieval(d, settings(), pool, emb, RetrievalMode::hybrid, std::nullopt,
                                        RetrievalMode::hybrid, std::nullopt);
    for (const auto& t : same.per_type) CHECK(t.delta == 0.0);
    std::ostringstream a, b;
    write_report(a, same.baseline);
    write_report(b, same.candidate);
    CHECK(a.str() == b.str());

    const auto cmp = compare_retrieval(d, settings(), pool, emb);
    REQUIRE(cmp.per_type.size() == 2);
    CHECK(cmp.per_type[0].type == "single-hop");
    CHECK(cmp.per_type[1].type == "temporal");
    CHECK(cmp.baseline.condition.retrieval == RetrievalMode::dense);
    CHECK(render_comparison_table(cmp).find("temporal") != std::string::npos);
  }

  TEST_CASE("locomo and longmemeval datasets") {
    const auto conv = load_locomo(testutil::fixture("locomo_conv26.json"));
    const auto d = make_locomo_dataset(conv, PairingMode::consecutive);
    CHECK(d.items.size() == 152);
    CHECK(d.memories.at("conv-26").size() == 107);
    CHECK(d.transcripts.at("conv-26").size() == 214);
    const auto sub = d.subset(stratified_sample(d.items, 20, 1));
    CHECK(sub.items.size() == 20);
    CHECK(sub.memories.size() == 1);

    const auto items = load_longmemeval(testutil::fixture("longmemeval_500.json"));
    const auto l = make_longmemeval_dataset(items, PairingMode::consecutive);
    CHECK(l.memories.size() == 500);
    CHECK(l.partition_of.at(items[0].qa.question_id) == items[0].qa.question_id);
    CHECK(l.memories.at(items[0].qa.question_id).size() == 6);
  }
}
