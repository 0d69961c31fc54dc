#include <doctest.h>

#include <fstream>
#include <functional>

#include <nlohmann/json.hpp>

#include "memroute/errors.hpp"
#include "memroute/eval/datasets.hpp"
#include "memroute/memory_store.hpp"
#include "test_util.hpp"

using namespace memroute;
using namespace memroute::eval;
using nlohmann::json;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DatasetError& e) {
    return e.what();
  }
  return {};
}

void write(const std::filesystem::path& p, const json& j) { std::ofstream(p) << j.dump(); }

}  // namespace

TEST_SUITE("datasets") {
  TEST_CASE("conversation 26 fixture") {
    const auto conv = load_locomo(testutil::fixture("locomo_conv26.json"), "conv-26");
    CHECK(conv.sample_id == "conv-26");
    CHECK(conv.sessions.size() == 19);
    CHECK(conv.turn_count == 214);
    CHECK(conv.qa.size() == 152);
    CHECK(conv.skipped_questions == 47);
    const auto h = category_histogram(conv.qa);
    CHECK(h.at("single-hop") == 70);
    CHECK(h.at("multi-hop") == 40);
    CHECK(h.at("open-domain") == 12);
    CHECK(h.at("temporal") == 30);
    CHECK(conv.pair_count(PairingMode::consecutive) == 107);
    CHECK(conv.pair_count(PairingMode::per_turn) == 214);
    CHECK(conv.sessions[0].timestamp == "8 May 2023");
    const auto pairs = make_turn_pairs(conv.sessions, PairingMode::consecutive);
    CHECK(render_turn_pair(pairs[0].timestamp, pairs[0].question, pairs[0].answer) ==
          "[8 May 2023] Q: Are you seeing anyone? / A: No, I'm single right now.");
    std::set<std::string> ids;
    for (const auto& q : conv.qa) {
      CHECK(!q.answer.empty());
      ids.insert(q.question_id);
    }
    CHECK(ids.size() == 152);
  }

  TEST_CASE("longmemeval fixture") {
    const auto items = load_longmemeval(testutil::fixture("longmemeval_500.json"));
    CHECK(items.size() == 500);
    std::vector<QAItem> qa;
    for (const auto& i : items) qa.push_back(i.qa);
    const auto h = category_histogram(qa);
    const std::vector<std::size_t> expected{70, 56, 30, 133, 133, 78};
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(h.at(longmemeval_types()[i]) == expected[i]);
    CHECK(items[0].qa.has_evidence);
    CHECK(items[0].haystack.size() == 3);
    CHECK(items[0].haystack[0].timestamp.find("2023") != std::string::npos);
  }

  TEST_CASE("date rendering") {
    CHECK(render_session_date("1:56 pm on 8 May, 2023") == "8 May 2023");
    CHECK(render_session_date("2023/05/20 (Sat) 02:21") == "20 May 2023");
    CHECK(render_session_date("10:04 am on 15 March, 2023") == "15 Mar 2023");
    CHECK(render_session_date("sometime last spring") == "sometime last spring");
  }

  TEST_CASE("pairing policies on a three-turn session") {
    Session s{"session_1", "1 Jan 2024", {{"A", "one"}, {"B", "two"}, {"A", "three"}}};
    const auto c = make_turn_pairs({s}, PairingMode::consecutive);
    REQUIRE(c.size() == 2);
    CHECK(c[0].question == "one");
    CHECK(c[0].answer == "two");
    CHECK(c[1].question == "three");
    CHECK(c[1].answer.empty());
    const auto p = make_turn_pairs({s}, PairingMode::per_turn);
    REQUIRE(p.size() == 3);
    CHECK(p[1].question == "two");
    CHECK(p[1].answer == "three");
    CHECK(p[2].answer.empty());
    CHECK(parse_pairing_mode("per_turn") == PairingMode::per_turn);
    CHECK_THROWS(parse_pairing_mode("bogus"));
  }

  TEST_CASE("three-turn locomo file") {
    testutil::TempDir dir;
    json conv{{"sample_id", "tiny"},
              {"conversation",
               {{"speaker_a", "A"},
                {"speaker_b", "B"},
                {"session_1_date_time", "1:00 pm on 2 June, 2023"},
                {"session_1",
                 {{{"speaker", "A"}, {"dia_id", "D1:1"}, {"text", "hi"}},
                  {{"speaker", "B"}, {"dia_id", "D1:2"}, {"text", "hello"}},
                  {{"speaker", "A"}, {"dia_id", "D1:3"}, {"text", "bye"}}}}}},
              {"qa", json::array()}};
    write(dir / "tiny.json", conv);
    const auto c = load_locomo(dir / "tiny.json");
    CHECK(c.qa.empty());
    CHECK(c.turn_count == 3);
    CHECK(c.pair_count(PairingMode::consecutive) == 2);
    CHECK(c.sessions[0].timestamp == "2 Jun 2023");
  }

  TEST_CASE("corrupt files produce field-precise errors") {
    const auto missing_q = error_of([] { load_locomo(testutil::fixture("corrupt_locomo_missing_question.json")); });
    CHECK(missing_q.find("qa[3]") != std::string::npos);
    CHECK(missing_q.find("question") != std::string::npos);

    const auto trunc = error_of([] { load_locomo(testutil::fixture("corrupt_locomo_truncated.json")); });
    CHECK(!trunc.empty());

    const auto turn = error_of([] { load_longmemeval(testutil::fixture("corrupt_longmemeval_turn.json")); });
    CHECK(turn.find("[1]") != std::string::npos);
    CHECK(turn.find("haystack_sessions[0][2]") != std::string::npos);
    CHECK(turn.find("content") != std::string::npos);

    const auto type = error_of([] { load_longmemeval(testutil::fixture("corrupt_longmemeval_type.json")); });
    CHECK(type.find("[2]") != std::string::npos);
    CHECK(type.find("question_type") != std::string::npos);

    CHECK(!error_of([] { load_locomo("/nonexistent/file.json"); }).empty());
    CHECK(!error_of([] { load_locomo(testutil::fixture("locomo_conv26.json"), "conv-99"); }).empty());
  }

  TEST_CASE("missing answer_session_ids leaves recall unavailable") {
    testutil::TempDir dir;
    std::ifstream in(testutil::fixture("longmemeval_500.json"));
    auto all = json::parse(in);
    json one = json::array({all[0], all[1]});
    one[0].erase("answer_session_ids");
    write(dir / "lme.json", one);
    const auto items = load_longmemeval(dir / "lme.json");
    REQUIRE(items.size() == 2);
    CHECK(!items[0].qa.has_evidence);
    CHECK(items[1].qa.has_evidence);
    CHECK(items[0].haystack.size() == 3);
  }

  TEST_CASE("one-question file loads its own haystack") {
    testutil::TempDir dir;
    std::ifstream in(testutil::fixture("longmemeval_500.json"));
    auto all = json::parse(in);
    write(dir / "one.json", json::array({all[7]}));
    const auto single = load_longmemeval(dir / "one.json");
    const auto full = load_longmemeval(testutil::fixture("longmemeval_500.json"));
    REQUIRE(single.size() == 1);
    CHECK(single[0].qa.question_id == full[7].qa.question_id);
    CHECK(single[0].haystack.size() == full[7].haystack.size());
    CHECK(single[0].haystack[0].turns[0].text == full[7].haystack[0].turns[0].text);
  }
}
