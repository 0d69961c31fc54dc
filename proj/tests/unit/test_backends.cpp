#include <doctest.h>

#include <nlohmann/json.hpp>

#include "memroute/backends.hpp"
#include "memroute/errors.hpp"
#include "test_util.hpp"

using namespace memroute;
using nlohmann::json;

namespace {

ChatRequest request(std::string query, std::string memory = {}, bool logprobs = true) {
  ChatRequest r;
  r.model = "small";
  r.segments.push_back({SegmentKind::preamble, "Be brief."});
  if (!memory.empty()) r.segments.push_back({SegmentKind::memory, memory});
  r.segments.push_back({SegmentKind::query, std::move(query)});
  r.want_logprobs = logprobs;
  return r;
}

ModelSpec spec(std::string name, double p = 8) {
  ModelSpec m;
  m.name = std::move(name);
  m.params_billion = p;
  return m;
}

}  // namespace

TEST_SUITE("backends") {
  TEST_CASE("request segments are validated") {
    auto r = request("q");
    CHECK_NOTHROW(r.validate());
    CHECK(r.query() == "q");
    CHECK(r.memory().empty());
    std::swap(r.segments[0], r.segments[1]);
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    ChatRequest none;
    CHECK_THROWS_AS(none.validate(), std::invalid_argument);
  }

  TEST_CASE("mock rules match on model, query and context") {
    std::vector<ScriptedBehavior> rules;
    auto a = testutil::rule("large answer", -0.05);
    a.model = "large";
    rules.push_back(a);
    auto b = testutil::rule("from memory", -0.1);
    b.context_contains = "Amalfi";
    rules.push_back(b);
    auto c = testutil::rule("no memory", -2.0);
    c.context_present = false;
    c.query_pattern = "^where";
    rules.push_back(c);
    MockBackend mock(rules, "fallback text", -0.7);

    CHECK(mock.complete(spec("large", 235), request("where")).text == "large answer");
    CHECK(mock.complete(spec("small"), request("where", "[1 May 2024] Q: Amalfi? / A: yes")).text == "from memory");
    CHECK(mock.complete(spec("small"), request("where did I go")).text == "no memory");
    const auto fb = mock.complete(spec("small"), request("what", "unrelated memory"));
    CHECK(fb.text == "fallback text");
    REQUIRE(fb.tokens.has_value());
    CHECK(fb.tokens->size() == 2);
    CHECK((*fb.tokens)[0].logprob == -0.7);
  }

  TEST_CASE("mock usage counts are whitespace words") {
    MockBackend mock({testutil::rule("one two three", -0.1)});
    const auto r = mock.complete(spec("small"), request("a b c d", "m1 m2"));
    CHECK(r.prompt_token_count == 2 + 4 + 2);
    CHECK(r.completion_token_count == 3);
    CHECK(!mock.complete(spec("small"), request("x", {}, false)).tokens.has_value());
  }

  TEST_CASE("mock failures and missing logprobs") {
    auto f = testutil::rule("", 0);
    f.fail = "timeout";
    auto n = testutil::rule("fine", -0.1);
    n.omit_logprobs = true;
    n.model = "nolp";
    f.model = "broken";
    MockBackend mock({f, n});
    try {
      mock.complete(spec("broken"), request("q"));
      FAIL("expected failure");
    } catch (const BackendError& e) {
      CHECK(e.kind() == BackendError::Kind::timeout);
    }
    try {
      mock.complete(spec("nolp"), request("q"));
      FAIL("expected failure");
    } catch (const BackendError& e) {
      CHECK(e.kind() == BackendError::Kind::no_logprobs);
    }
    CHECK(mock.complete(spec("nolp"), request("q", {}, false)).text == "fine");
  }

  TEST_CASE("explicit per-token logprobs and templates") {
    auto r = testutil::rule("a b c", 0);
    r.logprobs = std::vector<double>{-0.1, -0.2, -0.3};
    auto t = testutil::rule("{model} got {segments}", -0.1);
    t.query_contains = "template";
    MockBackend mock({t, r});
    const auto out = mock.complete(spec("small"), request("q"));
    CHECK((*out.tokens)[2].logprob == -0.3);
    CHECK(mock.complete(spec("small"), request("template", "mem")).text == "small got 3");
    auto bad = testutil::rule("a b", 0);
    bad.logprobs = std::vector<double>{-0.1};
    CHECK_THROWS_AS(MockBackend({bad}), ConfigError);
    CHECK_THROWS_AS(MockBackend({testutil::rule("x", 0.5)}), ConfigError);
  }

  TEST_CASE("mock script json") {
    const auto mock = MockBackend::from_json_text(R"({
      "fallback": {"reply": "unsure", "logprob": -2.5},
      "rules": [{"model": "large", "reply": "Paris", "logprob": -0.05},
                {"query_contains": "fail", "fail": "transport"}]})");
    CHECK(mock->rule_count() == 2);
    CHECK(mock->complete(spec("large", 235), request("x")).text == "Paris");
    CHECK(mock->complete(spec("small"), request("x")).text == "unsure");
    CHECK_THROWS_AS(mock->complete(spec("small"), request("please fail")), BackendError);
    CHECK_THROWS(MockBackend::from_json_text("{not json"));
  }

  TEST_CASE("endpoint parsing") {
    const auto e = HttpEndpoint::parse("http://gpu-1:8000/v1");
    CHECK(e.scheme_host_port == "http://gpu-1:8000");
    CHECK(e.path_prefix == "/v1");
    CHECK(HttpEndpoint::parse("http://h:1").path_prefix.empty());
    CHECK_THROWS(HttpEndpoint::parse("ftp://x"));
  }

  TEST_CASE("wire format") {
    const auto body = json::parse(HttpChatBackend::request_body(spec("qwen3-8b"), request("hi", "mem")));
    CHECK(body["model"] == "qwen3-8b");
    CHECK(body["logprobs"] == true);
    REQUIRE(body["messages"].size() == 3);
    CHECK(body["messages"][2]["role"] == "user");
    CHECK(body["messages"][2]["content"] == "hi");
    CHECK(body["messages"][1]["content"] == "mem");

    const auto r = HttpChatBackend::parse_response(
        R"({"choices":[{"message":{"content":"ok then"},"logprobs":{"content":[{"token":"ok","logprob":-0.1},{"token":" then","logprob":-0.3}]}}],
            "usage":{"prompt_tokens":17,"completion_tokens":2}})",
        request("hi"));
    CHECK(r.text == "ok then");
    CHECK(r.prompt_token_count == 17);
    REQUIRE(r.tokens.has_value());
    CHECK((*r.tokens)[1].logprob == -0.3);

    CHECK_THROWS_AS(HttpChatBackend::parse_response(R"({"choices":[{"message":{"content":"x"}}]})", request("hi")),
                    BackendError);
    CHECK_NOTHROW(HttpChatBackend::parse_response(R"({"choices":[{"message":{"content":"x"}}]})",
                                                  request("hi", {}, false)));
    try {
      HttpChatBackend::parse_response("<html>", request("hi"));
      FAIL("expected failure");
    } catch (const BackendError& e) {
      CHECK(e.kind() == BackendError::Kind::malformed);
    }
  }

  TEST_CASE("http backend against a local server") {
    testutil::LocalServer srv;
    int calls = 0;
    std::string auth;
    srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      auth = req.get_header_value("Authorization");
      const auto j = json::parse(req.body);
      if (j["model"] == "down") {
        res.status = 503;
        res.set_content("overloaded", "text/plain");
        return;
      }
      json reply{{"choices", {{{"message", {{"content", "Lisbon"}}},
                               {"logprobs", {{"content", {{{"token", "Lisbon"}, {"logprob", -0.2}}}}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    srv.start();
    HttpOptions opt;
    opt.timeout_seconds = 5;
    opt.api_key = "secret";
    HttpChatBackend b(srv.url(), opt);
    const auto r = b.complete(spec("small"), request("where"));
    CHECK(r.text == "Lisbon");
    CHECK(auth == "Bearer secret");
    CHECK(r.completion_token_count == 1);
    try {
      b.complete(spec("down"), request("where"));
      FAIL("expected failure");
    } catch (const BackendError& e) {
      CHECK(e.kind() == BackendError::Kind::http_status);
    }

    HttpOptions quick;
    quick.timeout_seconds = 1;
    quick.retries = 1;
    HttpChatBackend dead("http://127.0.0.1:9/v1", quick);
    try {
      dead.complete(spec("small"), request("where"));
      FAIL("expected failure");
    } catch (const BackendError& e) {
      CHECK((e.kind() == BackendError::Kind::transport || e.kind() == BackendError::Kind::timeout));
    }
  }

  TEST_CASE("backend pool resolution") {
    auto mock = std::make_shared<MockBackend>(std::vector<ScriptedBehavior>{});
    BackendPool pool(mock);
    auto m = spec("small");
    CHECK(pool.resolve(m) == mock);
    m.endpoint = "mock:other";
    CHECK(pool.resolve(m) == mock);
    m.endpoint = "http://127.0.0.1:1/v1";
    const auto h = pool.resolve(m);
    CHECK(h != nullptr);
    CHECK(pool.resolve(m) == h);
    m.endpoint = "custom";
    CHECK_THROWS_AS(pool.resolve(m), ConfigError);
    pool.register_endpoint("custom", mock);
    CHECK(pool.resolve(m) == mock);
    BackendPool empty;
    CHECK_THROWS_AS(empty.resolve(spec("x")), ConfigError);
  }
}
