#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "logtree/error.hpp"
#include "logtree/llm.hpp"
#include "logtree/regex.hpp"
#include "temp_dir.hpp"

using namespace logtree;
using namespace logtree::llm;
using nlohmann::json;

namespace {

json transcript() {
  return json::parse(R"({
    "entries": [
      {"match": ["TASK: describe-line", "Accepted conn"], "response": "An sshd message reporting an accepted SSH connection for a user."},
      {"match": ["TASK: regex", "Attempt 1 was rejected"], "response": "{\"regex\": \"\\\\d+\"}"},
      {"match": ["TASK: regex"], "response": "{\"regex\": \"(\\\\d+\"}"},
      {"match": ["TASK: vote", "variant-a"], "response": "A"},
      {"match": ["TASK: vote", "variant-b"], "response": "B"},
      {"match": ["TASK: vote", "variant-c"], "response": "C"},
      {"match": ["hello"], "exclude": ["goodbye"], "response": "hi"}
    ]
  })");
}

}  // namespace

TEST_CASE("llm: normalization and hashing") {
  CHECK(normalize_prompt("  a \n\t b  ") == "a b");
  CHECK(prompt_hash("a  b") == prompt_hash("a\nb"));
  CHECK(fnv1a64("") == 14695981039346656037ULL);
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("llm: mock replays and fails loudly") {
  MockProvider mock(transcript());
  ResponseCache cache;
  Gateway gw(mock, cache);
  CHECK(gw.complete_one("TASK: x" + std::string(kQueryMarker) + "hello") == "hi");
  CHECK_THROWS_AS(gw.complete_one("TASK: x" + std::string(kQueryMarker) + "hello goodbye"), ProviderError);
  CHECK_THROWS_AS(gw.complete_one("never seen"), ProviderError);
}

TEST_CASE("llm: few-shot text before the marker does not trigger entries") {
  MockProvider mock(transcript());
  CHECK_THROWS_AS(mock.complete("TASK: x\nexample: hello" + std::string(kQueryMarker) + "other", 0), ProviderError);
  CHECK(mock.complete("TASK: hello\nexample" + std::string(kQueryMarker) + "other", 0) == "hi");
}

TEST_CASE("llm: cache serves repeats without provider calls") {
  MockProvider mock(transcript());
  ResponseCache cache;
  Gateway gw(mock, cache);
  std::string p = "describe" + std::string(kQueryMarker) + "hello";
  gw.complete_one(p);
  std::size_t calls = mock.completion_calls();
  CHECK(gw.complete_one(p) == "hi");
  CHECK(mock.completion_calls() == calls);
  CHECK(gw.cache_hits() == 1);
}

TEST_CASE("llm: samples follow variant order") {
  MockProvider mock(transcript());
  ResponseCache cache;
  Gateway gw(mock, cache);
  SamplingSpec spec{3, 0.7, {"variant-a", "variant-b", "variant-c"}};
  std::vector<std::string> out = gw.complete("TASK: vote" + std::string(kQueryMarker) + "pick", spec);
  CHECK(out == std::vector<std::string>{"A", "B", "C"});
  CHECK(mock.completion_calls() == 3);
}

TEST_CASE("llm: majority vote with earliest tie-break") {
  auto id = [](const std::string& s) { return s; };
  CHECK(majority_vote(std::vector<std::string>{"A", "B", "A"}, id) == 0);
  CHECK(majority_vote(std::vector<std::string>{"B", "A", "A"}, id) == 1);
  // Both orders of a two-way tie pick the first element.
  CHECK(majority_vote(std::vector<std::string>{"A", "B"}, id) == 0);
  CHECK(majority_vote(std::vector<std::string>{"B", "A"}, id) == 0);
  CHECK(majority_vote(std::vector<std::string>{"X"}, id) == 0);
}

TEST_CASE("llm: repair loop") {
  SUBCASE("passes first time") {
    RepairOutcome out;
    int v = repair_loop<int>([](const std::string&, int) { return 1; },
                             [](const int&) { return std::optional<std::string>(); }, 3, &out);
    CHECK(v == 1);
    CHECK(out.iterations == 1);
  }
  SUBCASE("compile failure is fed back") {
    MockProvider mock(transcript());
    ResponseCache cache;
    Gateway gw(mock, cache);
    RepairOutcome out;
    std::string base = "TASK: regex" + std::string(kQueryMarker) + "give a pattern";
    std::string rx = repair_loop<std::string>(
        [&](const std::string& fb, int) { return extract_json(gw.complete_one(with_feedback(base, fb)))["regex"].get<std::string>(); },
        [](const std::string& r) -> std::optional<std::string> {
          std::string d = regex::Pattern::check(r);
          if (d.empty()) return std::nullopt;
          return d;
        },
        3, &out);
    CHECK(rx == "\\d+");
    CHECK(out.iterations == 2);
    REQUIRE(mock.prompts().size() == 2);
    CHECK(mock.prompts()[1].find(out.diagnostics[0]) != std::string::npos);
    CHECK(out.diagnostics[0].find("(\\d+") != std::string::npos);
  }
  SUBCASE("exhaustion") {
    int calls = 0;
    try {
      repair_loop<int>([&](const std::string&, int) { return ++calls; },
                       [](const int& v) { return std::optional<std::string>("bad " + std::to_string(v)); }, 3);
      FAIL("expected RepairExhausted");
    } catch (const RepairExhausted& e) {
      CHECK(e.iterations() == 3);
      CHECK(e.diagnostic() == "bad 3");
    }
    CHECK(calls == 3);
  }
  SUBCASE("invalid replies count as failures") {
    int v = repair_loop<int>(
        [](const std::string& fb, int it) -> int {
          if (it == 1) throw InvalidReply("not json");
          CHECK(fb.find("not json") != std::string::npos);
          return 7;
        },
        [](const int&) { return std::optional<std::string>(); }, 2);
    CHECK(v == 7);
  }
}

TEST_CASE("llm: extract_json") {
  CHECK(extract_json("{\"a\":1}")["a"] == 1);
  CHECK(extract_json("thinking...\n```json\n{\"a\":1}\n```\nmore\n```json\n{\"a\":2}\n```")["a"] == 2);
  CHECK_THROWS_AS(extract_json("no json here"), InvalidReply);
  CHECK_THROWS_AS(extract_json("```json\n{\"a\":1}"), InvalidReply);
}

TEST_CASE("llm: example store") {
  ExampleStore store;
  MockProvider mock(transcript());
  ResponseCache cache;
  Gateway gw(mock, cache);
  CHECK(nearest_examples(gw, store, "anything").empty());
  store.add(Example{"x", {1, 0, 0}, "p1", "o1"});
  store.add(Example{"y", {0, 1, 0}, "p2", "o2"});
  CHECK_THROWS_AS(store.add(Example{"z", {1, 0}, "p", "o"}), InputError);
  auto near = store.nearest({0, 1, 0}, 5);
  REQUIRE(near.size() == 2);
  CHECK(near[0]->description == "y");
  CHECK(near[1]->description == "x");
  ExampleStore back = ExampleStore::from_json(store.to_json());
  CHECK(back.size() == 2);
  CHECK(back.entries()[1].output == "o2");
}

TEST_CASE("llm: describe") {
  MockProvider mock(transcript());
  ResponseCache cache;
  Gateway gw(mock, cache);
  std::string line = "Mar  9 23:46:29 puma25 sshd[17376]: Accepted conn user:root pw src={ip=10.35.161.71 port=59271}";
  std::string d = gw.describe(line);
  CHECK(d.find("accepted SSH connection") != std::string::npos);
  CHECK(gw.describe(line) == d);
  CHECK(mock.completion_calls() == 1);
  CHECK_THROWS_AS(gw.describe(""), EmptyInput);
  CHECK_THROWS_AS(gw.describe("  "), EmptyInput);
}

TEST_CASE("llm: hashed embeddings") {
  Embedding a = hashed_embedding("SSH accepted connection", 64);
  Embedding b = hashed_embedding("ssh  ACCEPTED connection!", 64);
  CHECK(a == b);
  CHECK(cosine(a, a) == doctest::Approx(1.0));
  CHECK(cosine(a, hashed_embedding("disk quota exceeded", 64)) < 0.9);
}

TEST_CASE("llm: persistent cache") {
  test::TempDir dir;
  {
    MockProvider mock(transcript());
    ResponseCache cache(dir.path());
    Gateway gw(mock, cache);
    gw.complete_one("x" + std::string(kQueryMarker) + "hello");
    gw.embed("hello world");
  }
  {
    MockProvider mock(json::object());
    ResponseCache cache(dir.path());
    Gateway gw(mock, cache);
    CHECK(gw.complete_one("x" + std::string(kQueryMarker) + "hello") == "hi");
    CHECK(gw.embed("hello world").size() == 64);
    CHECK(mock.completion_calls() == 0);
    CHECK(mock.embedding_calls() == 0);
  }
  std::ofstream(dir.path() / "completions.jsonl", std::ios::app) << "{not json\n";
  CHECK_THROWS_AS(ResponseCache(dir.path()), CacheError);
}

TEST_CASE("llm: http provider against a loopback server") {
  httplib::Server server;
  int failures_left = 1;
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (failures_left-- > 0) {
      res.status = 503;
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    json body = json::parse(req.body);
    std::string content = "echo: " + body["messages"][0]["content"].get<std::string>();
    res.set_content(json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump(),
                    "application/json");
  });
  server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"data", json::array({{{"embedding", {0.5, 0.5, 0.5, 0.5}}}})}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("LOGTREE_TEST_KEY", "secret", 1);
  HttpConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
  cfg.api_key_env = "LOGTREE_TEST_KEY";
  cfg.embedding_dim = 4;
  cfg.retry_backoff_ms = 1;
  HttpProvider provider(cfg);
  CHECK(provider.complete("ping", 0.0) == "echo: ping");
  CHECK(seen_auth == "Bearer secret");
  CHECK(provider.embed("x").size() == 4);

  HttpConfig wrong = cfg;
  wrong.embedding_dim = 8;
  CHECK_THROWS_AS(HttpProvider(wrong).embed("x"), ProviderError);

  failures_left = 100;
  HttpConfig few = cfg;
  few.max_retries = 2;
  CHECK_THROWS_AS(HttpProvider(few).complete("ping", 0.0), ProviderError);

  server.stop();
  thread.join();

  HttpConfig nokey = cfg;
  nokey.api_key_env = "LOGTREE_TEST_KEY_UNSET";
  ::unsetenv("LOGTREE_TEST_KEY_UNSET");
  CHECK_THROWS_AS(HttpProvider{nokey}, ConfigError);
}
