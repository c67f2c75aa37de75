#include "doctest.h"
#include "logtree/error.hpp"
#include "logtree/taxonomy.hpp"
#include "temp_dir.hpp"

using namespace logtree;
using namespace logtree::taxonomy;
using nlohmann::json;

namespace {

struct Rig {
  explicit Rig(json entries) : mock(json{{"entries", std::move(entries)}}), gw(mock, cache) {}
  llm::MockProvider mock;
  llm::ResponseCache cache;
  llm::Gateway gw;
};

json describe_any() {
  return {{"match", {"TASK: describe-attribute"}}, {"response", "Holds the value named by the path."}};
}

json small_taxonomy() {
  return json::parse(R"({"name": "mini", "attributes": [
    {"path": "src_endpoint.ip", "description": "Source IP address.", "type": "ip_t"},
    {"path": "src_endpoint.port", "description": "Source port.", "type": "port_t"},
    {"path": "src_endpoint.hostname", "type": "hostname_t"},
    {"path": "user.name", "description": "User name.", "type": "username_t"},
    {"path": "time", "description": "Event time.", "type": "timestamp_t"}
  ]})");
}

// Ten attributes plus one hidden sibling group so that a top-k cut excludes
// the sibling unless it is injected.
json wide_taxonomy() {
  json attrs = json::array();
  for (int i = 0; i < 10; ++i) attrs.push_back({{"path", "misc.a" + std::to_string(i)}, {"description", "Port number " + std::to_string(i)}});
  attrs.push_back({{"path", "src_endpoint.ip"}, {"description", "Source IP address."}});
  attrs.push_back({{"path", "src_endpoint.port"}, {"description", "Unrelated words entirely."}});
  return json{{"attributes", attrs}};
}

}  // namespace

TEST_CASE("taxonomy: parsing") {
  CHECK(parse_taxonomy(small_taxonomy()).size() == 5);
  CHECK(parse_taxonomy(small_taxonomy()["attributes"]).size() == 5);
  json dup = small_taxonomy();
  dup["attributes"].push_back({{"path", "time"}});
  try {
    parse_taxonomy(dup);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    CHECK(e.location() == "/attributes/5/path");
  }
  CHECK_THROWS_AS(parse_taxonomy(json::parse(R"({"attributes":[{"path":"a..b"}]})")), ParseError);
  CHECK_THROWS_AS(parse_taxonomy(json::parse(R"({"attributes":[{"name":"x"}]})")), ParseError);
  CHECK_THROWS_AS(parse_taxonomy(json::object()), ParseError);
  CHECK(parent_of("src_endpoint.ip") == "src_endpoint");
  CHECK(parent_of("time").empty());
}

TEST_CASE("taxonomy: preprocessing builds a reusable index") {
  json tiny = json::parse(R"({"attributes":[{"path":"a.x","description":"X."},{"path":"a.y"},{"path":"b"}]})");
  test::TempDir dir;
  std::size_t first_calls = 0;
  AttributeIndex idx;
  {
    llm::MockProvider mock(json{{"entries", json::array({describe_any()})}});
    llm::ResponseCache cache(dir.path() / "cache");
    llm::Gateway gw(mock, cache);
    idx = preprocess_taxonomy(gw, tiny);
    first_calls = gw.provider_calls();
  }
  CHECK(first_calls > 0);
  CHECK(idx.size() == 3);
  CHECK(idx.paths() == std::set<std::string>{"a.x", "a.y", "b"});
  CHECK(idx.find("a.x")->description == "X. Holds the value named by the path.");
  CHECK(idx.find("a.y")->description == "Holds the value named by the path.");
  CHECK(idx.siblings("a.x") == std::vector<std::string>{"a.y"});
  CHECK(idx.version() == taxonomy_version(tiny));

  idx.save(dir.path() / "index.json");
  AttributeIndex back = AttributeIndex::load(dir.path() / "index.json");
  CHECK(back.to_json() == idx.to_json());

  llm::MockProvider mock(json{{"entries", json::array({describe_any()})}});
  llm::ResponseCache cache(dir.path() / "cache");
  llm::Gateway gw(mock, cache);
  AttributeIndex again = preprocess_taxonomy(gw, tiny);
  CHECK(gw.provider_calls() == 0);
  CHECK(mock.completion_calls() + mock.embedding_calls() == 0);
  CHECK(again.to_json() == idx.to_json());
}

TEST_CASE("taxonomy: shortlist clamps, ranks and injects siblings") {
  Rig rig(json::array({describe_any()}));
  AttributeIndex idx = preprocess_taxonomy(rig.gw, wide_taxonomy());
  SchemaField port{"src_port", "Port number of the source", {}, false};

  std::vector<Candidate> all = shortlist(rig.gw, idx, port, {}, 50);
  CHECK(all.size() == 12);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].similarity >= all[i].similarity);

  std::vector<Candidate> top = shortlist(rig.gw, idx, port, {}, 5);
  CHECK(top.size() == 5);
  auto has = [](const std::vector<Candidate>& v, const std::string& p) {
    return std::any_of(v.begin(), v.end(), [&](const Candidate& c) { return c.path == p; });
  };
  CHECK_FALSE(has(top, "src_endpoint.port"));
  std::vector<Candidate> with = shortlist(rig.gw, idx, port, {"src_endpoint.ip"}, 5);
  CHECK(with.size() == 6);
  CHECK(with.back().path == "src_endpoint.port");
  CHECK(with.back().injected);
  CHECK(shortlist(rig.gw, idx, port, {"src_endpoint.ip"}, 5).size() == 6);  // deterministic
}

TEST_CASE("taxonomy: type assignment") {
  json entries = json::array({
      describe_any(),
      {{"match", {"TASK: assign-type", "Attempt 1 was rejected"}}, {"response", "{\"type\": \"username_t\"}"}},
      {{"match", {"TASK: assign-type"}}, {"response", "{\"type\": \"banana\"}"}},
  });
  Rig rig(entries);
  AttributeIndex idx = preprocess_taxonomy(rig.gw, small_taxonomy());
  SchemaField user{"user", "Account name.", {"root"}, false};
  std::string tag = assign_type(rig.gw, user, idx.type_tags());
  CHECK(tag == "username_t");
  CHECK(rig.mock.prompts().back().find("'banana' is not one of the listed types") != std::string::npos);

  std::vector<Candidate> cands = shortlist(rig.gw, idx, user, {});
  std::vector<Candidate> pruned = prune_by_type(cands, idx, tag);
  REQUIRE(pruned.size() == 1);
  CHECK(pruned[0].path == "user.name");
  CHECK(prune_by_type(cands, idx, "nothing_t").size() == cands.size());
}

TEST_CASE("taxonomy: map_field accepts, repairs hallucinations, and allows none") {
  json entries = json::array({
      describe_any(),
      {{"match", {"TASK: map-field", "field: src_ip"}}, {"response", "{\"attributes\": [\"src_endpoint.ip\"]}"}},
      {{"match", {"TASK: map-field", "field: client", "Attempt 1 was rejected"}}, {"response", "{\"attributes\": [\"src_endpoint.ip\"]}"}},
      {{"match", {"TASK: map-field", "field: client"}}, {"response", "{\"attributes\": [\"src_endpoint.address\"]}"}},
      {{"match", {"TASK: map-field", "field: pid"}}, {"response", "none"}},
      {{"match", {"TASK: map-field", "field: both"}}, {"response", "{\"attributes\": [\"src_endpoint.ip\", \"time\"]}"}},
  });
  Rig rig(entries);
  AttributeIndex idx = preprocess_taxonomy(rig.gw, small_taxonomy());
  auto cands = [&](const SchemaField& f) { return shortlist(rig.gw, idx, f, {}); };

  SchemaField ip{"src_ip", "Client address.", {}, false};
  CHECK(map_field(rig.gw, ip, idx, cands(ip), 1) == std::vector<std::string>{"src_endpoint.ip"});

  SchemaField client{"client", "Client address.", {}, false};
  CHECK(map_field(rig.gw, client, idx, cands(client), 1) == std::vector<std::string>{"src_endpoint.ip"});
  CHECK(rig.mock.prompts().back().find("'src_endpoint.address' is not in the candidate list") != std::string::npos);

  SchemaField pid{"pid", "Process id.", {}, false};
  CHECK(map_field(rig.gw, pid, idx, cands(pid), 1).empty());

  SchemaField both{"both", "Two things.", {}, false};
  CHECK_THROWS_AS(map_field(rig.gw, both, idx, cands(both), 1), RepairExhausted);
  CHECK(map_field(rig.gw, both, idx, cands(both), 2).size() == 2);
  CHECK_THROWS_AS(map_field(rig.gw, both, idx, {}, 1), InputError);
}

TEST_CASE("taxonomy: map_all respects the cap and reports conflicts") {
  json entries = json::array({
      describe_any(),
      {{"match", {"TASK: map-field", "field: src_ip"}}, {"response", "{\"attributes\": [\"src_endpoint.ip\"]}"}},
      {{"match", {"TASK: map-field", "field: peer"}}, {"response", "{\"attributes\": [\"src_endpoint.ip\"]}"}},
      {{"match", {"TASK: map-field", "field: junk"}}, {"response", "{\"attributes\": [\"made.up\"]}"}},
      {{"match", {"TASK: map-field"}}, {"response", "none"}},
  });
  Rig rig(entries);
  AttributeIndex idx = preprocess_taxonomy(rig.gw, small_taxonomy());
  Bundle b;
  b.tree.insert_template({Token::variable("\\S+", " "), Token::variable("\\d+", " "), Token::variable("\\S+", " "),
                          Token::variable("\\S+")});
  const char* names[] = {"src_ip", "peer", "junk", "pid"};
  NodeId id = 1;
  for (const char* n : names) {
    b.schema.add(SchemaField{n, std::string("The ") + n + ".", {}, false});
    b.tree.node(id++).field = n;
  }
  Report r = map_all(rig.gw, b, idx);
  CHECK(b.mappings.size() == 2);
  std::set<std::string> paths = idx.paths();
  CHECK(check_integrity(b, &paths).empty());
  for (const auto& [_, attrs] : b.mappings) CHECK(attrs.size() <= 1);
  CHECK(r.fields[2].failed);
  CHECK(r.conflicts.at("src_endpoint.ip") == std::vector<std::string>{"peer", "src_ip"});
  CHECK(co_fields(b, "pid") == std::set<std::string>{"junk", "peer", "src_ip"});
  // every sibling is already inside the top-k, so nothing is injected
  CHECK(r.fields[1].candidates == 5);
  CHECK(r.fields[1].injected.empty());
  CHECK(r.to_json()["fields"].size() == 4);
}
