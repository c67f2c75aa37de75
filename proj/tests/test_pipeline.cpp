#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "logtree/metrics.hpp"
#include "logtree/pipeline.hpp"
#include "logtree/query.hpp"
#include "ssh_fixture.hpp"
#include "temp_dir.hpp"

using namespace logtree;
using nlohmann::json;

namespace {

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

TEST_CASE("config knobs: defaults, overlay and rejection") {
  RunConfig c;
  CHECK(c.samples == 3);
  CHECK(c.max_attributes == 1);
  c.merge_json(json{{"epsilon", 0.1}, {"skip_validation", true}});
  CHECK(c.epsilon == doctest::Approx(0.1));
  CHECK(c.skip_validation);
  CHECK_THROWS_AS(c.merge_json(json{{"epsilonn", 0.1}}), ConfigError);
  RunConfig bad;
  bad.validation_window = 0;
  CHECK_THROWS_AS(bad.check(), ConfigError);

  test::TempDir tmp;
  std::ofstream(tmp.path() / "run.json") << R"({"mock": "t.json", "samples": 5})";
  RunConfig loaded = RunConfig::load(tmp.path() / "run.json");
  REQUIRE(loaded.mock);
  CHECK(*loaded.mock == tmp.path() / "t.json");
  CHECK(loaded.samples == 5);
}

TEST_CASE("http provider without a key is a config error") {
  RunConfig c;
  c.http.api_key_env = "LOGTREE_TEST_KEY_THAT_IS_NOT_SET";
  ::unsetenv(c.http.api_key_env.c_str());
  CHECK_THROWS_AS(make_provider(c), ConfigError);
}

TEST_CASE("stage names round trip") {
  for (std::size_t i = 0; i < kStageCount; ++i) {
    auto s = static_cast<PipelineStage>(i);
    CHECK(parse_pipeline_stage(pipeline_stage_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_pipeline_stage("nope"), ConfigError);
}

TEST_CASE("ssh fixture: full run reproduces the golden bundle") {
  auto r = ssh::run();
  const PipelineResult& res = r.result;
  CHECK(res.finished);
  CHECK(res.integrity.empty());
  CHECK(res.completed.size() == kStageCount);
  CHECK(res.bundle.tree.templates().size() == 6);

  auto lines = ssh::lines();
  auto rep = metrics::evaluate(res.bundle, build_bundle(ssh::load("golden_templates.json")), lines);
  CHECK(rep.gt_matched == lines.size());
  CHECK(rep.pred_matched == lines.size());
  CHECK(rep.ts == 1.0);
  CHECK(rep.pgs == 1.0);
  CHECK(rep.sgs == 1.0);
  CHECK(rep.ga == 1.0);
  CHECK(rep.pa == 1.0);
  CHECK(rep.map == 1.0);

  // every line reconstructs from the bundle
  CompiledTree ct(res.bundle.tree);
  for (const auto& l : lines) {
    auto m = ct.match(l);
    REQUIRE(m.matched());
  }
}

TEST_CASE("ssh fixture: runs are deterministic and a warm cache makes no calls") {
  auto a = ssh::run();
  auto b = ssh::run();
  CHECK(serialize(a.result.bundle) == serialize(b.result.bundle));
  CHECK(a.provider->completion_calls() == b.provider->completion_calls());

  auto calls = a.gateway->provider_calls();
  auto again = run_pipeline(*a.gateway, RunConfig{}, ssh::lines(), &a.index);
  CHECK(a.gateway->provider_calls() == calls);
  CHECK(serialize(again.bundle) == serialize(a.result.bundle));
}

TEST_CASE("ssh fixture: validation merges the duplicate directory fields") {
  auto merged = ssh::run();
  auto names = ssh::field_names(merged.result.bundle);
  CHECK(has(names, "current_working_directory"));
  CHECK_FALSE(has(names, "cwd"));

  RunConfig skip;
  skip.skip_validation = true;
  auto raw = ssh::run(skip);
  auto raw_names = ssh::field_names(raw.result.bundle);
  CHECK(has(raw_names, "current_working_directory"));
  CHECK(has(raw_names, "cwd"));
  // the per-method branches stay apart without syntax validation
  CHECK(raw.result.bundle.tree.templates().size() == 8);
  CHECK(raw.result.integrity.empty());
}

TEST_CASE("ssh fixture: the hallucinated attribute is repaired") {
  auto r = ssh::run();
  const auto& fields = r.result.report["map"]["fields"];
  bool seen = false;
  for (const auto& f : fields) {
    if (f["field"] != "src_ip") continue;
    seen = true;
    REQUIRE(f["rejected"].size() == 1);
    std::string diag = f["rejected"][0];
    CHECK(diag.find("src_endpoint.ip_address") != std::string::npos);
    CHECK_FALSE(r.index.contains("src_endpoint.ip_address"));
    CHECK(f["attributes"] == json::array({"src_endpoint.ip"}));
  }
  CHECK(seen);
  for (const auto& [field, attrs] : r.result.bundle.mappings) {
    CHECK(attrs.size() <= r.result.bundle.max_attributes);
    for (const auto& a : attrs) CHECK(r.index.contains(a));
  }
}

TEST_CASE("ssh fixture: stop and resume gives the same bundle") {
  auto fresh = ssh::run();
  for (PipelineStage stop : {PipelineStage::induce, PipelineStage::name, PipelineStage::map}) {
    test::TempDir tmp;
    RunOptions first{tmp.path(), stop, false};
    auto part = ssh::run({}, first);
    CHECK_FALSE(part.result.finished);
    CHECK(part.result.completed.back() == pipeline_stage_name(stop));
    CHECK(std::filesystem::exists(tmp.path() / "bundle.json"));

    RunOptions rest{tmp.path(), std::nullopt, true};
    auto done = ssh::run({}, rest);
    CHECK(done.result.finished);
    CHECK(serialize(done.result.bundle) == serialize(fresh.result.bundle));
    CHECK(serialize(load_bundle(tmp.path() / "bundle.json")) == serialize(fresh.result.bundle));

    RunConfig other;
    other.epsilon = 0.2;
    CHECK_THROWS_AS(ssh::run(other, rest), ConfigError);
  }
}

TEST_CASE("ssh fixture: a transcript gap surfaces as a stage error") {
  json t = ssh::load("transcript.json");
  json kept = json::array();
  for (const auto& e : t["entries"])
    if (e["match"][0] != "TASK: name-template") kept.push_back(e);
  t["entries"] = kept;
  try {
    ssh::run({}, {}, t);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "name");
  }
}

TEST_CASE("ssh fixture: query suite ordering") {
  auto r = ssh::run();
  auto paths = r.index.paths();
  auto report = query::run_suite(query::parse_suite(ssh::load("queries.json")), ssh::lines(), r.result.bundle, &paths);
  for (const auto& row : report.rows) {
    CAPTURE(row.name);
    REQUIRE(row.custom.present);
    CHECK(row.custom.score.precision == 1.0);
    CHECK(row.custom.score.recall == 1.0);
  }
  CHECK(report.custom_ge_standardized);
  CHECK(report.custom_ge_substring);
  CHECK(report.standardized_f1 < 1.0);
  CHECK(report.substring_f1 < 1.0);
}
