#include <random>

#include "doctest.h"
#include "logtree/error.hpp"
#include "logtree/query.hpp"

using namespace logtree;
using namespace logtree::query;
using nlohmann::json;

namespace {

json k(const char* t, const char* sep = " ") { return {{"kind", "const"}, {"text", t}, {"sep", sep}}; }
json v(const char* re, const char* field, const char* sep = " ") {
  json o{{"kind", "var"}, {"regex", re}, {"sep", sep}};
  if (*field) o["field"] = field;
  return o;
}

// A DHCP-flavoured bundle: leases and acknowledgements.
Bundle dhcp_bundle() {
  json doc = {
      {"fields",
       {{{"name", "time"}, {"description", "Timestamp."}, {"temporal", true}},
        {{"name", "log_host"}, {"description", "Host that logged."}},
        {{"name", "assigned_ip"}, {"description", "Leased address."}},
        {{"name", "client_mac"}, {"description", "Client hardware address."}},
        {{"name", "lease_seconds"}, {"description", "Lease length."}}}},
      {"templates",
       {{{"description", "lease"},
         {"tokens",
          {v("[A-Z][a-z]{2} +\\d+ \\d\\d:\\d\\d:\\d\\d", "time"), v("\\S+", "log_host"), k("dhclient:"), k("bound"),
           k("to"), v("[0-9.]+", "assigned_ip"), k("--"), k("renewal"), k("in"), v("\\d+", "lease_seconds"),
           k("seconds.", "")}}},
        {{"description", "ack"},
         {"tokens",
          {v("[A-Z][a-z]{2} +\\d+ \\d\\d:\\d\\d:\\d\\d", "time"), v("\\S+", "log_host"), k("dhcpd:"), k("DHCPACK"),
           k("on"), v("[0-9.]+", "assigned_ip"), k("to"), v("[0-9a-f:]+", "client_mac", "")}}}}},
      {"mappings", {{"assigned_ip", {"dst_endpoint.ip"}}, {"log_host", {"device.hostname"}}, {"time", {"time_dt"}}}}};
  return build_bundle(doc);
}

std::vector<std::string> dhcp_lines() {
  return {
      "Mar 30 23:59:01 laphroaig dhclient: bound to 10.0.0.5 -- renewal in 300 seconds.",
      "Mar 31 00:10:02 laphroaig dhcpd: DHCPACK on 10.0.0.9 to aa:bb:cc:dd:ee:ff",
      "Apr  1 08:00:00 talisker dhclient: bound to 255.255.255.255 -- renewal in 60 seconds.",
      "Apr  1 09:00:00 laphroaig dhclient: bound to 10.0.0.7 -- renewal in 1800 seconds.",
      "something unparsed bound to laphroaig",
  };
}

std::vector<std::size_t> q(const std::string& text) {
  Bundle b = dhcp_bundle();
  return run_query(ingest_rows(b, dhcp_lines()), parse_query(text), b);
}

}  // namespace

TEST_CASE("query text round trip and errors") {
  QuerySpec s = parse_query("; leases\n(query custom (and (exists assigned_ip) (eq log_host \"laphroaig\") (gt lease_seconds 100)))");
  CHECK(s.form == Form::custom);
  CHECK(s.root.kind == Expr::Kind::all);
  CHECK(s.root.children.size() == 3);
  QuerySpec again = parse_query(to_text(s));
  CHECK(to_text(again) == to_text(s));
  CHECK(parse_query("(exists x)").form == Form::custom);
  CHECK(parse_query("(query standardized (eq attr:device.hostname \"a\\\"b\"))").root.value == "a\"b");

  auto location = [](const char* text) {
    try {
      parse_query(text);
    } catch (const ParseError& e) {
      return e.location();
    }
    return std::string("none");
  };
  CHECK(location("(and)") == "1:1");
  CHECK(location("(eq x)") == "1:6");
  CHECK(location("(gt x abc)") == "1:7");
  CHECK(location("(frob x)") == "1:2");
  CHECK(location("(exists x) (exists y)") == "1:12");
  CHECK(location("(query custom\n  (eq x \"open") == "2:9");
}

TEST_CASE("custom queries over DHCP leases") {
  CHECK(q("(and (exists assigned_ip) (eq log_host \"laphroaig\"))") == std::vector<std::size_t>{1, 2, 4});
  CHECK(q("(and (const \"bound to\") (eq log_host \"laphroaig\"))") == std::vector<std::size_t>{1, 4});
  CHECK(q("(ne log_host \"laphroaig\")") == std::vector<std::size_t>{3});
  CHECK(q("(not (eq log_host \"laphroaig\"))") == std::vector<std::size_t>{3});
  CHECK(q("(ge lease_seconds 300)") == std::vector<std::size_t>{1, 4});
  CHECK(q("(lt log_host 5)").empty());  // not numeric: false
  CHECK(q("(contains client_mac \"cc:dd\")") == std::vector<std::size_t>{2});
  // syslog days are ordered across the month boundary once normalized
  CHECK(q("(range time \"Mar 31 00:00:00\" \"Apr  2 00:00:00\")") == std::vector<std::size_t>{2, 3, 4});
  CHECK(q("(query standardized (eq device.hostname \"talisker\"))") == std::vector<std::size_t>{3});
  CHECK(q("(query standardized (and (exists dst_endpoint.ip) (exists field:client_mac)))") == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(q("(exists nope)"), QueryError);
  CHECK_THROWS_AS(q("(query standardized (exists src_endpoint.ip))"), QueryError);
  Bundle b = dhcp_bundle();
  CHECK(run_query({}, parse_query("(exists time)"), b).empty());
  std::set<std::string> tax = {"src_endpoint.ip", "dst_endpoint.ip", "device.hostname", "time_dt"};
  CHECK(run_query(ingest_rows(b, dhcp_lines()), parse_query("(query standardized (exists src_endpoint.ip))"), b, &tax).empty());
}

TEST_CASE("timestamp normalization") {
  CHECK(normalize_timestamp("Mar  9 23:46:29") == "03-09 23:46:29");
  CHECK(normalize_timestamp(" Dec 31 00:00:00 ") == "12-31 00:00:00");
  CHECK(normalize_timestamp("2024-03-09T10:00:00Z") == "2024-03-09T10:00:00Z");
  CHECK(normalize_timestamp("Marvel 9") == "Marvel 9");
}

TEST_CASE("substring pipelines") {
  auto lines = dhcp_lines();
  auto bound = run_substring(lines, parse_pipeline("fgrep \"bound to\""));
  auto host = run_substring(lines, parse_pipeline("fgrep laphroaig"));
  auto both = run_substring(lines, parse_pipeline("fgrep \"bound to\" | fgrep \"laphroaig\""));
  std::vector<std::size_t> inter;
  std::set_intersection(bound.begin(), bound.end(), host.begin(), host.end(), std::back_inserter(inter));
  CHECK(both == inter);
  CHECK(both == std::vector<std::size_t>{1, 4, 5});  // the unparsed line is caught too
  CHECK(run_substring(lines, parse_pipeline("fgrep \"bound to\" | fgrep -v \"255.255.255.255\"")) ==
        std::vector<std::size_t>{1, 4, 5});
  CHECK(run_substring({}, parse_pipeline("fgrep x")).empty());
  CHECK_THROWS_AS(parse_pipeline(""), ParseError);
  CHECK_THROWS_AS(parse_pipeline("grep x"), ParseError);
  CHECK_THROWS_AS(parse_pipeline("fgrep x |"), ParseError);
}

TEST_CASE("precision and recall") {
  CHECK(score({1, 2}, {1, 2}).precision == 1.0);
  CHECK(score({1, 2}, {1, 2}).recall == 1.0);
  Score half = score({1, 2, 3, 4}, {1, 2});
  CHECK(half.precision == 0.5);
  CHECK(half.recall == 1.0);
  CHECK(score({1}, {2}).f1() == 0.0);
  CHECK(score({}, {}).precision == 1.0);
  CHECK(score({}, {1}).flagged);
  CHECK(score({}, {1}).precision == 0.0);
  CHECK(score({1}, {}).recall == 1.0);
}

TEST_CASE("disjunction widens and conjunction narrows results") {
  Bundle b = dhcp_bundle();
  auto rows = ingest_rows(b, dhcp_lines());
  const char* atoms[] = {"(eq log_host \"laphroaig\")", "(gt lease_seconds 100)", "(const \"DHCPACK\")",
                         "(exists client_mac)", "(contains assigned_ip \"10.\")", "(not (exists lease_seconds))"};
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::string a = atoms[rng() % 6], c = atoms[rng() % 6];
    auto ra = run_query(rows, parse_query(a), b);
    auto rc = run_query(rows, parse_query(c), b);
    auto ror = run_query(rows, parse_query("(or " + a + " " + c + ")"), b);
    auto rand_ = run_query(rows, parse_query("(and " + a + " " + c + ")"), b);
    CHECK(std::includes(ror.begin(), ror.end(), ra.begin(), ra.end()));
    CHECK(std::includes(ror.begin(), ror.end(), rc.begin(), rc.end()));
    CHECK(std::includes(ra.begin(), ra.end(), rand_.begin(), rand_.end()));
    CHECK(rand_ == run_query_serial(rows, parse_query("(and " + a + " " + c + ")"), b));
  }
}

TEST_CASE("records read back from ingest output") {
  Bundle b = dhcp_bundle();
  CompiledTree t(b.tree);
  std::string jsonl;
  auto lines = dhcp_lines();
  auto res = ingest_serial(t, lines);
  for (std::size_t i = 0; i < res.size(); ++i) jsonl += record_json(res[i], i + 1, b, true).dump() + "\n";
  auto rows = rows_from_jsonl(jsonl);
  REQUIRE(rows.size() == 4);
  auto direct = ingest_rows(b, lines);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].line_number == direct[i].line_number);
    CHECK(rows[i].fields == direct[i].fields);
    CHECK(rows[i].attrs.size() == direct[i].attrs.size());
  }
  CHECK_THROWS_AS(rows_from_jsonl("{\"template_id\":1}\n"), ParseError);
}

TEST_CASE("suite harness compares the three forms") {
  json doc = {{"queries",
               {{{"name", "leases on laphroaig"},
                 {"custom", "(and (const \"bound to\") (eq log_host \"laphroaig\"))"},
                 {"standardized", "(and (exists dst_endpoint.ip) (eq device.hostname \"laphroaig\"))"},
                 {"substring", "fgrep \"bound to\" | fgrep laphroaig"},
                 {"golden", {1, 4}}}}}};
  auto suite = parse_suite(doc);
  Bundle b = dhcp_bundle();
  SuiteReport r = run_suite(suite, dhcp_lines(), b);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].custom.score.f1() == 1.0);
  CHECK(r.rows[0].standardized.score.precision == doctest::Approx(2.0 / 3.0));  // the ACK also has both attributes
  CHECK(r.rows[0].substring.score.precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.custom_ge_standardized);
  CHECK(r.custom_ge_substring);
  CHECK(r.to_json()["queries"][0]["name"] == "leases on laphroaig");
  CHECK_THROWS_AS(parse_suite(json{{"queries", {{{"name", "a"}, {"golden", {0}}}}}}), ParseError);
  CHECK_THROWS_AS(parse_suite(json{{"queries", {{{"name", "a"}, {"custom", "(query standardized (exists x))"}, {"golden", json::array()}}}}}),
                  ParseError);
}
