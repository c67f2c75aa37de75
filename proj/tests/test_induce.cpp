#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "ssh_tree.hpp"
#include "logtree/bundle.hpp"
#include "logtree/error.hpp"
#include "logtree/induce.hpp"
#include "logtree/matcher.hpp"

using namespace logtree;
using namespace logtree::induce;
using nlohmann::json;

namespace {

// Independent check of a DBSCAN labelling: core points are exactly those with
// at least min_samples neighbours, clusters are the connected components of
// the core graph, border points join some adjacent core's cluster, and noise
// has no core neighbour.
void check_dbscan(const std::vector<double>& d, std::size_t n, double eps, std::size_t ms,
                  const std::vector<int>& labels) {
  REQUIRE(labels.size() == n);
  auto near = [&](std::size_t a, std::size_t b) { return d[a * n + b] <= eps; };
  std::vector<bool> core(n);
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t c = 0;
    for (std::size_t q = 0; q < n; ++q) c += near(p, q);
    core[p] = c >= ms;
  }
  // union-find over core points
  std::vector<std::size_t> up(n);
  for (std::size_t i = 0; i < n; ++i) up[i] = i;
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) { return up[x] == x ? x : up[x] = find(up[x]); };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (core[a] && core[b] && near(a, b)) up[find(a)] = find(b);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (core[a] && core[b]) CHECK((find(a) == find(b)) == (labels[a] == labels[b]));
  for (std::size_t p = 0; p < n; ++p) {
    if (core[p]) {
      CHECK(labels[p] >= 0);
      continue;
    }
    bool any = false, joined = false;
    for (std::size_t q = 0; q < n; ++q)
      if (core[q] && near(p, q)) {
        any = true;
        joined = joined || labels[q] == labels[p];
      }
    if (any)
      CHECK(joined);
    else
      CHECK(labels[p] == -1);
  }
}

std::string tokens_reply(const std::vector<Token>& toks) { return json{{"tokens", tokens_to_json(toks)}}.dump(); }

std::vector<Token> rest_of(const std::vector<Token>& full, std::size_t skip) {
  return std::vector<Token>(full.begin() + static_cast<std::ptrdiff_t>(skip), full.end());
}

const std::string kAcc1 = "Mar  9 23:46:29 puma25 sshd[17376]: Accepted conn user:root pw src={ip=10.35.161.71 port=59271}";
const std::string kAcc2 = "Mar  9 23:47:02 puma25 sshd[17380]: Accepted conn user:root key src={ip=10.35.161.9 port=40022}";
const std::string kAcc3 = "Mar 10 01:02:03 puma26 sshd[211]: Accepted conn user:root pw src={ip=10.0.0.2 port=22}";
const std::string kAcc4 = "Mar 10 01:02:09 puma26 sshd[212]: Accepted conn user:root pw src={ip=10.0.0.3 port=2222}";
const std::string kBob1 = "Mar 11 04:00:00 puma27 sshd[9]: Accepted conn user:bob pw src={ip=10.1.1.1 port=1000}";
const std::string kBob2 = "Mar 11 04:00:01 puma27 sshd[10]: Accepted conn user:bob key src={ip=10.1.1.2 port=1001}";
const std::string kFail1 = "Mar  9 23:46:30 puma25 sshd[17377]: Failed none for user admin";
const std::string kFail2 = "Mar  9 23:46:31 puma25 sshd[17378]: Failed none for user guest";
const std::string kFail3 = "Mar  9 23:46:35 puma25 sshd[17379]: Failed none for user oracle";

json describe_entries() {
  return json::array({
      {{"match", {"TASK: describe-line", "user:bob"}}, {"response", "Bob opened a session on the host."}},
      {{"match", {"TASK: describe-line", "Accepted conn"}}, {"response", "An accepted SSH connection for a user."}},
      {{"match", {"TASK: describe-line", "Failed none"}}, {"response", "A failed password attempt with no method."}},
      {{"match", {"TASK: confirm-cluster"}}, {"response", "{\"all_same\": true}"}},
  });
}

struct Rig {
  explicit Rig(json entries) : mock(json{{"entries", std::move(entries)}}), gw(mock, cache) {}
  llm::MockProvider mock;
  llm::ResponseCache cache;
  llm::Gateway gw;
};

Config small_config() {
  Config c;
  c.buffer_size = 100;
  return c;
}

}  // namespace

TEST_CASE("dbscan: mutually distant points are all noise") {
  const std::size_t n = 10;
  std::vector<double> d(n * n, 0.5);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0;
  std::vector<int> labels = dbscan(d, n, 0.05, 2);
  CHECK(std::all_of(labels.begin(), labels.end(), [](int l) { return l == -1; }));
}

TEST_CASE("dbscan: identical points form one cluster") {
  std::vector<llm::Embedding> pts(10, llm::Embedding{0.6, 0.8, 0.0});
  std::vector<double> d = distance_matrix(pts);
  std::vector<int> labels = dbscan(d, pts.size(), 0.05, 2);
  CHECK(std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; }));
}

TEST_CASE("dbscan: random point sets satisfy the cluster definition") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 30;
    std::vector<llm::Embedding> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({u(rng), u(rng), u(rng) * 0.2});
    double eps = 0.002 + u(rng) * 0.05;
    std::size_t ms = 1 + rng() % 4;
    std::vector<double> d = distance_matrix(pts);
    CHECK(d == distance_matrix_serial(pts));
    check_dbscan(d, n, eps, ms, dbscan(d, n, eps, ms));
  }
}

TEST_CASE("select_cluster: density, then size, then earliest member") {
  Cluster tight{{4, 5}, {}, {}, 0.01};
  Cluster loose{{0, 1, 2}, {}, {}, 0.04};
  Cluster single{{3}, {}, {}, 0};
  CHECK(select_cluster({loose, tight, single}) == 1);  // 200 > 75

  Cluster zero_a{{6, 7}, {}, {}, 0};
  Cluster zero_b{{1, 2, 3}, {}, {}, 0};
  CHECK(select_cluster({tight, zero_a, zero_b}) == 2);  // both infinitely dense, larger wins

  Cluster same_a{{8, 9}, {}, {}, 0.02};
  Cluster same_b{{2, 9}, {}, {}, 0.02};
  CHECK(select_cluster({same_a, same_b}) == 1);
  CHECK(select_cluster({single, Cluster{{0}, {}, {}, 0}}) == 1);
  CHECK_THROWS_AS(select_cluster({}), InputError);
}

TEST_CASE("induce: two formats become two templates sharing the prefix") {
  json entries = describe_entries();
  entries.push_back({{"match", {"TASK: propose-template", "Accepted conn"}}, {"response", tokens_reply(ssh_tree::accepted())}});
  entries.push_back({{"match", {"TASK: propose-template", "Failed none"}},
                     {"response", tokens_reply(rest_of(ssh_tree::failed(), ssh_tree::prefix().size()))}});
  Rig rig(entries);
  std::vector<std::string> corpus = {kFail1, kAcc1, kAcc2, kFail2, kAcc3, kFail3, kAcc4};
  Inducer ind(rig.gw, corpus, small_config());

  ind.fill_buffer();
  std::vector<Cluster> clusters = ind.cluster_buffer(ind.state().buffer);
  REQUIRE(clusters.size() == 2);
  CHECK(clusters[0].members == std::vector<std::size_t>{0, 3, 5});
  CHECK(clusters[1].members == std::vector<std::size_t>{1, 2, 4, 6});
  CHECK(select_cluster(clusters) == 1);

  std::vector<json> checkpoints;
  Report r = ind.run([&](const State& s) { checkpoints.push_back(s.to_json()); });
  CHECK(r.templates == 2);
  CHECK(r.matched_lines == corpus.size());
  CHECK(r.deferred_lines == 0);
  CHECK(checkpoints.size() == 2);

  const ParseTree& tree = ind.state().tree;
  CHECK(tree.node_count() == 23);
  CHECK(tree.check_tree().empty());
  CompiledTree ct(tree);
  for (const std::string& l : corpus) CHECK(ct.classify(l));

  // The second proposal prompt was anchored on the shared prefix and carried
  // the first accepted template as a worked example.
  const auto& prompts = rig.mock.prompts();
  auto it = std::find_if(prompts.begin(), prompts.end(), [](const std::string& p) {
    return p.rfind("TASK: propose-template", 0) == 0 && p.find("Failed none") != std::string::npos;
  });
  REQUIRE(it != prompts.end());
  CHECK(it->find("Prefix already parsed: <*> <*> sshd[<*>]: ") != std::string::npos);
  CHECK(it->find("Accepted conn") < it->find(llm::kQueryMarker));

  State back = State::from_json(checkpoints.back());
  CHECK(back.tree == tree);
  CHECK(back.accepted == 2);
  CHECK(back.examples.size() == 2);
}

TEST_CASE("induce: resuming from a checkpoint finishes the same tree") {
  json entries = describe_entries();
  entries.push_back({{"match", {"TASK: propose-template", "Accepted conn"}}, {"response", tokens_reply(ssh_tree::accepted())}});
  entries.push_back({{"match", {"TASK: propose-template", "Failed none"}},
                     {"response", tokens_reply(rest_of(ssh_tree::failed(), ssh_tree::prefix().size()))}});
  std::vector<std::string> corpus = {kFail1, kAcc1, kAcc2, kFail2, kAcc3, kFail3, kAcc4};

  Rig full(entries);
  Inducer a(full.gw, corpus, small_config());
  std::vector<json> checkpoints;
  a.run([&](const State& s) { checkpoints.push_back(s.to_json()); });

  Rig resumed(entries);
  Inducer b(resumed.gw, corpus, small_config());
  b.state() = State::from_json(checkpoints.front());
  b.run();
  CHECK(b.state().tree == a.state().tree);
}

TEST_CASE("induce: proposals that never compile are deferred with feedback") {
  json entries = describe_entries();
  std::vector<Token> bad = ssh_tree::failed();
  bad.back().text = "(\\S+";
  entries.push_back({{"match", {"TASK: propose-template", "Failed none"}}, {"response", tokens_reply(bad)}});
  Rig rig(entries);
  std::vector<std::string> corpus = {kFail1, kFail2};
  Inducer ind(rig.gw, corpus, small_config());
  Report r = ind.run();
  CHECK(r.templates == 0);
  CHECK(r.deferred_lines == 2);
  REQUIRE(!r.events.empty());
  CHECK(r.events.back().find("deferred 2 line(s)") == 0);
  bool saw_feedback = false;
  for (const std::string& p : rig.mock.prompts())
    saw_feedback = saw_feedback || (p.find("Attempt 1 was rejected: token 10 regex does not compile") != std::string::npos);
  CHECK(saw_feedback);
}

TEST_CASE("induce: proposal scoring and zero coverage") {
  json entries = describe_entries();
  std::vector<Token> wrong = ssh_tree::failed();
  wrong[6] = Token::constant("Rejected", " ");
  entries.push_back({{"match", {"TASK: propose-template", "Failed none"}}, {"response", tokens_reply(wrong)}});
  Rig rig(entries);
  std::vector<std::string> corpus = {kFail1, kFail2, kAcc1};
  Inducer ind(rig.gw, corpus, small_config());
  Candidate c = ind.score(ssh_tree::failed(), {0, 1, 2});
  CHECK(c.coverage == 2);
  CHECK(c.spillover == 0);

  ind.fill_buffer();
  std::vector<Cluster> clusters = ind.cluster_buffer(ind.state().buffer);
  CHECK_THROWS_AS(ind.propose_template(clusters.front(), clusters.front().members), ZeroCoverage);
}

TEST_CASE("induce: confirm keeps the subset the model names") {
  json entries = json::array({
      {{"match", {"TASK: describe-line"}}, {"response", "Some SSH event."}},
      {{"match", {"TASK: confirm-cluster", "Attempt 1 was rejected"}}, {"response", "{\"subset\": [2, 1]}"}},
      {{"match", {"TASK: confirm-cluster"}}, {"response", "{\"subset\": [1, 99]}"}},
  });
  Rig rig(entries);
  std::vector<std::string> corpus = {kFail1, kAcc1, kFail2};
  Inducer ind(rig.gw, corpus, small_config());
  ind.fill_buffer();
  std::vector<Cluster> clusters = ind.cluster_buffer(ind.state().buffer);
  REQUIRE(clusters.size() == 1);
  CHECK(ind.confirm_cluster(clusters.front()) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("induce: a too-general proposal is narrowed when formats differ") {
  json entries = describe_entries();
  std::vector<Token> general = ssh_tree::prefix();
  general.push_back(Token::variable(".+"));
  entries.push_back({{"match", {"TASK: propose-template", "Accepted conn"}}, {"response", tokens_reply(ssh_tree::accepted())}});
  entries.push_back({{"match", {"TASK: propose-template", "Failed none"}},
                     {"response", tokens_reply(rest_of(general, ssh_tree::prefix().size()))}});
  entries.push_back({{"match", {"TASK: same-format"}}, {"response", "{\"same_format\": false}"}});
  entries.push_back({{"match", {"TASK: narrow-template"}},
                     {"response", tokens_reply(rest_of(ssh_tree::failed(), ssh_tree::prefix().size()))}});
  Rig rig(entries);
  std::vector<std::string> corpus = {kAcc1, kAcc2, kAcc3, kAcc4, kFail1, kFail2, kFail3};
  Inducer ind(rig.gw, corpus, small_config());
  Report r = ind.run();
  CHECK(r.templates == 2);
  CHECK(r.matched_lines == corpus.size());
  CHECK(std::any_of(r.events.begin(), r.events.end(), [](const std::string& e) { return e.rfind("narrowed", 0) == 0; }));
  CompiledTree ct(ind.state().tree);
  CHECK(ct.matching_leaves(kAcc1).size() == 1);
}

TEST_CASE("induce: a more general template of the same format replaces the old one") {
  json entries = describe_entries();
  std::vector<Token> root_only = ssh_tree::accepted();
  root_only[9] = Token::constant("root", " ");
  entries.push_back({{"match", {"TASK: propose-template", "user:root"}}, {"response", tokens_reply(root_only)}});
  entries.push_back({{"match", {"TASK: propose-template", "user:bob"}},
                     {"response", tokens_reply(rest_of(ssh_tree::accepted(), 9))}});
  entries.push_back({{"match", {"TASK: same-format"}}, {"response", "{\"same_format\": true}"}});
  Rig rig(entries);
  std::vector<std::string> corpus = {kAcc1, kAcc2, kAcc3, kBob1, kBob2};
  Inducer ind(rig.gw, corpus, small_config());
  Report r = ind.run();
  CHECK(r.templates == 1);
  CHECK(r.matched_lines == corpus.size());
  CHECK(std::any_of(r.events.begin(), r.events.end(), [](const std::string& e) { return e.rfind("replaced", 0) == 0; }));
  CHECK(ind.state().tree.tokens_of(*ind.state().tree.leaves().begin()) == ssh_tree::accepted());
}
