// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/induce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "logtree/error.hpp"
#include "logtree/matcher.hpp"
#include "logtree/regex.hpp"

namespace logtree::induce {

using nlohmann::json;

std::vector<double> distance_matrix_serial(const std::vector<llm::Embedding>& points) {
  const std::size_t n = points.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i * n + j] = d[j * n + i] = 1.0 - llm::cosine(points[i], points[j]);
  return d;
}

std::vector<double> distance_matrix(const std::vector<llm::Embedding>& points) {
  const std::size_t n = points.size();
  std::vector<double> d(n * n, 0.0);
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d[i * n + j] = 1.0 - llm::cosine(points[std::min(i, j)], points[std::max(i, j)]);
  }
  return d;
}

std::vector<int> dbscan(const std::vector<double>& dist, std::size_t n, double eps, std::size_t min_samples) {
  constexpr int kUnvisited = -2, kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  auto neighbours = [&](std::size_t p) {
    std::vector<std::size_t> out;
    for (std::size_t q = 0; q < n; ++q)
      if (dist[p * n + q] <= eps) out.push_back(q);
    return out;
  };
  int next = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (label[p] != kUnvisited) continue;
    std::vector<std::size_t> seeds = neighbours(p);
    if (seeds.size() < min_samples) {
      label[p] = kNoise;
      continue;
    }
    int c = next++;
    label[p] = c;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      std::size_t q = seeds[k];
      if (label[q] == kNoise) label[q] = c;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      std::vector<std::size_t> more = neighbours(q);
      if (more.size() >= min_samples) seeds.insert(seeds.end(), more.begin(), more.end());
    }
  }
  return label;
}

std::size_t select_cluster(const std::vector<Cluster>& clusters) {
  if (clusters.empty()) throw InputError("select_cluster needs at least one cluster");
  auto density = [](const Cluster& c) {
    if (c.members.size() < 2) return 0.0;
    if (c.mean_distance <= 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(c.members.size()) / c.mean_distance;
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < clusters.size(); ++i) {
    const Cluster& a = clusters[i];
    const Cluster& b = clusters[best];
    double da = density(a), db = density(b);
    if (da != db) {
      if (da > db) best = i;
      continue;
    }
    if (a.members.size() != b.members.size()) {
      if (a.members.size() > b.members.size()) best = i;
      continue;
    }
    if (a.members.front() < b.members.front()) best = i;
  }
  return best;
}

json State::to_json() const {
  Bundle b;
  b.tree = tree;
  return json{{"tree", logtree::to_json(b)}, {"cursor", cursor},     {"buffer", buffer},
              {"deferred", deferred},        {"examples", examples.to_json()}, {"accepted", accepted},
              {"rounds", rounds}};
}

State State::from_json(const json& doc) {
  State s;
  try {
    s.tree = logtree::from_json(doc.at("tree")).tree;
    s.cursor = doc.at("cursor").get<std::size_t>();
    s.buffer = doc.at("buffer").get<std::vector<std::size_t>>();
    s.deferred = doc.at("deferred").get<std::set<std::size_t>>();
    s.examples = llm::ExampleStore::from_json(doc.at("examples"));
    s.accepted = doc.at("accepted").get<std::size_t>();
    s.rounds = doc.at("rounds").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad induction checkpoint: ") + e.what());
  }
  return s;
}

Inducer::Inducer(llm::Gateway& gateway, const std::vector<std::string>& corpus, Config config)
    : gw_(gateway), corpus_(corpus), config_(std::move(config)) {
  if (config_.buffer_size < 1) throw ConfigError("buffer size must be positive");
  if (config_.max_rounds < 1) throw ConfigError("max_rounds must be positive");
  if (config_.epsilon <= 0) throw ConfigError("epsilon must be positive");
}

void Inducer::log(std::string event) { events_.push_back(std::move(event)); }

void Inducer::fill_buffer() {
  CompiledTree ct(state_.tree);
  std::vector<std::size_t> kept;
  for (std::size_t o : state_.buffer)
    if (!ct.classify(corpus_[o]) && !state_.deferred.count(o)) kept.push_back(o);
  state_.buffer = std::move(kept);
  while (state_.buffer.size() < config_.buffer_size && state_.cursor < corpus_.size()) {
    std::size_t o = state_.cursor++;
    if (corpus_[o].empty()) continue;
    if (!ct.classify(corpus_[o])) state_.buffer.push_back(o);
  }
}

std::vector<std::size_t> Inducer::parsed_lines() const {
  CompiledTree ct(state_.tree);
  std::vector<std::string> seen(corpus_.begin(), corpus_.begin() + static_cast<std::ptrdiff_t>(state_.cursor));
  std::vector<std::optional<NodeId>> owner = classify_all(ct, seen);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < owner.size(); ++i)
    if (owner[i]) out.push_back(i);
  return out;
}

std::string Inducer::line_description(std::size_t ordinal) { return gw_.describe(corpus_[ordinal], "line"); }

std::vector<Cluster> Inducer::cluster_buffer(const std::vector<std::size_t>& buffer) {
  if (buffer.empty()) throw InputError("cannot cluster an empty buffer");
  CompiledTree ct(state_.tree);
  std::map<std::vector<NodeId>, std::vector<std::size_t>> coarse;
  for (std::size_t o : buffer) coarse[ct.deepest_prefix(corpus_[o]).path].push_back(o);

  std::vector<Cluster> out;
  for (auto& [anchor, members] : coarse) {
    std::sort(members.begin(), members.end());
    std::vector<llm::Embedding> points;
    for (std::size_t o : members) points.push_back(gw_.embed(line_description(o)));
    std::vector<double> dist = distance_matrix(points);
    std::vector<int> labels = dbscan(dist, members.size(), config_.epsilon, config_.min_samples);
    std::map<int, std::vector<std::size_t>> groups;  // label -> indices into members
    int noise = -1000000;
    for (std::size_t i = 0; i < members.size(); ++i) groups[labels[i] >= 0 ? labels[i] : noise--].push_back(i);
    for (auto& [_, idx] : groups) {
      Cluster c;
      c.anchor = anchor;
      c.centroid.assign(points[idx.front()].size(), 0.0);
      double total = 0;
      std::size_t pairs = 0;
      for (std::size_t a = 0; a < idx.size(); ++a) {
        c.members.push_back(members[idx[a]]);
        for (std::size_t k = 0; k < c.centroid.size(); ++k) c.centroid[k] += points[idx[a]][k] / idx.size();
        for (std::size_t b = a + 1; b < idx.size(); ++b, ++pairs) total += dist[idx[a] * members.size() + idx[b]];
      }
      c.mean_distance = pairs ? total / static_cast<double>(pairs) : 0.0;
      std::sort(c.members.begin(), c.members.end());
      out.push_back(std::move(c));
    }
  }
  std::sort(out.begin(), out.end(), [](const Cluster& a, const Cluster& b) { return a.members.front() < b.members.front(); });
  return out;
}

namespace {

std::string numbered_lines(const std::vector<std::string>& corpus, const std::vector<std::size_t>& ords, std::size_t cap) {
  std::string out;
  for (std::size_t i = 0; i < ords.size() && i < cap; ++i)
    out += "[" + std::to_string(ords[i] + 1) + "] " + corpus[ords[i]] + "\n";
  return out;
}

std::string anchor_text(const ParseTree& tree, const std::vector<NodeId>& anchor) {
  std::vector<Token> toks;
  for (NodeId id : anchor) toks.push_back(tree.node(id).token);
  return toks.empty() ? std::string("(none)") : wildcard_form(toks);
}

std::vector<Token> anchor_tokens(const ParseTree& tree, const std::vector<NodeId>& anchor) {
  std::vector<Token> toks;
  for (NodeId id : anchor) toks.push_back(tree.node(id).token);
  return toks;
}

// Decodes {"tokens":[...]} and checks every token; throws InvalidReply.
std::vector<Token> decode_tokens(const std::string& reply) {
  json doc = llm::extract_json(reply);
  if (!doc.is_object() || !doc.contains("tokens")) throw InvalidReply("reply must be an object with a 'tokens' array");
  std::vector<Token> toks;
  try {
    toks = tokens_from_json(doc["tokens"]);
  } catch (const ParseError& e) {
    throw InvalidReply(std::string("malformed tokens: ") + e.what());
  }
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].is_variable()) {
      std::string diag = regex::Pattern::check(toks[i].text);
      if (!diag.empty()) throw InvalidReply("token " + std::to_string(i) + " regex does not compile: " + diag);
    } else if (toks[i].text.empty()) {
      throw InvalidReply("token " + std::to_string(i) + " is a constant with empty text");
    }
  }
  return toks;
}

const char* kTokenRules =
    "Split the text into tokens. Each token is either a constant (exact text) or a variable (a regular "
    "expression). Give every token the exact separator bytes that follow it in the line (\"sep\", often a single "
    "space, empty when the next token starts immediately). Regexes use a portable subset: character classes, "
    "\\d \\s \\S \\w, quantifiers * + ? {m,n}, alternation and (?:...) groups; no anchors, backreferences or "
    "lookaround. Make each regex as specific as the values allow so adjacent variables stay separable.\n"
    "Reply with JSON: {\"tokens\": [{\"kind\": \"const\", \"text\": \"...\", \"sep\": \" \"}, "
    "{\"kind\": \"var\", \"regex\": \"...\", \"sep\": \"\"}]}\n";

}  // namespace

std::vector<std::size_t> Inducer::confirm_cluster(const Cluster& cluster) {
  if (cluster.members.empty()) throw InputError("cannot confirm an empty cluster");
  if (cluster.members.size() == 1) return cluster.members;
  std::string prompt =
      "TASK: confirm-cluster\nThe log lines below were grouped together. Decide whether they should all be parsed by "
      "a single template. Reply with JSON {\"all_same\": true} if so; otherwise reply {\"subset\": [ids]} with the "
      "ids of the largest group of lines that do share one template.";
  prompt += llm::kQueryMarker;
  prompt += numbered_lines(corpus_, cluster.members, 40);
  std::set<std::size_t> members(cluster.members.begin(), cluster.members.end());
  return llm::repair_loop<std::vector<std::size_t>>(
      [&](const std::string& feedback, int) {
        json doc = llm::extract_json(gw_.complete_one(llm::with_feedback(prompt, feedback)));
        if (!doc.is_object()) throw InvalidReply("reply must be a JSON object");
        if (doc.value("all_same", false)) return cluster.members;
        if (!doc.contains("subset") || !doc["subset"].is_array())
          throw InvalidReply("reply must carry \"all_same\": true or a \"subset\" array");
        std::vector<std::size_t> subset;
        for (const json& id : doc["subset"]) {
          if (!id.is_number_unsigned() || id.get<std::size_t>() == 0) throw InvalidReply("subset ids must be positive integers");
          subset.push_back(id.get<std::size_t>() - 1);
        }
        std::sort(subset.begin(), subset.end());
        subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
        return subset;
      },
      [&](const std::vector<std::size_t>& subset) -> std::optional<std::string> {
        if (subset.empty()) return std::string("the subset is empty; name at least one line id");
        for (std::size_t o : subset)
          if (!members.count(o)) return "line id " + std::to_string(o + 1) + " is not one of the listed lines";
        return std::nullopt;
      },
      config_.repair_iters);
}

Candidate Inducer::score(std::vector<Token> tokens, const std::vector<std::size_t>& lines) const {
  Candidate c;
  ParseTree single;
  single.insert_template(tokens);
  CompiledTree ct(single);
  for (std::size_t o : lines)
    if (ct.classify(corpus_[o])) ++c.coverage;
  for (std::size_t o : parsed_lines())
    if (ct.classify(corpus_[o])) ++c.spillover;
  c.tokens = std::move(tokens);
  return c;
}

Candidate Inducer::propose_template(const Cluster& cluster, const std::vector<std::size_t>& lines) {
  const ParseTree& tree = state_.tree;
  std::vector<Token> anchor = anchor_tokens(tree, cluster.anchor);
  CompiledTree ct(tree);

  std::string first_desc = line_description(lines.front());
  std::string examples;
  if (config_.fewshot)
    examples = llm::render_examples(llm::nearest_examples(gw_, state_.examples, first_desc, config_.fewshot_k));

  std::string query = "Prefix already parsed: " + anchor_text(tree, cluster.anchor) + "\nLines:\n";
  std::vector<std::string> remainders;
  for (std::size_t i = 0; i < lines.size() && i < config_.prompt_lines; ++i) {
    const std::string& line = corpus_[lines[i]];
    std::size_t consumed = anchor.empty() ? 0 : ct.deepest_prefix(line).consumed;
    remainders.push_back(line.substr(consumed));
    query += line + "\n";
  }
  query += "Text to tokenize (the part after the prefix, one line each):\n";
  for (const std::string& r : remainders) query += r + "\n";

  std::string prompt = "TASK: propose-template\nWrite a template that parses every line below. Think step by step "
                       "about which parts are fixed and which vary, then answer. " +
                       std::string(kTokenRules) + examples + llm::kQueryMarker + query;

  std::vector<std::vector<Token>> samples = llm::repair_loop<std::vector<std::vector<Token>>>(
      [&](const std::string& feedback, int) {
        std::vector<std::string> replies = gw_.complete(llm::with_feedback(prompt, feedback), config_.sampling);
        std::vector<std::vector<Token>> ok;
        std::string first_error;
        for (const std::string& r : replies) {
          try {
            std::vector<Token> t = decode_tokens(r);
            if (t.empty() && anchor.empty()) throw InvalidReply("the template has no tokens");
            ok.push_back(std::move(t));
          } catch (const InvalidReply& e) {
            if (first_error.empty()) first_error = e.what();
          }
        }
        if (ok.empty()) throw InvalidReply(first_error);
        return ok;
      },
      [](const std::vector<std::vector<Token>>&) { return std::optional<std::string>(); }, config_.repair_iters);

  std::vector<Candidate> scored;
  for (const auto& s : samples) {
    std::vector<Token> full = anchor;
    full.insert(full.end(), s.begin(), s.end());
    scored.push_back(score(std::move(full), lines));
  }
  auto key = [](const Candidate& c) { return std::make_pair(c.coverage, -static_cast<long long>(c.spillover)); };
  auto best = key(scored.front());
  for (const Candidate& c : scored) best = std::max(best, key(c));
  if (best.first == 0) throw ZeroCoverage("no sampled template matches any line of the cluster");
  std::vector<Candidate> top;
  for (Candidate& c : scored)
    if (key(c) == best) top.push_back(std::move(c));
  std::size_t pick = llm::majority_vote(top, [](const Candidate& c) { return tokens_to_json(c.tokens).dump(); });
  return top[pick];
}

Decision Inducer::resolve_overlap(const Candidate& candidate, const std::vector<std::size_t>& lines) {
  Decision d;
  d.candidate = candidate;
  if (candidate.spillover == 0) return d;

  const ParseTree& tree = state_.tree;
  CompiledTree current(tree);
  ParseTree single;
  single.insert_template(candidate.tokens);
  CompiledTree cand(single);

  std::vector<std::size_t> parsed = parsed_lines();
  std::map<NodeId, std::vector<std::size_t>> owned, overlapped;
  for (std::size_t o : parsed) {
    NodeId owner = *current.classify(corpus_[o]);
    owned[owner].push_back(o);
    if (cand.classify(corpus_[o])) overlapped[owner].push_back(o);
  }

  std::string query = "New template: " + wildcard_form(candidate.tokens) + "\nNew lines:\n" +
                      numbered_lines(corpus_, lines, config_.overlap_sample);
  for (const auto& [leaf, ords] : overlapped) {
    query += "Existing template " + std::to_string(leaf) + ": " + wildcard_form(tree, tree.template_of(leaf)) + "\n";
    query += numbered_lines(corpus_, ords, config_.overlap_sample);
  }
  std::string prompt =
      "TASK: same-format\nA new template also matches lines that existing templates already parse. Decide whether "
      "the new lines and the existing lines are the same log format (same event, same fields). Reply with JSON "
      "{\"same_format\": true} or {\"same_format\": false}.";
  prompt += llm::kQueryMarker + query;

  bool same = llm::repair_loop<bool>(
      [&](const std::string& feedback, int) {
        json doc = llm::extract_json(gw_.complete_one(llm::with_feedback(prompt, feedback)));
        if (!doc.is_object() || !doc.contains("same_format") || !doc["same_format"].is_boolean())
          throw InvalidReply("reply must be {\"same_format\": true|false}");
        return doc["same_format"].get<bool>();
      },
      [](const bool&) { return std::optional<std::string>(); }, config_.repair_iters);

  if (same) {
    for (const auto& [leaf, ords] : overlapped)
      if (ords.size() == owned[leaf].size()) d.replaced.push_back(leaf);
    d.kind = d.replaced.empty() ? Decision::Kind::accept : Decision::Kind::replace_old;
    return d;
  }

  std::vector<std::size_t> spill;
  for (const auto& [_, ords] : overlapped) spill.insert(spill.end(), ords.begin(), ords.end());
  std::sort(spill.begin(), spill.end());
  // The anchor is whatever prefix of the candidate already exists in the tree.
  std::vector<Token> anchor;
  const std::vector<NodeId>* level = &tree.roots();
  for (const Token& t : candidate.tokens) {
    auto it = std::find_if(level->begin(), level->end(), [&](NodeId id) { return tree.node(id).token == t; });
    if (it == level->end()) break;
    anchor.push_back(t);
    level = &tree.node(*it).children;
  }
  if (anchor.size() == candidate.tokens.size()) anchor.pop_back();
  std::vector<Token> rest(candidate.tokens.begin() + static_cast<std::ptrdiff_t>(anchor.size()), candidate.tokens.end());

  std::string nprompt =
      "TASK: narrow-template\nThe candidate template matches lines that belong to other templates. Make its regexes "
      "or constants more specific so it still matches the lines it must match and none of the others. Reply with "
      "the tokens for the text after the prefix. " +
      std::string(kTokenRules);
  nprompt += llm::kQueryMarker;
  nprompt += "Prefix already parsed: " + (anchor.empty() ? std::string("(none)") : wildcard_form(anchor)) + "\n";
  nprompt += "Candidate tokens: " + tokens_to_json(rest).dump() + "\nMust match:\n" +
             numbered_lines(corpus_, lines, config_.overlap_sample) + "Must not match:\n" +
             numbered_lines(corpus_, spill, config_.overlap_sample);

  d.candidate = llm::repair_loop<Candidate>(
      [&](const std::string& feedback, int) {
        std::vector<Token> toks = decode_tokens(gw_.complete_one(llm::with_feedback(nprompt, feedback)));
        std::vector<Token> full = anchor;
        full.insert(full.end(), toks.begin(), toks.end());
        if (full.empty()) throw InvalidReply("the template has no tokens");
        return score(std::move(full), lines);
      },
      [](const Candidate& c) -> std::optional<std::string> {
        if (c.coverage == 0) return std::string("the narrowed template matches none of the lines it must match");
        if (c.spillover > 0)
          return "the narrowed template still matches " + std::to_string(c.spillover) + " line(s) of other templates";
        return std::nullopt;
      },
      config_.narrow_iters);
  d.kind = Decision::Kind::narrowed;
  return d;
}

bool Inducer::step() {
  fill_buffer();
  if (state_.buffer.empty()) return false;
  ++state_.rounds;
  std::vector<Cluster> clusters = cluster_buffer(state_.buffer);
  const Cluster& cluster = clusters[select_cluster(clusters)];

  auto defer = [&](const std::vector<std::size_t>& ords, const std::string& why) {
    for (std::size_t o : ords) state_.deferred.insert(o);
    log("deferred " + std::to_string(ords.size()) + " line(s) starting at line " + std::to_string(ords.front() + 1) +
        ": " + why);
    fill_buffer();
  };

  std::vector<std::size_t> lines;
  try {
    lines = confirm_cluster(cluster);
  } catch (const RepairExhausted& e) {
    defer(cluster.members, e.what());
    return true;
  }

  std::string last_error = "no proposal";
  for (std::size_t round = 0; round < config_.max_rounds; ++round) {
    Decision d;
    try {
      Candidate c = propose_template(cluster, lines);
      d = resolve_overlap(c, lines);
    } catch (const ZeroCoverage& e) {
      last_error = e.what();
      continue;
    } catch (const RepairExhausted& e) {
      last_error = e.what();
      continue;
    }

    ParseTree before = state_.tree;
    std::vector<std::size_t> matched_before = parsed_lines();
    for (NodeId leaf : d.replaced) state_.tree.remove_template(leaf);
    NodeId leaf = state_.tree.insert_template(d.candidate.tokens);
    if (!d.replaced.empty()) {
      CompiledTree after(state_.tree);
      bool superset = true;
      for (std::size_t o : matched_before) superset = superset && after.classify(corpus_[o]).has_value();
      if (!superset) {
        state_.tree = before;
        leaf = state_.tree.insert_template(d.candidate.tokens);
        log("replacement would lose lines; kept the old templates");
        d.replaced.clear();
      }
    }
    std::string kind = d.kind == Decision::Kind::narrowed ? "narrowed" : d.replaced.empty() ? "accepted" : "replaced";
    log(kind + " template " + std::to_string(leaf) + ": " + wildcard_form(d.candidate.tokens));

    std::string desc = line_description(lines.front());
    std::vector<Token> anchor = anchor_tokens(before, cluster.anchor);
    std::vector<Token> rest(d.candidate.tokens.begin() + static_cast<std::ptrdiff_t>(std::min(anchor.size(), d.candidate.tokens.size())),
                            d.candidate.tokens.end());
    state_.examples.add(llm::Example{desc, gw_.embed(desc), corpus_[lines.front()], json{{"tokens", tokens_to_json(rest)}}.dump()});
    ++state_.accepted;
    fill_buffer();
    return true;
  }
  defer(lines, last_error);
  return true;
}

Report Inducer::run(const std::function<void(const State&)>& checkpoint) {
  while (step()) {
    if (checkpoint) checkpoint(state_);
  }
  Report r;
  r.templates = state_.tree.leaf_count();
  r.matched_lines = 0;
  CompiledTree ct(state_.tree);
  for (const std::string& l : corpus_)
    if (!l.empty() && ct.classify(l)) ++r.matched_lines;
  r.deferred_lines = state_.deferred.size();
  r.events = events_;
  return r;
}

}  // namespace logtree::induce
