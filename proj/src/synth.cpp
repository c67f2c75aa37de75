// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/synth.hpp"

#include <array>
#include <set>

#include "logtree/regex.hpp"

namespace logtree::synth {

namespace {

struct VarKind {
  const char* pattern;
  const char* name;
};

constexpr std::array<VarKind, 9> kVars = {{
    {R"(\d+)", "count"},
    {R"(\S+)", "token"},
    {R"([a-z]+)", "word"},
    {R"(\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3})", "ip"},
    {R"([0-9a-f]{4,12})", "hex"},
    {R"(\w+(?:-\w+)*)", "ident"},
    {R"([A-Z][a-z]{2,6})", "label"},
    {R"(-?\d+(?:\.\d+)?)", "number"},
    {R"([a-z]+(?:/[a-z0-9]+)+)", "path"},
}};

constexpr std::array<const char*, 24> kWords = {
    "started", "stopped", "accepted", "rejected", "opened", "closed",  "session", "request",
    "reply",   "worker",  "queue",    "disk",     "lease",  "offer",   "bound",   "user",
    "client",  "server",  "timeout",  "retry",    "config", "reload",  "error",   "notice"};

constexpr std::array<const char*, 6> kPunct = {"=", ":", "[", "]", ",", "/"};

}  // namespace

Bundle random_bundle(const Options& options) {
  std::mt19937_64 rng(options.seed);
  Bundle b;
  std::set<std::vector<Token>> seen;
  std::size_t field_counter = 0;

  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  auto add_field = [&](const std::string& base) {
    std::string name = base + "_" + std::to_string(++field_counter);
    b.schema.add(SchemaField{name, "synthetic " + base + " value", {}, false});
    return name;
  };

  const std::vector<Token> prefix = {
      Token::variable(R"([A-Z][a-z]{2}\s+\d{1,2}\s+\d{2}:\d{2}:\d{2})", " "),
      Token::variable(R"([a-z][a-z0-9]*)", " "),
      Token::variable(R"([a-z]+)"),
      Token::constant("["),
      Token::variable(R"(\d+)"),
      Token::constant("]:", " "),
  };
  std::vector<std::string> prefix_fields;
  for (const char* base : {"timestamp", "hostname", "program", "", "pid", ""}) {
    prefix_fields.push_back(*base ? add_field(base) : std::string());
  }
  b.schema.fields()[0].temporal = true;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (b.tree.leaf_count() < options.templates) {
    std::vector<Token> toks;
    std::vector<std::string> fields;
    if (unit(rng) < options.prefixed_fraction) {
      toks = prefix;
      fields = prefix_fields;
    }
    std::size_t body = 2 + pick(6);
    for (std::size_t i = 0; i < body; ++i) {
      bool last = i + 1 == body;
      std::uint64_t r = rng() % 10;
      if (r < 4) {
        toks.push_back(Token::constant(kWords[pick(kWords.size())], last ? "" : " "));
        fields.emplace_back();
      } else if (r < 6) {
        // key=value style: constant "key=" glued to its variable
        const VarKind& v = kVars[pick(kVars.size())];
        toks.push_back(Token::constant(std::string(kWords[pick(kWords.size())]) + kPunct[pick(2)]));
        fields.emplace_back();
        toks.push_back(Token::variable(v.pattern, last ? "" : " "));
        fields.push_back(std::string());
      } else {
        const VarKind& v = kVars[pick(kVars.size())];
        toks.push_back(Token::variable(v.pattern, last ? "" : " "));
        fields.push_back(std::string());
      }
    }
    // A terminating keyword keeps templates apart from each other.
    toks.back().separator = " ";
    toks.push_back(Token::constant("op" + std::to_string(b.tree.leaf_count())));
    fields.emplace_back();
    if (!seen.insert(toks).second) continue;

    NodeId leaf = b.tree.insert_template(toks);
    b.tree.set_template_description(leaf, "synthetic event " + std::to_string(b.tree.leaf_count()));
    std::vector<NodeId> path = b.tree.template_of(leaf).path;
    for (std::size_t i = 0; i < path.size(); ++i) {
      TokenNode& n = b.tree.node(path[i]);
      if (n.field) continue;
      if (!fields[i].empty()) {
        n.field = fields[i];
      } else if (n.token.is_variable()) {
        std::string base = "value";
        for (const VarKind& v : kVars)
          if (n.token.text == v.pattern) base = v.name;
        n.field = add_field(base);
      }
    }
  }
  return b;
}

std::string sample_line(const ParseTree& tree, NodeId leaf, std::mt19937_64& rng) {
  std::string out;
  for (NodeId id : tree.template_of(leaf).path) {
    const Token& t = tree.node(id).token;
    out += t.is_variable() ? regex::Pattern::compile(t.text).sample(rng) : t.text;
    out += t.separator;
  }
  return out;
}

Corpus sample_corpus(const Bundle& bundle, std::size_t lines, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NodeId> leaves(bundle.tree.leaves().begin(), bundle.tree.leaves().end());
  std::vector<std::vector<std::pair<Token, regex::Pattern>>> compiled;
  for (NodeId leaf : leaves) {
    std::vector<std::pair<Token, regex::Pattern>> toks;
    for (const Token& t : bundle.tree.tokens_of(leaf))
      toks.emplace_back(t, regex::Pattern::compile(t.is_variable() ? t.text : std::string()));
    compiled.push_back(std::move(toks));
  }
  Corpus c;
  c.lines.reserve(lines);
  c.sources.reserve(lines);
  for (std::size_t i = 0; i < lines && !leaves.empty(); ++i) {
    std::size_t k = static_cast<std::size_t>(rng() % leaves.size());
    std::string line;
    for (const auto& [t, p] : compiled[k]) {
      line += t.is_variable() ? p.sample(rng) : t.text;
      line += t.separator;
    }
    c.lines.push_back(std::move(line));
    c.sources.push_back(leaves[k]);
  }
  return c;
}

}  // namespace logtree::synth
