// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/matcher.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "logtree/error.hpp"

namespace logtree {

const std::string* StructuredRecord::value(std::string_view key) const {
  for (const Capture& c : captures)
    if (c.key == key) return &c.value;
  return nullptr;
}

namespace {

std::string capture_key(const TokenNode& n) {
  return n.field ? *n.field : "token_" + std::to_string(n.id);
}

}  // namespace

CompiledTree::CompiledTree(const ParseTree& tree) : tree_(tree) {
  nodes_.reserve(tree_.node_count());
  for (const auto& [id, n] : tree_.nodes()) {
    Node c;
    c.id = id;
    c.variable = n.token.is_variable();
    c.leaf = tree_.is_leaf(id);
    c.separator = n.token.separator;
    if (c.variable) {
      c.pattern = regex::Pattern::compile(n.token.text);
    } else {
      c.literal = n.token.text + n.token.separator;
    }
    index_.emplace(id, nodes_.size());
    nodes_.push_back(std::move(c));
  }
  for (const auto& [id, n] : tree_.nodes()) {
    Node& c = nodes_[index_.at(id)];
    for (NodeId child : n.children) c.children.push_back(index_.at(child));
  }
  for (NodeId r : tree_.roots()) roots_.push_back(index_.at(r));
  for (const Template& t : tree_.templates()) {
    std::size_t bytes = 0;
    for (NodeId id : t.path) {
      const Token& tok = tree_.node(id).token;
      if (!tok.is_variable()) bytes += tok.text.size();
    }
    leaf_bytes_.emplace(t.leaf_id, bytes);
  }
}

struct CompiledTree::Search {
  struct State {
    std::size_t node;
    std::size_t pos;  // offset after the node and its separator
    std::size_t parent;
    std::size_t depth;
  };
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  std::vector<State> states;
  std::vector<State> stack;
  std::unordered_set<std::uint64_t> visited;
  std::vector<std::size_t> ends;
  std::vector<std::pair<NodeId, std::size_t>> complete;  // (leaf, state index)
  std::size_t deepest = kNone;
};

void CompiledTree::search(std::string_view line, Search& s, bool want_prefix) const {
  using State = Search::State;
  auto expand = [&](const std::vector<std::size_t>& children, std::size_t pos, std::size_t parent, std::size_t depth) {
    std::size_t mark = s.stack.size();
    for (std::size_t ci : children) {
      const Node& c = nodes_[ci];
      if (!c.variable) {
        if (line.substr(pos).starts_with(c.literal)) s.stack.push_back(State{ci, pos + c.literal.size(), parent, depth});
        continue;
      }
      c.pattern->match_ends(line, pos, s.ends);
      for (std::size_t e : s.ends) {
        if (line.substr(e).starts_with(c.separator))
          s.stack.push_back(State{ci, e + c.separator.size(), parent, depth});
      }
    }
    std::reverse(s.stack.begin() + static_cast<std::ptrdiff_t>(mark), s.stack.end());
  };

  expand(roots_, 0, Search::kNone, 1);
  while (!s.stack.empty()) {
    State st = s.stack.back();
    s.stack.pop_back();
    std::uint64_t key = (static_cast<std::uint64_t>(st.node) << 32) | static_cast<std::uint64_t>(st.pos);
    if (!s.visited.insert(key).second) continue;
    std::size_t idx = s.states.size();
    s.states.push_back(st);
    const Node& n = nodes_[st.node];
    if (want_prefix) {
      if (s.deepest == Search::kNone || st.depth > s.states[s.deepest].depth) s.deepest = idx;
    } else if (n.leaf && st.pos == line.size()) {
      s.complete.emplace_back(n.id, idx);
    }
    if (!n.children.empty()) expand(n.children, st.pos, idx, st.depth + 1);
  }
}

namespace {

thread_local std::unordered_set<std::uint64_t> tl_visited;

}  // namespace

MatchResult CompiledTree::match(std::string_view line, std::size_t line_number) const {
  MatchResult result;
  if (roots_.empty()) return result;
  Search s;
  s.visited.swap(tl_visited);
  s.visited.clear();
  search(line, s, false);
  s.visited.swap(tl_visited);
  result.candidates_considered = s.complete.size();
  if (s.complete.empty()) return result;

  std::size_t best = 0;
  for (std::size_t i = 1; i < s.complete.size(); ++i) {
    const auto& [leaf, _] = s.complete[i];
    const auto& [best_leaf, __] = s.complete[best];
    std::size_t a = leaf_bytes_.at(leaf), b = leaf_bytes_.at(best_leaf);
    if (a > b || (a == b && leaf < best_leaf)) best = i;
  }

  StructuredRecord rec;
  rec.line_number = line_number;
  rec.template_id = s.complete[best].first;
  rec.raw = std::string(line);
  std::vector<std::size_t> chain;
  for (std::size_t i = s.complete[best].second; i != Search::kNone; i = s.states[i].parent) chain.push_back(i);
  std::reverse(chain.begin(), chain.end());
  std::size_t start = 0;
  for (std::size_t i : chain) {
    const Search::State& st = s.states[i];
    const Node& n = nodes_[st.node];
    const TokenNode& tn = tree_.node(n.id);
    if (n.variable) {
      std::size_t end = st.pos - n.separator.size();
      rec.captures.push_back(Capture{n.id, capture_key(tn), std::string(line.substr(start, end - start))});
    } else if (tn.field) {
      rec.captures.push_back(Capture{n.id, *tn.field, tn.token.text});
    }
    start = st.pos;
  }
  result.record = std::move(rec);
  return result;
}

std::optional<NodeId> CompiledTree::classify(std::string_view line) const {
  std::vector<NodeId> leaves = matching_leaves(line);
  if (leaves.empty()) return std::nullopt;
  NodeId best = leaves.front();
  for (NodeId l : leaves) {
    if (leaf_bytes_.at(l) > leaf_bytes_.at(best)) best = l;
  }
  return best;
}

std::vector<NodeId> CompiledTree::matching_leaves(std::string_view line) const {
  if (roots_.empty()) return {};
  Search s;
  s.visited.swap(tl_visited);
  s.visited.clear();
  search(line, s, false);
  s.visited.swap(tl_visited);
  std::vector<NodeId> out;
  for (const auto& [leaf, _] : s.complete) out.push_back(leaf);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

CompiledTree::Prefix CompiledTree::deepest_prefix(std::string_view line) const {
  Prefix out;
  if (roots_.empty()) return out;
  Search s;
  search(line, s, true);
  if (s.deepest == Search::kNone) return out;
  out.consumed = s.states[s.deepest].pos;
  for (std::size_t i = s.deepest; i != Search::kNone; i = s.states[i].parent) out.path.push_back(nodes_[s.states[i].node].id);
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

MatchResult match_line(const ParseTree& tree, std::string_view line) { return CompiledTree(tree).match(line, 1); }

std::string reconstruct(const StructuredRecord& record, const ParseTree& tree) {
  if (!tree.is_leaf(record.template_id))
    throw IntegrityError("record references unknown template " + std::to_string(record.template_id));
  Template t = tree.template_of(record.template_id);
  std::string out;
  for (NodeId id : t.path) {
    const TokenNode& n = tree.node(id);
    if (!n.token.is_variable()) {
      out += n.token.text;
      out += n.token.separator;
      continue;
    }
    auto it = std::find_if(record.captures.begin(), record.captures.end(), [id](const Capture& c) { return c.node == id; });
    if (it == record.captures.end()) throw IntegrityError("record lacks a capture for node " + std::to_string(id));
    if (!regex::Pattern::compile(n.token.text).full_match(it->value))
      throw IntegrityError("capture '" + it->key + "' does not match pattern " + n.token.text);
    out += it->value;
    out += n.token.separator;
  }
  return out;
}

std::vector<MatchResult> ingest_serial(const CompiledTree& tree, const std::vector<std::string>& lines,
                                       std::size_t first_line_number) {
  std::vector<MatchResult> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(tree.match(lines[i], first_line_number + i));
  return out;
}

std::vector<MatchResult> ingest_parallel(const CompiledTree& tree, const std::vector<std::string>& lines,
                                         std::size_t first_line_number) {
  std::vector<MatchResult> out(lines.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(lines.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        tree.match(lines[static_cast<std::size_t>(i)], first_line_number + static_cast<std::size_t>(i));
  }
  return out;
}

std::vector<std::optional<NodeId>> classify_all(const CompiledTree& tree, const std::vector<std::string>& lines) {
  std::vector<std::optional<NodeId>> out(lines.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(lines.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = tree.classify(lines[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<std::pair<std::string, std::string>> taxonomy_view(const StructuredRecord& record, const Bundle& bundle) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Capture& c : record.captures) {
    auto it = bundle.mappings.find(c.key);
    if (it == bundle.mappings.end()) continue;
    for (const std::string& attr : it->second) out.emplace_back(attr, c.value);
  }
  return out;
}

nlohmann::ordered_json record_json(const MatchResult& result, std::size_t line_number, const Bundle& bundle,
                                   bool with_taxonomy) {
  nlohmann::ordered_json j;
  j["line_number"] = line_number;
  if (!result.matched()) {
    j["template_id"] = nullptr;
    j["description"] = nullptr;
    j["captures"] = nlohmann::ordered_json::object();
    if (with_taxonomy) j["taxonomy"] = nlohmann::ordered_json::object();
    return j;
  }
  const StructuredRecord& rec = *result.record;
  j["template_id"] = rec.template_id;
  j["description"] = bundle.tree.template_description(rec.template_id);
  nlohmann::ordered_json caps = nlohmann::ordered_json::object();
  for (const Capture& c : rec.captures) {
    std::string key = c.key;
    for (int k = 2; caps.contains(key); ++k) key = c.key + "#" + std::to_string(k);
    caps[key] = c.value;
  }
  j["captures"] = std::move(caps);
  if (with_taxonomy) {
    nlohmann::ordered_json tax = nlohmann::ordered_json::object();
    for (const auto& [attr, value] : taxonomy_view(rec, bundle)) {
      if (!tax.contains(attr)) {
        tax[attr] = value;
      } else {
        if (!tax[attr].is_array()) tax[attr] = nlohmann::ordered_json::array({tax[attr]});
        tax[attr].push_back(value);
      }
    }
    j["taxonomy"] = std::move(tax);
  }
  return j;
}

IngestStats ingest_stream(std::istream& in, std::ostream& out, const Bundle& bundle, const IngestOptions& options) {
  CompiledTree tree(bundle.tree);
  IngestStats stats;
  std::vector<std::string> chunk;
  auto flush = [&]() {
    std::vector<MatchResult> results = options.parallel ? ingest_parallel(tree, chunk, stats.lines + 1)
                                                        : ingest_serial(tree, chunk, stats.lines + 1);
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i].matched()) ++stats.matched;
      out << record_json(results[i], stats.lines + i + 1, bundle, options.taxonomy).dump() << '\n';
    }
    stats.lines += chunk.size();
    chunk.clear();
    out.flush();
  };
  std::string line;
  while (std::getline(in, line)) {
    chunk.push_back(line);
    if (chunk.size() >= options.chunk_lines) flush();
  }
  bool failed = in.bad();
  flush();
  if (failed) throw IoError("input read failed after line " + std::to_string(stats.lines));
  return stats;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) { return split_lines(read_file(path)); }

}  // namespace logtree
