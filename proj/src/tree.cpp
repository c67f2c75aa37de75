// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/tree.hpp"

#include <algorithm>
#include <tuple>

#include "logtree/error.hpp"
#include "logtree/regex.hpp"

namespace logtree {

namespace {

std::string id_str(NodeId id) { return std::to_string(id); }

}  // namespace

NodeId ParseTree::insert_template(const std::vector<Token>& tokens) {
  if (tokens.empty()) throw IntegrityError("cannot insert an empty template");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.is_variable()) {
      try {
        regex::Pattern::compile(t.text);
      } catch (const CompileError& e) {
        throw CompileError("token " + std::to_string(i) + ": " + e.what(), i, e.offset());
      }
    } else if (t.text.empty()) {
      throw CompileError("token " + std::to_string(i) + ": constant with empty literal", i);
    }
  }

  std::optional<NodeId> parent;
  for (const Token& t : tokens) {
    const std::vector<NodeId>& siblings = parent ? nodes_.at(*parent).children : roots_;
    auto it = std::find_if(siblings.begin(), siblings.end(),
                           [&](NodeId id) { return nodes_.at(id).token == t; });
    if (it != siblings.end()) {
      parent = *it;
    } else {
      parent = add_node(parent, t);
    }
  }
  leaves_.insert(*parent);
  return *parent;
}

const TokenNode& ParseTree::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw IntegrityError("unknown node " + id_str(id));
  return it->second;
}

TokenNode& ParseTree::node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw IntegrityError("unknown node " + id_str(id));
  return it->second;
}

std::map<NodeId, NodeId> ParseTree::parent_index() const {
  std::map<NodeId, NodeId> parent;
  std::set<NodeId> seen;
  std::vector<NodeId> stack;
  for (NodeId r : roots_) {
    if (!nodes_.count(r)) throw IntegrityError("root references missing node " + id_str(r));
    if (!seen.insert(r).second) throw IntegrityError("node " + id_str(r) + " appears twice among roots");
    stack.push_back(r);
  }
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    for (NodeId c : nodes_.at(id).children) {
      if (!nodes_.count(c)) throw IntegrityError("node " + id_str(id) + " references missing child " + id_str(c));
      if (!seen.insert(c).second)
        throw IntegrityError("node " + id_str(c) + " has more than one parent or lies on a cycle");
      parent[c] = id;
      stack.push_back(c);
    }
  }
  return parent;
}

Template ParseTree::template_of(NodeId leaf) const {
  if (!leaves_.count(leaf)) throw IntegrityError("node " + id_str(leaf) + " is not a leaf");
  std::map<NodeId, NodeId> parent = parent_index();
  Template t;
  t.leaf_id = leaf;
  NodeId cur = leaf;
  t.path.push_back(cur);
  for (auto it = parent.find(cur); it != parent.end(); it = parent.find(cur)) {
    cur = it->second;
    t.path.push_back(cur);
  }
  if (std::find(roots_.begin(), roots_.end(), cur) == roots_.end())
    throw IntegrityError("leaf " + id_str(leaf) + " is not reachable from a root");
  std::reverse(t.path.begin(), t.path.end());
  t.description = template_description(leaf);
  return t;
}

std::vector<Template> ParseTree::templates() const {
  std::map<NodeId, NodeId> parent = parent_index();
  std::vector<Template> out;
  for (NodeId leaf : leaves_) {
    Template t;
    t.leaf_id = leaf;
    NodeId cur = leaf;
    t.path.push_back(cur);
    for (auto it = parent.find(cur); it != parent.end(); it = parent.find(cur)) {
      cur = it->second;
      t.path.push_back(cur);
    }
    std::reverse(t.path.begin(), t.path.end());
    t.description = template_description(leaf);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Token> ParseTree::tokens_of(NodeId leaf) const {
  std::vector<Token> out;
  for (NodeId id : template_of(leaf).path) out.push_back(nodes_.at(id).token);
  return out;
}

void ParseTree::remove_template(NodeId leaf) {
  std::vector<NodeId> path = template_of(leaf).path;
  set_leaf(leaf, false);
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const TokenNode& n = nodes_.at(*it);
    if (!n.children.empty() || leaves_.count(*it)) break;
    erase_node(*it);
  }
}

std::string ParseTree::template_description(NodeId leaf) const {
  auto it = descriptions_.find(leaf);
  return it == descriptions_.end() ? std::string() : it->second;
}

void ParseTree::set_template_description(NodeId leaf, std::string description) {
  if (!leaves_.count(leaf)) throw IntegrityError("node " + id_str(leaf) + " is not a leaf");
  if (description.empty()) {
    descriptions_.erase(leaf);
  } else {
    descriptions_[leaf] = std::move(description);
  }
}

NodeId ParseTree::add_node(std::optional<NodeId> parent, Token token) {
  NodeId id = next_id_++;
  TokenNode n;
  n.id = id;
  n.token = std::move(token);
  nodes_.emplace(id, std::move(n));
  children_of(parent).push_back(id);
  return id;
}

void ParseTree::erase_node(NodeId id) {
  if (!nodes_.count(id)) throw IntegrityError("unknown node " + id_str(id));
  auto detach = [id](std::vector<NodeId>& v) { v.erase(std::remove(v.begin(), v.end(), id), v.end()); };
  detach(roots_);
  for (auto& [_, n] : nodes_) detach(n.children);
  nodes_.erase(id);
  leaves_.erase(id);
  descriptions_.erase(id);
}

void ParseTree::set_leaf(NodeId id, bool leaf) {
  if (!nodes_.count(id)) throw IntegrityError("unknown node " + id_str(id));
  if (leaf) {
    leaves_.insert(id);
  } else {
    leaves_.erase(id);
    descriptions_.erase(id);
  }
}

std::vector<NodeId>& ParseTree::children_of(std::optional<NodeId> parent) {
  if (!parent) return roots_;
  return node(*parent).children;
}

void ParseTree::restore(std::vector<NodeId> roots, std::map<NodeId, TokenNode> nodes, std::set<NodeId> leaves,
                        std::map<NodeId, std::string> descriptions, NodeId next_id) {
  roots_ = std::move(roots);
  nodes_ = std::move(nodes);
  leaves_ = std::move(leaves);
  descriptions_ = std::move(descriptions);
  next_id_ = next_id;
}

std::string ParseTree::check_tree(bool complete) const {
  std::map<NodeId, NodeId> parent;
  try {
    parent = parent_index();
  } catch (const IntegrityError& e) {
    return e.what();
  }
  if (parent.size() + roots_.size() != nodes_.size()) {
    for (const auto& [id, _] : nodes_) {
      if (!parent.count(id) && std::find(roots_.begin(), roots_.end(), id) == roots_.end())
        return "node " + id_str(id) + " is unreachable from the roots";
    }
  }
  for (NodeId leaf : leaves_) {
    if (!nodes_.count(leaf)) return "leaf " + id_str(leaf) + " is not a node";
  }
  for (const auto& [leaf, _] : descriptions_) {
    if (!leaves_.count(leaf)) return "description attached to non-leaf " + id_str(leaf);
  }
  for (const auto& [id, n] : nodes_) {
    if (n.id != id) return "node " + id_str(id) + " carries mismatched id " + id_str(n.id);
    if (id >= next_id_) return "node id " + id_str(id) + " is not below next_id";
    if (n.token.is_variable()) {
      std::string diag = regex::Pattern::check(n.token.text);
      if (!diag.empty()) return "node " + id_str(id) + ": " + diag;
    } else if (n.token.text.empty()) {
      return "constant node " + id_str(id) + " has an empty literal";
    }
    if (complete && n.children.empty() && !leaves_.count(id)) return "node " + id_str(id) + " has no template below it";
  }
  if (!complete) return {};
  std::set<std::vector<Token>> seen;
  for (NodeId leaf : leaves_) {
    std::vector<Token> seq;
    NodeId cur = leaf;
    seq.push_back(nodes_.at(cur).token);
    for (auto it = parent.find(cur); it != parent.end(); it = parent.find(cur)) {
      cur = it->second;
      seq.push_back(nodes_.at(cur).token);
    }
    if (!seen.insert(std::move(seq)).second) return "leaf " + id_str(leaf) + " duplicates another template";
  }
  return {};
}

bool operator<(const Token& a, const Token& b) {
  return std::tie(a.kind, a.text, a.separator) < std::tie(b.kind, b.text, b.separator);
}

std::string wildcard_form(const std::vector<Token>& tokens) {
  std::string out;
  for (const Token& t : tokens) {
    out += t.is_variable() ? std::string("<*>") : t.text;
    out += t.separator;
  }
  return out;
}

std::string wildcard_form(const ParseTree& tree, const Template& tmpl) {
  std::vector<Token> tokens;
  for (NodeId id : tmpl.path) tokens.push_back(tree.node(id).token);
  return wildcard_form(tokens);
}

std::size_t constant_bytes(const std::vector<Token>& tokens) {
  std::size_t n = 0;
  for (const Token& t : tokens)
    if (!t.is_variable()) n += t.text.size();
  return n;
}

}  // namespace logtree
