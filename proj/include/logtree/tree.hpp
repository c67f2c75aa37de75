// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace logtree {

using NodeId = std::uint32_t;

enum class TokenKind { constant, variable };

/// One token of a template. Constants carry a literal, variables a pattern in
/// the portable regex dialect. Every token records the exact separator bytes
/// that follow it in the source line so lines reconstruct byte-exactly.
struct Token {
  TokenKind kind = TokenKind::constant;
  std::string text;  // literal (constant) or pattern source (variable)
  std::string separator;

  static Token constant(std::string literal, std::string separator = "") {
    return Token{TokenKind::constant, std::move(literal), std::move(separator)};
  }
  static Token variable(std::string pattern, std::string separator = "") {
    return Token{TokenKind::variable, std::move(pattern), std::move(separator)};
  }

  bool is_variable() const noexcept { return kind == TokenKind::variable; }

  friend bool operator==(const Token&, const Token&) = default;
};

bool operator<(const Token& a, const Token& b);

struct TokenNode {
  NodeId id = 0;
  Token token;
  std::optional<std::string> field;  // schema field reference
  std::string description;
  std::vector<NodeId> children;

  friend bool operator==(const TokenNode&, const TokenNode&) = default;
};

/// Root-to-leaf path; `leaf_id` doubles as the template id.
struct Template {
  NodeId leaf_id = 0;
  std::vector<NodeId> path;
  std::string description;
};

/// Prefix-sharing tree of tokens under a virtual root. Each node flagged as a
/// leaf terminates one template; a leaf may still have children when one
/// template is a strict prefix of another.
class ParseTree {
public:
  /// Merges `tokens` along the longest identical-token prefix and flags the
  /// last node as a leaf. Throws CompileError naming the token index when a
  /// variable pattern does not compile. Returns the leaf id.
  NodeId insert_template(const std::vector<Token>& tokens);

  bool empty() const noexcept { return nodes_.empty(); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaves_.size(); }

  const std::vector<NodeId>& roots() const noexcept { return roots_; }
  const std::map<NodeId, TokenNode>& nodes() const noexcept { return nodes_; }
  const std::set<NodeId>& leaves() const noexcept { return leaves_; }

  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  bool is_leaf(NodeId id) const { return leaves_.count(id) != 0; }
  const TokenNode& node(NodeId id) const;
  TokenNode& node(NodeId id);

  /// Parent of every reachable non-root node. Throws IntegrityError on a node
  /// with two parents, a cycle, or a dangling child reference.
  std::map<NodeId, NodeId> parent_index() const;

  /// Unique root-to-leaf chain; throws IntegrityError when `leaf` is not a leaf.
  Template template_of(NodeId leaf) const;
  std::vector<Template> templates() const;
  std::vector<Token> tokens_of(NodeId leaf) const;

  /// Clears the leaf flag and prunes nodes left without any template below.
  void remove_template(NodeId leaf);

  std::string template_description(NodeId leaf) const;
  void set_template_description(NodeId leaf, std::string description);

  // Raw mutation, used by the edit interpreter and deserialization. These do
  // not enforce invariants; call check_tree() afterwards.
  NodeId add_node(std::optional<NodeId> parent, Token token);
  void erase_node(NodeId id);
  void set_leaf(NodeId id, bool leaf);
  std::vector<NodeId>& children_of(std::optional<NodeId> parent);
  void restore(std::vector<NodeId> roots, std::map<NodeId, TokenNode> nodes, std::set<NodeId> leaves,
               std::map<NodeId, std::string> descriptions, NodeId next_id);

  NodeId next_id() const noexcept { return next_id_; }
  const std::map<NodeId, std::string>& template_descriptions() const noexcept { return descriptions_; }

  /// Tree property, reachability, leaf validity, pattern compilation, shape
  /// of constants and variables, and distinctness of templates. Returns the
  /// first violation or an empty string. With `complete` false, nodes with no
  /// template below and duplicate templates are tolerated.
  std::string check_tree(bool complete = true) const;

  friend bool operator==(const ParseTree&, const ParseTree&) = default;

private:
  std::vector<NodeId> roots_;
  std::map<NodeId, TokenNode> nodes_;
  std::set<NodeId> leaves_;
  std::map<NodeId, std::string> descriptions_;
  NodeId next_id_ = 1;
};

/// Constants verbatim, variables as "<*>", each followed by its separator.
std::string wildcard_form(const ParseTree& tree, const Template& tmpl);
std::string wildcard_form(const std::vector<Token>& tokens);

/// Sum of constant literal bytes along the template (separators excluded).
std::size_t constant_bytes(const std::vector<Token>& tokens);

}  // namespace logtree
