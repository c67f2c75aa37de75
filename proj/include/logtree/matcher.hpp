// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "logtree/bundle.hpp"
#include "logtree/regex.hpp"
#include "logtree/tree.hpp"

namespace logtree {

struct Capture {
  NodeId node = 0;
  std::string key;  // field name, or "token_<id>" for an unnamed variable
  std::string value;

  friend bool operator==(const Capture&, const Capture&) = default;
};

struct StructuredRecord {
  std::size_t line_number = 0;  // 1-based
  NodeId template_id = 0;
  std::vector<Capture> captures;  // path order; every variable plus named constants
  std::string raw;

  const std::string* value(std::string_view key) const;

  friend bool operator==(const StructuredRecord&, const StructuredRecord&) = default;
};

struct MatchResult {
  std::optional<StructuredRecord> record;
  std::size_t candidates_considered = 0;  // complete leaf matches seen

  bool matched() const noexcept { return record.has_value(); }
};

/// Read-only matcher over a snapshot of a tree. Patterns are compiled once;
/// instances are safe to share across threads.
class CompiledTree {
public:
  explicit CompiledTree(const ParseTree& tree);

  const ParseTree& tree() const noexcept { return tree_; }

  /// Full-line match. Among all leaves whose template consumes the whole line
  /// the one with the most constant literal bytes wins, then the smallest id.
  MatchResult match(std::string_view line, std::size_t line_number = 0) const;

  /// Winning leaf only, without building captures.
  std::optional<NodeId> classify(std::string_view line) const;

  /// Every leaf whose template consumes the whole line, ascending by id.
  std::vector<NodeId> matching_leaves(std::string_view line) const;

  struct Prefix {
    std::vector<NodeId> path;
    std::size_t consumed = 0;  // bytes of the line covered by `path`
  };
  /// Deepest node path (from a root) consuming a prefix of `line`. Ties go to
  /// the first path in greedy search order. Empty when no root matches.
  Prefix deepest_prefix(std::string_view line) const;

  std::size_t constant_bytes_of(NodeId leaf) const { return leaf_bytes_.at(leaf); }

private:
  struct Node {
    NodeId id = 0;
    bool variable = false;
    bool leaf = false;
    std::string literal;  // constant text + separator
    std::string separator;
    std::optional<regex::Pattern> pattern;
    std::vector<std::size_t> children;  // indices into nodes_
  };

  struct Search;
  void search(std::string_view line, Search& s, bool want_prefix) const;

  ParseTree tree_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> roots_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::unordered_map<NodeId, std::size_t> leaf_bytes_;
};

MatchResult match_line(const ParseTree& tree, std::string_view line);

/// Rebuilds the raw line from the template path and captures. Throws
/// IntegrityError for a dangling template id, a missing capture, or a capture
/// that does not match its variable's pattern.
std::string reconstruct(const StructuredRecord& record, const ParseTree& tree);

/// Reference implementation: one line after another.
std::vector<MatchResult> ingest_serial(const CompiledTree& tree, const std::vector<std::string>& lines,
                                       std::size_t first_line_number = 1);
/// OpenMP fan-out over lines; output order equals input order.
std::vector<MatchResult> ingest_parallel(const CompiledTree& tree, const std::vector<std::string>& lines,
                                         std::size_t first_line_number = 1);

/// Winning leaf per line, computed in parallel.
std::vector<std::optional<NodeId>> classify_all(const CompiledTree& tree, const std::vector<std::string>& lines);

/// Taxonomy attribute -> values for one record, following the bundle mappings
/// in capture order.
std::vector<std::pair<std::string, std::string>> taxonomy_view(const StructuredRecord& record, const Bundle& bundle);

nlohmann::ordered_json record_json(const MatchResult& result, std::size_t line_number, const Bundle& bundle,
                                   bool with_taxonomy);

struct IngestOptions {
  bool taxonomy = false;
  bool parallel = true;
  std::size_t chunk_lines = 8192;
};

struct IngestStats {
  std::size_t lines = 0;
  std::size_t matched = 0;
};

/// Streams newline-delimited input to JSONL output. Throws IoError when the
/// input stream fails; everything produced before the failure is flushed.
IngestStats ingest_stream(std::istream& in, std::ostream& out, const Bundle& bundle, const IngestOptions& options = {});

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::vector<std::string> split_lines(std::string_view text);

}  // namespace logtree
