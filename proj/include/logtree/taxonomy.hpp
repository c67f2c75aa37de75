// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "logtree/bundle.hpp"
#include "logtree/llm.hpp"

namespace logtree::taxonomy {

struct RawAttribute {
  std::string path;
  std::string description;  // official text, may be empty
  std::optional<std::string> type;
};

/// Flat attribute list: {"name": .., "attributes": [{"path", "description"?,
/// "type"?}]}; a bare array is accepted too. Throws ParseError on duplicate
/// or malformed paths.
std::vector<RawAttribute> parse_taxonomy(const nlohmann::json& doc);

std::string parent_of(const std::string& path);

struct Attribute {
  std::string path;
  std::string parent;
  std::string description;  // official text followed by the model's
  std::optional<std::string> type;
  llm::Embedding embedding;
};

class AttributeIndex {
public:
  AttributeIndex() = default;
  AttributeIndex(std::vector<Attribute> attributes, std::string version);

  const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
  const Attribute* find(const std::string& path) const;
  bool contains(const std::string& path) const { return find(path) != nullptr; }
  std::set<std::string> paths() const;
  std::set<std::string> type_tags() const;
  const std::string& version() const noexcept { return version_; }
  std::size_t size() const noexcept { return attributes_.size(); }

  /// Attributes sharing `path`'s parent, excluding `path`, in index order.
  std::vector<std::string> siblings(const std::string& path) const;

  nlohmann::json to_json() const;
  static AttributeIndex from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static AttributeIndex load(const std::filesystem::path& path);

private:
  std::vector<Attribute> attributes_;
  std::map<std::string, std::size_t> by_path_;
  std::string version_;
};

/// Version stamp of a taxonomy document: hash of its canonical dump.
std::string taxonomy_version(const nlohmann::json& doc);

/// Describes and embeds every attribute. Sequential so the call order, and
/// with it the cache contents, is deterministic.
AttributeIndex preprocess_taxonomy(llm::Gateway& gateway, const nlohmann::json& doc);

struct Candidate {
  std::string path;
  double similarity = 0;
  bool injected = false;  // added as a sibling of an assigned attribute
};

/// Top-k attributes by cosine similarity to the field text, then siblings of
/// the `assigned` attributes that are not already listed.
std::vector<Candidate> shortlist(llm::Gateway& gateway, const AttributeIndex& index, const SchemaField& field,
                                 const std::set<std::string>& assigned, std::size_t k = 50);

std::string field_text(const SchemaField& field);

/// Asks for one of the declared type tags. Throws RepairExhausted.
std::string assign_type(llm::Gateway& gateway, const SchemaField& field, const std::set<std::string>& tags,
                        int repair_iters = 3);

/// Keeps candidates whose attribute has `tag`; unchanged when none does.
std::vector<Candidate> prune_by_type(const std::vector<Candidate>& candidates, const AttributeIndex& index,
                                     const std::string& tag);

/// 0..n attributes chosen from `candidates`. Throws RepairExhausted.
std::vector<std::string> map_field(llm::Gateway& gateway, const SchemaField& field, const AttributeIndex& index,
                                   const std::vector<Candidate>& candidates, std::size_t n, int repair_iters = 3,
                                   const std::string& examples = "", llm::RepairOutcome* outcome = nullptr);

struct Config {
  std::size_t shortlist_k = 50;
  bool use_types = false;
  int repair_iters = 3;
  bool fewshot = true;
  std::size_t fewshot_k = 5;
};

struct FieldReport {
  std::string field;
  std::size_t candidates = 0;
  std::vector<std::string> injected;
  std::optional<std::string> type;
  std::vector<std::string> attributes;
  std::vector<std::string> rejected;  // diagnostics of replies the repair loop turned down
  bool failed = false;  // repair exhausted; left unmapped for validation
};

struct Report {
  std::vector<FieldReport> fields;
  std::map<std::string, std::vector<std::string>> conflicts;  // attribute -> fields sharing it
  nlohmann::json to_json() const;
};

/// Field names that share a template with `field`.
std::set<std::string> co_fields(const Bundle& bundle, const std::string& field);

/// Maps every schema field in order, updating bundle.mappings.
Report map_all(llm::Gateway& gateway, Bundle& bundle, const AttributeIndex& index, const Config& config = {});

}  // namespace logtree::taxonomy
