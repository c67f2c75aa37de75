// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "logtree/tree.hpp"

namespace logtree {

struct SchemaField {
  std::string name;
  std::string description;
  std::vector<std::string> example_values;
  bool temporal = false;  // compared lexicographically by the query engine

  friend bool operator==(const SchemaField&, const SchemaField&) = default;
};

class Schema {
public:
  const std::vector<SchemaField>& fields() const noexcept { return fields_; }
  std::vector<SchemaField>& fields() noexcept { return fields_; }

  const SchemaField* find(std::string_view name) const;
  SchemaField* find(std::string_view name);
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  /// Appends without any uniqueness check; see register_field for the checked path.
  void add(SchemaField field) { fields_.push_back(std::move(field)); }
  bool remove(std::string_view name);

  friend bool operator==(const Schema&, const Schema&) = default;

private:
  std::vector<SchemaField> fields_;
};

/// field name -> taxonomy attribute paths. Fields absent from the map are unmapped.
using Mappings = std::map<std::string, std::vector<std::string>>;

struct Bundle {
  ParseTree tree;
  Schema schema;
  Mappings mappings;
  std::size_t max_attributes = 1;

  friend bool operator==(const Bundle&, const Bundle&) = default;
};

inline constexpr const char* kBundleFormat = "logtree-bundle";
inline constexpr int kBundleVersion = 1;

/// Every structural and referential check on a bundle. `taxonomy` enables the
/// attribute-existence check. Returns the first violation or "".
std::string check_integrity(const Bundle& bundle, const std::set<std::string>* taxonomy = nullptr);

nlohmann::ordered_json to_json(const Bundle& bundle);
std::string serialize(const Bundle& bundle);

/// Throws ParseError (with a JSON-pointer style location) on malformed input
/// and IntegrityError when the decoded bundle violates an invariant.
Bundle deserialize(std::string_view document, const std::set<std::string>* taxonomy = nullptr);
Bundle from_json(const nlohmann::json& doc, const std::set<std::string>* taxonomy = nullptr);

Bundle load_bundle(const std::filesystem::path& path, const std::set<std::string>* taxonomy = nullptr);
void save_bundle(const std::filesystem::path& path, const Bundle& bundle);

/// Token list in the interchange shape used by model replies and hand-written
/// template documents: {"kind":"const","text":..,"sep":..} or
/// {"kind":"var","regex":..,"sep":..}.
std::vector<Token> tokens_from_json(const nlohmann::json& tokens, const std::string& location = "/tokens");
nlohmann::ordered_json tokens_to_json(const std::vector<Token>& tokens);

/// Builds a bundle from a template document:
///   {"fields":[{name,description,temporal?}],
///    "templates":[{"description":..,"tokens":[{..,"field":name?}]}],
///    "mappings":{field:[attr]}, "max_attributes":N}
Bundle build_bundle(const nlohmann::json& doc);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames; missing parent directories are created.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace logtree
