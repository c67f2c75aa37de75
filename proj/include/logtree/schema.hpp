// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "logtree/bundle.hpp"
#include "logtree/llm.hpp"
#include "logtree/tree.hpp"

namespace logtree::schema {

/// Lowercase snake identifier: camel humps and non-alphanumerics become
/// single underscores, a leading digit gets an "f_" prefix. Returns "" when
/// nothing alphanumeric remains.
std::string normalize_name(std::string_view raw);

/// Appends the field; an identical name and description is a no-op and the
/// same name with another description throws NameCollision. The name is
/// normalized first; the stored name is returned.
std::string register_field(Schema& schema, std::string_view name, std::string description, bool temporal = false);

struct FieldName {
  NodeId token = 0;
  std::string name;
  std::string description;
  bool temporal = false;
};

struct NamingAssignment {
  NodeId leaf = 0;
  std::string template_description;
  std::vector<FieldName> fields;  // path order
};

struct Config {
  int repair_iters = 3;
  std::size_t fewshot_k = 5;
  bool fewshot = true;
  std::size_t example_values = 3;
  std::size_t sample_lines = 5;
};

/// Asks the model to name one template. Prefix nodes that already carry a
/// field must come back with that same name. Throws RepairExhausted.
NamingAssignment name_template(llm::Gateway& gateway, NodeId leaf, const ParseTree& tree, const Schema& schema,
                               const std::vector<std::string>& samples, const llm::ExampleStore* examples,
                               const Config& config = {});

/// Writes names onto the walk and registers new fields. Returns the names
/// whose descriptions collided with an existing field.
std::vector<std::string> apply_assignment(const NamingAssignment& assignment, Bundle& bundle);

struct InventoryRow {
  std::string name;
  std::string description;
  std::size_t occurrences = 0;  // nodes referencing the field
};
std::vector<InventoryRow> field_inventory(const Bundle& bundle);

/// Refreshes example_values from the first captures in `corpus`.
void collect_examples(Bundle& bundle, const std::vector<std::string>& corpus, std::size_t per_field = 3);

struct Report {
  std::size_t named = 0;
  std::vector<NodeId> unnamed;            // RepairExhausted; left for validation
  std::vector<std::string> collisions;
  std::vector<std::string> events;
};

/// Names every template in leaf-id order, then fills example values.
Report name_all(llm::Gateway& gateway, Bundle& bundle, const std::vector<std::string>& corpus, const Config& config = {});

}  // namespace logtree::schema
