// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "logtree/bundle.hpp"
#include "logtree/llm.hpp"

namespace logtree::validate {

/// Closed command set. Node references are ids or "$k", the node created by
/// command k of the same script.
///   add_node      {parent: id|null, kind: const|var, text|regex, sep, leaf?, field?, description?}
///   delete_node   {node}              removes exactly that node; children are not re-attached
///   move_node     {node, parent: id|null}
///   merge_nodes   {nodes: [id...], regex, sep, field?}   siblings become one variable node
///   create_field  {name, description, temporal?}
///   assign_field  {node, name|null, description?, temporal?}
///   set_description {template: id, text} | {field: name, text}
///   assign_mapping  {field, attributes: [path...]}
struct Command {
  std::string op;
  nlohmann::json args;
};

struct EditScript {
  std::string rationale;
  std::vector<Command> commands;
};

/// Throws ParseError with a location such as "/commands/2/op".
EditScript parse_script(const nlohmann::json& doc);
nlohmann::json script_to_json(const EditScript& script);

/// What a script may touch. A node is mutable when every leaf below it is a
/// listed template; a field when every node using it is mutable or it is
/// listed explicitly; anything created by the script is mutable.
struct Scope {
  bool everything = false;
  std::set<NodeId> templates;
  std::set<std::string> fields;

  static Scope all() { return Scope{true, {}, {}}; }
};

struct Guards {
  const std::vector<std::string>* corpus = nullptr;      // retained lines for the match-set guard
  const std::set<std::string>* taxonomy = nullptr;       // attribute paths, enables the existence guard
};

/// Ordinals of corpus lines the tree matches.
std::vector<std::size_t> matched_set(const ParseTree& tree, const std::vector<std::string>& corpus);

/// Applies the script to a copy and returns it. Guards run after every
/// command and once more at the end; fields the script left unreferenced
/// are dropped. Throws GuardViolation or UnknownId; `bundle` is never touched.
Bundle execute_script(const Bundle& bundle, const EditScript& script, const Guards& guards,
                      const Scope& scope = Scope::all());

/// Consecutive windows; each batch carries up to `frozen` of the previous
/// batch's items as read-only context. Indices refer to the input list.
struct BatchPlan {
  std::vector<std::size_t> frozen;
  std::vector<std::size_t> items;
};
std::vector<BatchPlan> plan_batches(std::size_t count, std::size_t window, std::size_t frozen);

enum class Stage { syntax, schema, mapping };
const char* stage_name(Stage stage);
Stage parse_stage(const std::string& name);

struct Batch {
  Stage stage = Stage::syntax;
  std::vector<NodeId> templates;          // mutable
  std::vector<NodeId> frozen_templates;
  std::vector<std::string> fields;        // mutable (mapping stage)
  std::vector<std::string> frozen_fields;

  Scope scope() const;
};

struct Config {
  std::size_t window = 8;
  std::size_t frozen = 8;
  int repair_iters = 3;
  std::size_t passes = 1;
  std::size_t sample_lines = 3;
};

struct AuditEntry {
  Stage stage = Stage::syntax;
  std::size_t batch = 0;
  std::vector<std::string> items;
  std::string status;  // applied | unchanged | exhausted
  std::string rationale;
  nlohmann::json commands = nlohmann::json::array();
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
};

struct Context {
  const std::vector<std::string>* corpus = nullptr;
  const std::set<std::string>* taxonomy = nullptr;
};

std::string render_batch(const Batch& batch, const Bundle& bundle, const Context& ctx, std::size_t sample_lines);

/// One model round trip per attempt; guard failures are fed back. On
/// exhaustion the bundle is returned unchanged and the entry says so.
Bundle validate_batch(llm::Gateway& gateway, const Batch& batch, const Bundle& bundle, const Context& ctx,
                      const Config& config, AuditEntry* audit = nullptr);

/// Plans and validates every batch of a stage, `config.passes` times.
Bundle validate_stage(llm::Gateway& gateway, Stage stage, const Bundle& bundle, const Context& ctx,
                      const Config& config, std::vector<AuditEntry>* audit = nullptr);

}  // namespace logtree::validate
