// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/validate.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "logtree/error.hpp"
#include "logtree/matcher.hpp"
#include "logtree/schema.hpp"

namespace logtree::validate {

using nlohmann::json;

namespace {

const std::set<std::string> kOps = {"add_node",     "delete_node",  "move_node",       "merge_nodes",
                                    "create_field", "assign_field", "set_description", "assign_mapping"};

void require(const json& c, const char* key, const std::string& loc) {
  if (!c.contains(key)) throw ParseError(std::string("missing '") + key + "'", loc + "/" + key);
}

bool is_ref(const json& v) {
  return (v.is_number_integer() && v.get<std::int64_t>() >= 0) || (v.is_string() && v.get<std::string>().rfind('$', 0) == 0); }

void require_ref(const json& c, const char* key, const std::string& loc, bool nullable = false) {
  require(c, key, loc);
  const json& v = c[key];
  if (nullable && v.is_null()) return;
  if (!is_ref(v)) throw ParseError(std::string("'") + key + "' must be a node id or \"$k\"", loc + "/" + key);
}

void require_string(const json& c, const char* key, const std::string& loc) {
  require(c, key, loc);
  if (!c[key].is_string()) throw ParseError(std::string("'") + key + "' must be a string", loc + "/" + key);
}

}  // namespace

EditScript parse_script(const json& doc) {
  if (!doc.is_object()) throw ParseError("edit script must be an object", "");
  EditScript s;
  if (doc.contains("rationale")) {
    if (!doc["rationale"].is_string()) throw ParseError("'rationale' must be a string", "/rationale");
    s.rationale = doc["rationale"].get<std::string>();
  }
  if (!doc.contains("commands") || !doc["commands"].is_array()) throw ParseError("missing 'commands' array", "/commands");
  const json& cmds = doc["commands"];
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    std::string loc = "/commands/" + std::to_string(i);
    const json& c = cmds[i];
    if (!c.is_object()) throw ParseError("command must be an object", loc);
    require_string(c, "op", loc);
    std::string op = c["op"].get<std::string>();
    if (!kOps.count(op)) throw ParseError("unknown op '" + op + "'", loc + "/op");
    if (op == "add_node") {
      require_ref(c, "parent", loc, true);
      require_string(c, "kind", loc);
      std::string kind = c["kind"].get<std::string>();
      if (kind != "const" && kind != "var") throw ParseError("kind must be const or var", loc + "/kind");
      require_string(c, kind == "var" ? "regex" : "text", loc);
    } else if (op == "delete_node") {
      require_ref(c, "node", loc);
    } else if (op == "move_node") {
      require_ref(c, "node", loc);
      require_ref(c, "parent", loc, true);
    } else if (op == "merge_nodes") {
      require(c, "nodes", loc);
      if (!c["nodes"].is_array() || c["nodes"].empty()) throw ParseError("'nodes' must be a nonempty array", loc + "/nodes");
      for (const json& n : c["nodes"])
        if (!is_ref(n)) throw ParseError("'nodes' entries must be node ids", loc + "/nodes");
      require_string(c, "regex", loc);
    } else if (op == "create_field") {
      require_string(c, "name", loc);
      require_string(c, "description", loc);
    } else if (op == "assign_field") {
      require_ref(c, "node", loc);
      require(c, "name", loc);
      if (!c["name"].is_string() && !c["name"].is_null()) throw ParseError("'name' must be a string or null", loc + "/name");
    } else if (op == "set_description") {
      require_string(c, "text", loc);
      if (c.contains("template") == c.contains("field"))
        throw ParseError("set_description needs exactly one of 'template' or 'field'", loc);
      if (c.contains("template")) require_ref(c, "template", loc);
      else require_string(c, "field", loc);
    } else if (op == "assign_mapping") {
      require_string(c, "field", loc);
      require(c, "attributes", loc);
      if (!c["attributes"].is_array()) throw ParseError("'attributes' must be an array", loc + "/attributes");
      for (const json& a : c["attributes"])
        if (!a.is_string()) throw ParseError("attributes must be strings", loc + "/attributes");
    }
    for (const char* k : {"sep", "description", "field"})
      if (c.contains(k) && !c[k].is_string() && !c[k].is_null() && !(op == "set_description" && std::string(k) == "field"))
        throw ParseError(std::string("'") + k + "' must be a string", loc + "/" + k);
    s.commands.push_back(Command{op, c});
  }
  return s;
}

json script_to_json(const EditScript& script) {
  json cmds = json::array();
  for (const Command& c : script.commands) cmds.push_back(c.args);
  return json{{"rationale", script.rationale}, {"commands", cmds}};
}

std::vector<std::size_t> matched_set(const ParseTree& tree, const std::vector<std::string>& corpus) {
  CompiledTree ct(tree);
  std::vector<std::optional<NodeId>> owner = classify_all(ct, corpus);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < owner.size(); ++i)
    if (owner[i]) out.push_back(i);
  return out;
}

namespace {

class Interpreter {
public:
  Interpreter(const Bundle& bundle, const Guards& guards, const Scope& scope)
      : work_(bundle), guards_(guards), scope_(scope) {
    for (const auto& [_, n] : bundle.tree.nodes())
      if (n.field) referenced_before_.insert(*n.field);
    if (guards.corpus) baseline_ = matched_set(bundle.tree, *guards.corpus);
  }

  void run(const EditScript& script) {
    bool any_tree_change = false;
    for (std::size_t i = 0; i < script.commands.size(); ++i) {
      bool changed = apply(i, script.commands[i]);
      any_tree_change = any_tree_change || changed;
      check(i, changed, false);
    }
    collect_garbage();
    check(script.commands.size(), any_tree_change, true);
    if (std::string diag = check_integrity(work_, guards_.taxonomy); !diag.empty())
      throw GuardViolation(script.commands.size(), "integrity", diag);
  }

  Bundle take() { return std::move(work_); }

private:
  ParseTree& tree() { return work_.tree; }

  NodeId resolve(std::size_t i, const json& v) {
    NodeId id = 0;
    if (v.is_string()) {
      std::string s = v.get<std::string>();
      std::size_t k = 0;
      try {
        k = std::stoul(s.substr(1));
      } catch (const std::exception&) {
        throw UnknownId(i, s);
      }
      auto it = made_.find(k);
      if (it == made_.end()) throw UnknownId(i, s);
      id = it->second;
    } else {
      id = v.get<NodeId>();
    }
    if (!tree().contains(id)) throw UnknownId(i, "node " + std::to_string(id));
    return id;
  }

  std::optional<NodeId> resolve_parent(std::size_t i, const json& v) {
    if (v.is_null()) return std::nullopt;
    return resolve(i, v);
  }

  std::set<NodeId> leaves_below(NodeId id) {
    std::set<NodeId> out, seen;
    std::function<void(NodeId)> walk = [&](NodeId n) {
      if (!seen.insert(n).second || !tree().contains(n)) return;
      if (tree().is_leaf(n)) out.insert(n);
      for (NodeId c : tree().node(n).children) walk(c);
    };
    walk(id);
    return out;
  }

  bool node_mutable(NodeId id) {
    if (scope_.everything || created_.count(id)) return true;
    for (NodeId leaf : leaves_below(id))
      if (!scope_.templates.count(leaf) && !created_.count(leaf)) return false;
    return true;
  }

  bool parent_open(std::optional<NodeId> parent) {
    if (!parent || scope_.everything || created_.count(*parent)) return true;
    for (NodeId leaf : leaves_below(*parent))
      if (scope_.templates.count(leaf) || created_.count(leaf)) return true;
    return false;
  }

  bool field_mutable(const std::string& name) {
    if (scope_.everything || created_fields_.count(name) || scope_.fields.count(name)) return true;
    bool any = false;
    for (const auto& [id, n] : tree().nodes()) {
      if (n.field != name) continue;
      any = true;
      if (!node_mutable(id)) return false;
    }
    return any;
  }

  void need_node(std::size_t i, NodeId id) {
    if (!node_mutable(id))
      throw GuardViolation(i, "frozen", "node " + std::to_string(id) + " belongs to a read-only template");
  }

  void need_field(std::size_t i, const std::string& name) {
    if (!field_mutable(name)) throw GuardViolation(i, "frozen", "field '" + name + "' is used by read-only templates");
  }

  std::string field_name(std::size_t i, const std::string& raw) {
    std::string n = schema::normalize_name(raw);
    if (n.empty()) throw GuardViolation(i, "uniqueness", "'" + raw + "' is not a usable field name");
    return n;
  }

  // Returns the stored name, creating the field when needed.
  std::string ensure_field(std::size_t i, const std::string& raw, const json& c) {
    std::string name = field_name(i, raw);
    std::optional<std::string> desc;
    if (c.contains("description") && c["description"].is_string()) desc = c["description"].get<std::string>();
    if (SchemaField* f = work_.schema.find(name)) {
      if (desc && *desc != f->description)
        throw GuardViolation(i, "uniqueness", "field '" + name + "' already exists with another description");
      return name;
    }
    work_.schema.add(SchemaField{name, desc.value_or(""), {}, c.value("temporal", false)});
    created_fields_.insert(name);
    return name;
  }

  Token token_of(const json& c) {
    std::string sep = c.contains("sep") && c["sep"].is_string() ? c["sep"].get<std::string>() : "";
    if (c["kind"] == "var") return Token::variable(c["regex"].get<std::string>(), sep);
    return Token::constant(c["text"].get<std::string>(), sep);
  }

  // Folds identical-token children of `id` together, depth first.
  void canonicalize(NodeId id) {
    std::vector<NodeId> kids = tree().node(id).children;
    std::vector<NodeId> kept;
    for (NodeId k : kids) {
      auto same = std::find_if(kept.begin(), kept.end(), [&](NodeId s) { return tree().node(s).token == tree().node(k).token; });
      if (same == kept.end()) {
        kept.push_back(k);
        continue;
      }
      fold(*same, k);
    }
    tree().node(id).children = kept;
    for (NodeId k : kept) canonicalize(k);
  }

  void fold(NodeId into, NodeId from) {
    TokenNode src = tree().node(from);
    bool leaf = tree().is_leaf(from);
    std::string desc = leaf ? tree().template_description(from) : std::string();
    tree().erase_node(from);
    TokenNode& dst = tree().node(into);
    dst.children.insert(dst.children.end(), src.children.begin(), src.children.end());
    if (!dst.field) dst.field = src.field;
    if (leaf) {
      bool was_leaf = tree().is_leaf(into);
      tree().set_leaf(into, true);
      if (!was_leaf || tree().template_description(into).empty()) tree().set_template_description(into, desc);
    }
  }

  std::optional<NodeId> parent_of(NodeId id) {
    for (const auto& [pid, n] : tree().nodes())
      if (std::find(n.children.begin(), n.children.end(), id) != n.children.end()) return pid;
    return std::nullopt;
  }

  bool apply(std::size_t i, const Command& cmd) {
    const json& c = cmd.args;
    const std::string& op = cmd.op;
    if (op == "add_node") {
      std::optional<NodeId> parent = resolve_parent(i, c["parent"]);
      if (!parent_open(parent)) throw GuardViolation(i, "frozen", "cannot add below read-only node " + std::to_string(*parent));
      NodeId id = tree().add_node(parent, token_of(c));
      created_.insert(id);
      made_[i] = id;
      if (c.value("leaf", false)) {
        tree().set_leaf(id, true);
        if (c.contains("description") && c["description"].is_string())
          tree().set_template_description(id, c["description"].get<std::string>());
      }
      if (c.contains("field") && c["field"].is_string()) {
        json fc = json::object();
        tree().node(id).field = ensure_field(i, c["field"].get<std::string>(), fc);
      }
      return true;
    }
    if (op == "delete_node") {
      NodeId id = resolve(i, c["node"]);
      need_node(i, id);
      tree().erase_node(id);
      return true;
    }
    if (op == "move_node") {
      NodeId id = resolve(i, c["node"]);
      std::optional<NodeId> parent = resolve_parent(i, c["parent"]);
      need_node(i, id);
      if (!parent_open(parent)) throw GuardViolation(i, "frozen", "cannot move below read-only node " + std::to_string(*parent));
      auto detach = [id](std::vector<NodeId>& v) { v.erase(std::remove(v.begin(), v.end(), id), v.end()); };
      detach(tree().children_of(std::nullopt));
      for (const auto& [pid, _] : tree().nodes()) detach(tree().children_of(pid));
      tree().children_of(parent).push_back(id);
      return true;
    }
    if (op == "merge_nodes") {
      std::vector<NodeId> ids;
      for (const json& n : c["nodes"]) {
        NodeId id = resolve(i, n);
        need_node(i, id);
        if (std::find(ids.begin(), ids.end(), id) != ids.end())
          throw GuardViolation(i, "tree", "node " + std::to_string(id) + " listed twice");
        ids.push_back(id);
      }
      std::optional<NodeId> parent = parent_of(ids.front());
      for (NodeId id : ids)
        if (parent_of(id) != parent) throw GuardViolation(i, "tree", "merged nodes must share one parent");
      std::vector<NodeId> children;
      bool leaf = false;
      std::string desc;
      for (NodeId id : ids) {
        const TokenNode& n = tree().node(id);
        children.insert(children.end(), n.children.begin(), n.children.end());
        if (tree().is_leaf(id)) {
          leaf = true;
          if (desc.empty()) desc = tree().template_description(id);
        }
      }
      NodeId keep = ids.front();
      for (std::size_t k = 1; k < ids.size(); ++k) tree().erase_node(ids[k]);
      TokenNode& n = tree().node(keep);
      std::string sep = c.contains("sep") && c["sep"].is_string() ? c["sep"].get<std::string>() : n.token.separator;
      n.token = Token::variable(c["regex"].get<std::string>(), sep);
      n.children = children;
      n.field.reset();
      if (c.contains("field") && c["field"].is_string()) {
        std::string f = ensure_field(i, c["field"].get<std::string>(), c);
        tree().node(keep).field = f;
      }
      tree().set_leaf(keep, leaf);
      if (leaf && !desc.empty()) tree().set_template_description(keep, desc);
      made_[i] = keep;
      canonicalize(keep);
      return true;
    }
    if (op == "create_field") {
      std::string name = field_name(i, c["name"].get<std::string>());
      if (work_.schema.find(name)) {
        ensure_field(i, name, c);
        return false;
      }
      work_.schema.add(SchemaField{name, c["description"].get<std::string>(), {}, c.value("temporal", false)});
      created_fields_.insert(name);
      return false;
    }
    if (op == "assign_field") {
      NodeId id = resolve(i, c["node"]);
      need_node(i, id);
      if (c["name"].is_null()) {
        tree().node(id).field.reset();
      } else {
        std::string name = ensure_field(i, c["name"].get<std::string>(), c);
        tree().node(id).field = name;
      }
      return false;
    }
    if (op == "set_description") {
      std::string text = c["text"].get<std::string>();
      if (c.contains("template")) {
        NodeId id = resolve(i, c["template"]);
        if (!tree().is_leaf(id)) throw UnknownId(i, "template " + std::to_string(id));
        if (!scope_.everything && !scope_.templates.count(id) && !created_.count(id))
          throw GuardViolation(i, "frozen", "template " + std::to_string(id) + " is read-only");
        tree().set_template_description(id, text);
      } else {
        std::string name = c["field"].get<std::string>();
        SchemaField* f = work_.schema.find(name);
        if (!f) throw UnknownId(i, "field '" + name + "'");
        need_field(i, name);
        f->description = text;
      }
      return false;
    }
    if (op == "assign_mapping") {
      std::string name = c["field"].get<std::string>();
      if (!work_.schema.find(name)) throw UnknownId(i, "field '" + name + "'");
      need_field(i, name);
      std::vector<std::string> attrs = c["attributes"].get<std::vector<std::string>>();
      if (attrs.empty())
        work_.mappings.erase(name);
      else
        work_.mappings[name] = attrs;
      return false;
    }
    throw ParseError("unknown op '" + op + "'");
  }

  // Between commands a branch may still be under construction, so nodes
  // without a template below them only fail the final check.
  void check(std::size_t i, bool tree_changed, bool final) {
    if (std::string diag = tree().check_tree(final); !diag.empty()) throw GuardViolation(i, "tree", diag);
    std::set<std::string> names;
    for (const SchemaField& f : work_.schema.fields())
      if (!names.insert(f.name).second) throw GuardViolation(i, "uniqueness", "field '" + f.name + "' is defined twice");
    for (const Template& t : tree().templates()) {
      std::set<std::string> used;
      for (NodeId id : t.path) {
        const auto& f = tree().node(id).field;
        if (!f) continue;
        if (!names.count(*f)) throw GuardViolation(i, "uniqueness", "node " + std::to_string(id) + " uses unknown field '" + *f + "'");
        if (!used.insert(*f).second)
          throw GuardViolation(i, "uniqueness",
                               "template " + std::to_string(t.leaf_id) + " uses field '" + *f + "' twice");
      }
    }
    for (const auto& [field, attrs] : work_.mappings) {
      if (guards_.taxonomy)
        for (const std::string& a : attrs)
          if (!guards_.taxonomy->count(a))
            throw GuardViolation(i, "attributes", "'" + a + "' is not a taxonomy attribute");
      if (attrs.size() > work_.max_attributes)
        throw GuardViolation(i, "cap", "field '" + field + "' maps to " + std::to_string(attrs.size()) +
                                           " attributes, limit " + std::to_string(work_.max_attributes));
      std::set<std::string> seen(attrs.begin(), attrs.end());
      if (seen.size() != attrs.size()) throw GuardViolation(i, "cap", "field '" + field + "' repeats an attribute");
    }
    if (tree_changed && guards_.corpus) {
      std::vector<std::size_t> now = matched_set(tree(), *guards_.corpus);
      if (now != baseline_) {
        std::vector<std::size_t> lost, gained;
        std::set_difference(baseline_.begin(), baseline_.end(), now.begin(), now.end(), std::back_inserter(lost));
        std::set_difference(now.begin(), now.end(), baseline_.begin(), baseline_.end(), std::back_inserter(gained));
        std::string detail = std::to_string(lost.size()) + " line(s) no longer matched, " + std::to_string(gained.size()) +
                             " newly matched";
        if (!lost.empty()) detail += "; first lost line " + std::to_string(lost.front() + 1) + ": " + (*guards_.corpus)[lost.front()];
        throw GuardViolation(i, "match_set", detail);
      }
    }
  }

  void collect_garbage() {
    std::set<std::string> used;
    for (const auto& [_, n] : tree().nodes())
      if (n.field) used.insert(*n.field);
    std::vector<std::string> drop;
    for (const SchemaField& f : work_.schema.fields())
      if (!used.count(f.name) && (referenced_before_.count(f.name) || created_fields_.count(f.name))) drop.push_back(f.name);
    for (const std::string& d : drop) {
      work_.schema.remove(d);
      work_.mappings.erase(d);
    }
  }

  Bundle work_;
  const Guards& guards_;
  const Scope& scope_;
  std::set<std::string> referenced_before_;
  std::vector<std::size_t> baseline_;
  std::set<NodeId> created_;
  std::set<std::string> created_fields_;
  std::map<std::size_t, NodeId> made_;
};

}  // namespace

Bundle execute_script(const Bundle& bundle, const EditScript& script, const Guards& guards, const Scope& scope) {
  Interpreter in(bundle, guards, scope);
  try {
    in.run(script);
  } catch (const IntegrityError& e) {
    // raw tree operations refuse some shapes outright (for example a cycle)
    throw GuardViolation(script.commands.size(), "tree", e.what());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed command argument: ") + e.what());
  }
  return in.take();
}

std::vector<BatchPlan> plan_batches(std::size_t count, std::size_t window, std::size_t frozen) {
  if (window < 1) throw ConfigError("validation window must be at least 1");
  std::vector<BatchPlan> out;
  for (std::size_t start = 0; start < count; start += window) {
    BatchPlan b;
    for (std::size_t i = start; i < std::min(count, start + window); ++i) b.items.push_back(i);
    if (!out.empty()) {
      const std::vector<std::size_t>& prev = out.back().items;
      std::size_t take = std::min(frozen, prev.size());
      b.frozen.assign(prev.end() - static_cast<std::ptrdiff_t>(take), prev.end());
    }
    out.push_back(std::move(b));
  }
  return out;
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::syntax: return "syntax";
    case Stage::schema: return "schema";
    case Stage::mapping: return "mapping";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  if (name == "syntax") return Stage::syntax;
  if (name == "schema") return Stage::schema;
  if (name == "mapping") return Stage::mapping;
  throw ConfigError("unknown validation stage '" + name + "'");
}

Scope Batch::scope() const {
  Scope s;
  s.templates.insert(templates.begin(), templates.end());
  s.fields.insert(fields.begin(), fields.end());
  return s;
}

json AuditEntry::to_json() const {
  return json{{"stage", stage_name(stage)}, {"batch", batch},       {"items", items},
              {"status", status},           {"rationale", rationale}, {"commands", commands},
              {"diagnostics", diagnostics}};
}

namespace {

std::string render_template(const Bundle& b, NodeId leaf) {
  const ParseTree& t = b.tree;
  std::string out = "template " + std::to_string(leaf) + ": " + wildcard_form(t, t.template_of(leaf));
  if (std::string d = t.template_description(leaf); !d.empty()) out += "\n  description: " + d;
  out += "\n";
  for (NodeId id : t.template_of(leaf).path) {
    const TokenNode& n = t.node(id);
    out += "  [" + std::to_string(id) + "] " + (n.token.is_variable() ? "var /" + n.token.text + "/" : "const \"" + n.token.text + "\"");
    out += " sep=" + json(n.token.separator).dump();
    if (n.field) out += " field=" + *n.field;
    out += "\n";
  }
  return out;
}

std::string render_field(const Bundle& b, const SchemaField& f) {
  std::string out = "field " + f.name + ": " + f.description;
  if (auto it = b.mappings.find(f.name); it != b.mappings.end()) {
    out += "\n  mapped to:";
    for (const std::string& a : it->second) out += " " + a;
  }
  if (!f.example_values.empty()) {
    out += "\n  examples:";
    for (const std::string& v : f.example_values) out += " " + v;
  }
  return out + "\n";
}

std::vector<std::string> fields_of(const Bundle& b, const std::vector<NodeId>& leaves) {
  std::vector<std::string> out;
  for (NodeId leaf : leaves)
    for (NodeId id : b.tree.template_of(leaf).path)
      if (const auto& f = b.tree.node(id).field; f && std::find(out.begin(), out.end(), *f) == out.end()) out.push_back(*f);
  return out;
}

const char* kCommandHelp =
    "Reply with JSON {\"rationale\": \"...\", \"commands\": [...]}. An empty command list keeps everything as is. "
    "Commands:\n"
    "  {\"op\":\"add_node\",\"parent\":id|null,\"kind\":\"const\"|\"var\",\"text\"|\"regex\":...,\"sep\":...,"
    "\"leaf\":bool,\"field\":name}\n"
    "  {\"op\":\"delete_node\",\"node\":id}\n"
    "  {\"op\":\"move_node\",\"node\":id,\"parent\":id|null}\n"
    "  {\"op\":\"merge_nodes\",\"nodes\":[id,...],\"regex\":...,\"sep\":...,\"field\":name}\n"
    "  {\"op\":\"create_field\",\"name\":...,\"description\":...}\n"
    "  {\"op\":\"assign_field\",\"node\":id,\"name\":name|null,\"description\":...}\n"
    "  {\"op\":\"set_description\",\"template\":id,\"text\":...} or {\"op\":\"set_description\",\"field\":name,\"text\":...}\n"
    "  {\"op\":\"assign_mapping\",\"field\":name,\"attributes\":[path,...]}\n"
    "A node created by command k can be referenced as \"$k\". Only the editable items may change; every line that "
    "was parsed before must still be parsed afterwards.\n";

const char* stage_instructions(Stage s) {
  switch (s) {
    case Stage::syntax:
      return "Review the editable templates of a log parser. Merge sibling branches that differ only in a value "
             "that should be a variable, and fix regexes that are too broad or too narrow.";
    case Stage::schema:
      return "Review the field names of the editable templates. The same kind of value must use the same field name "
             "everywhere; merge synonyms onto one canonical name and fix misleading descriptions.";
    case Stage::mapping:
      return "Review how the editable fields map to taxonomy attributes. Fix mappings that are wrong or inconsistent "
             "across similar fields, and remove mappings that do not fit.";
  }
  return "";
}

}  // namespace

std::string render_batch(const Batch& batch, const Bundle& bundle, const Context& ctx, std::size_t sample_lines) {
  std::string out = "stage: " + std::string(stage_name(batch.stage)) + "\n";
  std::map<NodeId, std::vector<std::string>> samples;
  if (ctx.corpus && !batch.templates.empty()) {
    CompiledTree ct(bundle.tree);
    std::set<NodeId> want(batch.templates.begin(), batch.templates.end());
    for (const std::string& line : *ctx.corpus) {
      auto leaf = ct.classify(line);
      if (leaf && want.count(*leaf) && samples[*leaf].size() < sample_lines) samples[*leaf].push_back(line);
    }
  }
  if (!batch.templates.empty()) {
    out += "Editable templates:\n";
    for (NodeId leaf : batch.templates) {
      out += render_template(bundle, leaf);
      for (const std::string& l : samples[leaf]) out += "  line: " + l + "\n";
    }
  }
  if (!batch.frozen_templates.empty()) {
    out += "Read-only templates:\n";
    for (NodeId leaf : batch.frozen_templates) out += render_template(bundle, leaf);
  }
  std::vector<std::string> editable = batch.fields, frozen = batch.frozen_fields;
  if (batch.stage != Stage::mapping) {
    editable = fields_of(bundle, batch.templates);
    frozen.clear();
  }
  if (!editable.empty()) {
    out += batch.stage == Stage::mapping ? "Editable fields:\n" : "Fields used:\n";
    for (const std::string& f : editable)
      if (const SchemaField* sf = bundle.schema.find(f)) out += render_field(bundle, *sf);
  }
  if (!frozen.empty()) {
    out += "Read-only fields:\n";
    for (const std::string& f : frozen)
      if (const SchemaField* sf = bundle.schema.find(f)) out += render_field(bundle, *sf);
  }
  return out;
}

Bundle validate_batch(llm::Gateway& gw, const Batch& batch, const Bundle& bundle, const Context& ctx,
                      const Config& config, AuditEntry* audit) {
  std::string prompt = "TASK: validate-" + std::string(stage_name(batch.stage)) + "\n" + stage_instructions(batch.stage) +
                       "\n" + kCommandHelp + llm::kQueryMarker + render_batch(batch, bundle, ctx, config.sample_lines);
  Scope scope = batch.scope();
  Guards guards{ctx.corpus, ctx.taxonomy};
  AuditEntry local;
  AuditEntry& a = audit ? *audit : local;
  a.stage = batch.stage;
  if (batch.stage == Stage::mapping)
    a.items = batch.fields;
  else
    for (NodeId leaf : batch.templates) a.items.push_back(std::to_string(leaf));

  struct Outcome {
    Bundle bundle;
    EditScript script;
  };
  llm::RepairOutcome repair;
  try {
    Outcome o = llm::repair_loop<Outcome>(
        [&](const std::string& feedback, int) {
          std::string reply = gw.complete_one(llm::with_feedback(prompt, feedback));
          EditScript script;
          try {
            script = parse_script(llm::extract_json(reply));
          } catch (const ParseError& e) {
            throw InvalidReply(std::string("malformed edit script at ") + e.location() + ": " + e.what());
          }
          try {
            return Outcome{execute_script(bundle, script, guards, scope), script};
          } catch (const GuardViolation& e) {
            throw InvalidReply(e.what());
          } catch (const UnknownId& e) {
            throw InvalidReply(e.what());
          } catch (const ParseError& e) {
            throw InvalidReply(e.what());
          }
        },
        [](const Outcome&) { return std::optional<std::string>(); }, config.repair_iters, &repair);
    a.status = o.bundle == bundle ? "unchanged" : "applied";
    a.rationale = o.script.rationale;
    a.commands = script_to_json(o.script)["commands"];
    a.diagnostics = repair.diagnostics;
    return o.bundle;
  } catch (const RepairExhausted&) {
    a.status = "exhausted";
    a.diagnostics = repair.diagnostics;
    return bundle;
  }
}

Bundle validate_stage(llm::Gateway& gw, Stage stage, const Bundle& input, const Context& ctx, const Config& config,
                      std::vector<AuditEntry>* audit) {
  Bundle bundle = input;
  std::size_t batch_no = 0;
  for (std::size_t pass = 0; pass < config.passes; ++pass) {
    std::vector<NodeId> leaves(bundle.tree.leaves().begin(), bundle.tree.leaves().end());
    std::vector<std::string> fields;
    for (const SchemaField& f : bundle.schema.fields()) fields.push_back(f.name);
    std::size_t count = stage == Stage::mapping ? fields.size() : leaves.size();
    for (const BatchPlan& plan : plan_batches(count, config.window, config.frozen)) {
      Batch batch;
      batch.stage = stage;
      for (std::size_t i : plan.items) {
        if (stage == Stage::mapping) {
          if (bundle.schema.find(fields[i])) batch.fields.push_back(fields[i]);
        } else if (bundle.tree.is_leaf(leaves[i])) {
          batch.templates.push_back(leaves[i]);
        }
      }
      for (std::size_t i : plan.frozen) {
        if (stage == Stage::mapping) {
          if (bundle.schema.find(fields[i])) batch.frozen_fields.push_back(fields[i]);
        } else if (bundle.tree.is_leaf(leaves[i])) {
          batch.frozen_templates.push_back(leaves[i]);
        }
      }
      if (batch.templates.empty() && batch.fields.empty()) continue;
      AuditEntry entry;
      entry.batch = batch_no++;
      bundle = validate_batch(gw, batch, bundle, ctx, config, &entry);
      if (audit) audit->push_back(std::move(entry));
    }
  }
  return bundle;
}

}  // namespace logtree::validate
