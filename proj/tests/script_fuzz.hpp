// Random edit scripts and an independent guard check, shared by the unit
// tests and the acceptance binary.
#pragma once

#include <random>
#include <set>
#include <string>
#include <vector>

#include "logtree/bundle.hpp"
#include "logtree/matcher.hpp"
#include "logtree/validate.hpp"

namespace fuzz {

using logtree::Bundle;
using logtree::NodeId;
using nlohmann::json;

inline const std::vector<std::string> kAttributes = {"src_endpoint.ip", "src_endpoint.port", "dst_endpoint.ip",
                                                     "user.name", "time", "process.pid", "device.hostname"};

inline json random_command(const Bundle& b, std::mt19937_64& rng, std::size_t index) {
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  std::vector<NodeId> ids;
  for (const auto& [id, _] : b.tree.nodes()) ids.push_back(id);
  std::vector<std::string> fields;
  for (const auto& f : b.schema.fields()) fields.push_back(f.name);
  auto node_ref = [&]() -> json {
    std::size_t r = pick(20);
    if (r == 0) return 99999;
    if (r == 1 && index > 0) return "$" + std::to_string(pick(index));
    return ids.empty() ? json(1) : json(ids[pick(ids.size())]);
  };
  auto parent_ref = [&]() -> json { return pick(6) == 0 ? json(nullptr) : node_ref(); };
  auto field_name = [&]() -> std::string {
    if (!fields.empty() && pick(3) != 0) return fields[pick(fields.size())];
    static const char* fresh[] = {"cwd", "current_working_directory", "new_field", "Src IP", "x"};
    return fresh[pick(5)];
  };
  auto description = [&]() -> std::string {
    static const char* d[] = {"", "A value.", "Client address.", "Something else entirely."};
    return d[pick(4)];
  };
  static const char* regexes[] = {"\\S+", "\\d+", "[a-z]+", ".*", "(", "\\w+", "pw|pka|mfa", "[0-9.]+"};
  static const char* texts[] = {"sshd", "Accepted", "op1", "x", ":", "login"};
  static const char* seps[] = {"", " ", ": "};

  json c;
  switch (pick(8)) {
    case 0: {
      bool var = pick(2) == 0;
      c = {{"op", "add_node"}, {"parent", parent_ref()}, {"kind", var ? "var" : "const"}, {"sep", seps[pick(3)]}};
      if (var) c["regex"] = regexes[pick(8)];
      else c["text"] = texts[pick(6)];
      if (pick(2) == 0) c["leaf"] = true;
      if (pick(3) == 0) c["field"] = field_name();
      break;
    }
    case 1: c = {{"op", "delete_node"}, {"node", node_ref()}}; break;
    case 2: c = {{"op", "move_node"}, {"node", node_ref()}, {"parent", parent_ref()}}; break;
    case 3: {
      json nodes = json::array();
      std::size_t n = 1 + pick(3);
      // bias towards real siblings so merges sometimes succeed
      if (!ids.empty() && pick(2) == 0) {
        const auto& kids = b.tree.node(ids[pick(ids.size())]).children;
        for (std::size_t k = 0; k < kids.size() && k < n; ++k) nodes.push_back(kids[k]);
      }
      while (nodes.size() < n) nodes.push_back(node_ref());
      c = {{"op", "merge_nodes"}, {"nodes", nodes}, {"regex", regexes[pick(8)]}, {"sep", seps[pick(3)]}};
      if (pick(2) == 0) c["field"] = field_name();
      break;
    }
    case 4: c = {{"op", "create_field"}, {"name", field_name()}, {"description", description()}}; break;
    case 5: {
      c = {{"op", "assign_field"}, {"node", node_ref()}, {"name", pick(8) == 0 ? json(nullptr) : json(field_name())}};
      if (pick(2) == 0) c["description"] = description();
      break;
    }
    case 6: {
      if (pick(2) == 0) {
        std::vector<NodeId> leaves(b.tree.leaves().begin(), b.tree.leaves().end());
        c = {{"op", "set_description"}, {"template", leaves.empty() ? node_ref() : json(leaves[pick(leaves.size())])},
             {"text", "Edited."}};
      } else {
        c = {{"op", "set_description"}, {"field", field_name()}, {"text", "Edited."}};
      }
      break;
    }
    default: {
      json attrs = json::array();
      std::size_t n = pick(3);
      for (std::size_t k = 0; k < n; ++k) attrs.push_back(pick(6) == 0 ? std::string("made.up") : kAttributes[pick(kAttributes.size())]);
      c = {{"op", "assign_mapping"}, {"field", field_name()}, {"attributes", attrs}};
    }
  }
  return c;
}

inline logtree::validate::EditScript random_script(const Bundle& b, std::mt19937_64& rng) {
  json cmds = json::array();
  std::size_t n = 1 + rng() % 4;
  for (std::size_t i = 0; i < n; ++i) cmds.push_back(random_command(b, rng, i));
  return logtree::validate::parse_script(json{{"rationale", "fuzz"}, {"commands", cmds}});
}

/// Recomputes every guard from scratch. Returns the first violation or "".
inline std::string independent_guard_check(const Bundle& before, const Bundle& after,
                                           const std::vector<std::string>& corpus,
                                           const std::set<std::string>& taxonomy) {
  if (std::string d = logtree::check_integrity(after, &taxonomy); !d.empty()) return "integrity: " + d;
  for (const auto& [field, attrs] : after.mappings)
    if (attrs.size() > after.max_attributes) return "cap: " + field;
  for (const auto& t : after.tree.templates()) {
    std::set<std::string> used;
    for (NodeId id : t.path)
      if (const auto& f = after.tree.node(id).field; f && !used.insert(*f).second) return "uniqueness: " + *f;
  }
  logtree::CompiledTree a(before.tree), z(after.tree);
  auto was = logtree::ingest_serial(a, corpus);
  auto now = logtree::ingest_serial(z, corpus);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (was[i].matched() != now[i].matched()) return "match_set: line " + std::to_string(i + 1);
  return {};
}

}  // namespace fuzz
