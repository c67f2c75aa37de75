// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/bundle.hpp"

#include <fstream>
#include <sstream>

#include "logtree/error.hpp"

namespace logtree {

using nlohmann::json;
using nlohmann::ordered_json;

const SchemaField* Schema::find(std::string_view name) const {
  for (const SchemaField& f : fields_)
    if (f.name == name) return &f;
  return nullptr;
}

SchemaField* Schema::find(std::string_view name) {
  for (SchemaField& f : fields_)
    if (f.name == name) return &f;
  return nullptr;
}

bool Schema::remove(std::string_view name) {
  for (auto it = fields_.begin(); it != fields_.end(); ++it) {
    if (it->name == name) {
      fields_.erase(it);
      return true;
    }
  }
  return false;
}

std::string check_integrity(const Bundle& bundle, const std::set<std::string>* taxonomy) {
  if (std::string diag = bundle.tree.check_tree(); !diag.empty()) return diag;
  if (bundle.max_attributes < 1) return "max_attributes must be at least 1";

  std::set<std::string> names;
  for (const SchemaField& f : bundle.schema.fields()) {
    if (f.name.empty()) return "schema field with empty name";
    if (!names.insert(f.name).second) return "schema field '" + f.name + "' is defined twice";
  }
  for (const auto& [id, n] : bundle.tree.nodes()) {
    if (n.field && !names.count(*n.field))
      return "node " + std::to_string(id) + " references unknown field '" + *n.field + "'";
  }
  for (const auto& [field, attrs] : bundle.mappings) {
    if (!names.count(field)) return "mapping for unknown field '" + field + "'";
    if (attrs.size() > bundle.max_attributes)
      return "field '" + field + "' maps to " + std::to_string(attrs.size()) + " attributes, limit " +
             std::to_string(bundle.max_attributes);
    std::set<std::string> seen;
    for (const std::string& a : attrs) {
      if (a.empty()) return "field '" + field + "' maps to an empty attribute path";
      if (!seen.insert(a).second) return "field '" + field + "' maps to '" + a + "' twice";
      if (taxonomy && !taxonomy->count(a)) return "field '" + field + "' maps to unknown attribute '" + a + "'";
    }
  }
  return {};
}

ordered_json tokens_to_json(const std::vector<Token>& tokens) {
  ordered_json arr = ordered_json::array();
  for (const Token& t : tokens) {
    ordered_json j;
    j["kind"] = t.is_variable() ? "var" : "const";
    j[t.is_variable() ? "regex" : "text"] = t.text;
    j["sep"] = t.separator;
    arr.push_back(std::move(j));
  }
  return arr;
}

namespace {

const json& member(const json& obj, const char* key, const std::string& loc) {
  if (!obj.is_object()) throw ParseError("expected an object", loc);
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing key '") + key + "'", loc);
  return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& loc) {
  const json& v = member(obj, key, loc);
  if (!v.is_string()) throw ParseError(std::string("'") + key + "' must be a string", loc + "/" + key);
  return v.get<std::string>();
}

std::string opt_string(const json& obj, const char* key, const std::string& loc) {
  if (!obj.contains(key) || obj.at(key).is_null()) return {};
  return get_string(obj, key, loc);
}

std::uint64_t get_uint(const json& obj, const char* key, const std::string& loc) {
  const json& v = member(obj, key, loc);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ParseError(std::string("'") + key + "' must be a non-negative integer", loc + "/" + key);
  return v.get<std::uint64_t>();
}

const json& get_array(const json& obj, const char* key, const std::string& loc) {
  const json& v = member(obj, key, loc);
  if (!v.is_array()) throw ParseError(std::string("'") + key + "' must be an array", loc + "/" + key);
  return v;
}

NodeId to_node_id(const json& v, const std::string& loc) {
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xffffffffULL)
    throw ParseError("node id must be a 32-bit unsigned integer", loc);
  return static_cast<NodeId>(v.get<std::uint64_t>());
}

Token token_from_json(const json& j, const std::string& loc) {
  std::string kind = get_string(j, "kind", loc);
  std::string sep = opt_string(j, "sep", loc);
  if (kind == "const" || kind == "constant") {
    return Token::constant(get_string(j, "text", loc), std::move(sep));
  }
  if (kind == "var" || kind == "variable") {
    return Token::variable(get_string(j, "regex", loc), std::move(sep));
  }
  throw ParseError("unknown token kind '" + kind + "'", loc + "/kind");
}

SchemaField field_from_json(const json& j, const std::string& loc) {
  SchemaField f;
  f.name = get_string(j, "name", loc);
  f.description = opt_string(j, "description", loc);
  if (j.contains("example_values")) {
    const json& ex = get_array(j, "example_values", loc);
    for (std::size_t i = 0; i < ex.size(); ++i) {
      if (!ex[i].is_string()) throw ParseError("example value must be a string", loc + "/example_values/" + std::to_string(i));
      f.example_values.push_back(ex[i].get<std::string>());
    }
  }
  if (j.contains("temporal")) {
    if (!j.at("temporal").is_boolean()) throw ParseError("'temporal' must be a boolean", loc + "/temporal");
    f.temporal = j.at("temporal").get<bool>();
  }
  return f;
}

Mappings mappings_from_json(const json& doc) {
  Mappings out;
  if (!doc.contains("mappings")) return out;
  const json& m = doc.at("mappings");
  if (!m.is_object()) throw ParseError("'mappings' must be an object", "/mappings");
  for (const auto& [field, attrs] : m.items()) {
    std::string loc = "/mappings/" + field;
    if (!attrs.is_array()) throw ParseError("mapping must be an array of attribute paths", loc);
    std::vector<std::string> list;
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      if (!attrs[i].is_string()) throw ParseError("attribute path must be a string", loc + "/" + std::to_string(i));
      list.push_back(attrs[i].get<std::string>());
    }
    out.emplace(field, std::move(list));
  }
  return out;
}

std::size_t max_attributes_from_json(const json& doc) {
  if (!doc.contains("max_attributes")) return 1;
  return static_cast<std::size_t>(get_uint(doc, "max_attributes", ""));
}

}  // namespace

std::vector<Token> tokens_from_json(const json& tokens, const std::string& location) {
  if (!tokens.is_array()) throw ParseError("tokens must be an array", location);
  std::vector<Token> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back(token_from_json(tokens[i], location + "/" + std::to_string(i)));
  return out;
}

ordered_json to_json(const Bundle& bundle) {
  const ParseTree& tree = bundle.tree;
  ordered_json doc;
  doc["format"] = kBundleFormat;
  doc["version"] = kBundleVersion;
  doc["max_attributes"] = bundle.max_attributes;
  doc["next_id"] = tree.next_id();
  doc["roots"] = tree.roots();

  ordered_json nodes = ordered_json::array();
  for (const auto& [id, n] : tree.nodes()) {
    ordered_json j;
    j["id"] = id;
    j["kind"] = n.token.is_variable() ? "var" : "const";
    j[n.token.is_variable() ? "regex" : "text"] = n.token.text;
    j["sep"] = n.token.separator;
    if (n.field) j["field"] = *n.field;
    if (!n.description.empty()) j["description"] = n.description;
    j["children"] = n.children;
    nodes.push_back(std::move(j));
  }
  doc["nodes"] = std::move(nodes);

  ordered_json leaves = ordered_json::array();
  for (NodeId leaf : tree.leaves()) {
    ordered_json j;
    j["id"] = leaf;
    j["description"] = tree.template_description(leaf);
    leaves.push_back(std::move(j));
  }
  doc["leaves"] = std::move(leaves);

  ordered_json fields = ordered_json::array();
  for (const SchemaField& f : bundle.schema.fields()) {
    ordered_json j;
    j["name"] = f.name;
    j["description"] = f.description;
    j["example_values"] = f.example_values;
    if (f.temporal) j["temporal"] = true;
    fields.push_back(std::move(j));
  }
  doc["fields"] = std::move(fields);

  ordered_json maps = ordered_json::object();
  for (const auto& [field, attrs] : bundle.mappings) maps[field] = attrs;
  doc["mappings"] = std::move(maps);
  return doc;
}

std::string serialize(const Bundle& bundle) { return to_json(bundle).dump(2) + "\n"; }

Bundle from_json(const json& doc, const std::set<std::string>* taxonomy) {
  if (!doc.is_object()) throw ParseError("bundle must be a JSON object", "/");
  if (get_string(doc, "format", "") != kBundleFormat) throw ParseError("not a parser bundle", "/format");
  if (get_uint(doc, "version", "") != static_cast<std::uint64_t>(kBundleVersion))
    throw ParseError("unsupported bundle version", "/version");

  Bundle b;
  b.max_attributes = max_attributes_from_json(doc);
  std::uint64_t next_id = get_uint(doc, "next_id", "");
  if (next_id > 0xffffffffULL) throw ParseError("next_id out of range", "/next_id");

  std::vector<NodeId> roots;
  const json& jroots = get_array(doc, "roots", "");
  for (std::size_t i = 0; i < jroots.size(); ++i) roots.push_back(to_node_id(jroots[i], "/roots/" + std::to_string(i)));

  std::map<NodeId, TokenNode> nodes;
  const json& jnodes = get_array(doc, "nodes", "");
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    std::string loc = "/nodes/" + std::to_string(i);
    const json& jn = jnodes[i];
    TokenNode n;
    n.id = to_node_id(member(jn, "id", loc), loc + "/id");
    n.token = token_from_json(jn, loc);
    if (jn.contains("field") && !jn.at("field").is_null()) n.field = get_string(jn, "field", loc);
    n.description = opt_string(jn, "description", loc);
    const json& kids = get_array(jn, "children", loc);
    for (std::size_t k = 0; k < kids.size(); ++k)
      n.children.push_back(to_node_id(kids[k], loc + "/children/" + std::to_string(k)));
    NodeId id = n.id;
    if (!nodes.emplace(id, std::move(n)).second) throw ParseError("duplicate node id " + std::to_string(id), loc + "/id");
  }

  std::set<NodeId> leaves;
  std::map<NodeId, std::string> descriptions;
  const json& jleaves = get_array(doc, "leaves", "");
  for (std::size_t i = 0; i < jleaves.size(); ++i) {
    std::string loc = "/leaves/" + std::to_string(i);
    NodeId id = to_node_id(member(jleaves[i], "id", loc), loc + "/id");
    if (!leaves.insert(id).second) throw ParseError("duplicate leaf " + std::to_string(id), loc);
    std::string d = opt_string(jleaves[i], "description", loc);
    if (!d.empty()) descriptions.emplace(id, std::move(d));
  }
  b.tree.restore(std::move(roots), std::move(nodes), std::move(leaves), std::move(descriptions),
                 static_cast<NodeId>(next_id));

  if (doc.contains("fields")) {
    const json& jf = get_array(doc, "fields", "");
    for (std::size_t i = 0; i < jf.size(); ++i) b.schema.add(field_from_json(jf[i], "/fields/" + std::to_string(i)));
  }
  b.mappings = mappings_from_json(doc);

  if (std::string diag = check_integrity(b, taxonomy); !diag.empty()) throw IntegrityError(diag);
  return b;
}

Bundle deserialize(std::string_view document, const std::set<std::string>* taxonomy) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), "byte " + std::to_string(e.byte));
  }
  return from_json(doc, taxonomy);
}

Bundle load_bundle(const std::filesystem::path& path, const std::set<std::string>* taxonomy) {
  return deserialize(read_file(path), taxonomy);
}

void save_bundle(const std::filesystem::path& path, const Bundle& bundle) {
  write_file_atomic(path, serialize(bundle));
}

Bundle build_bundle(const json& doc) {
  if (!doc.is_object()) throw ParseError("template document must be a JSON object", "/");
  Bundle b;
  b.max_attributes = max_attributes_from_json(doc);
  if (doc.contains("fields")) {
    const json& jf = get_array(doc, "fields", "");
    for (std::size_t i = 0; i < jf.size(); ++i) b.schema.add(field_from_json(jf[i], "/fields/" + std::to_string(i)));
  }
  const json& jt = get_array(doc, "templates", "");
  for (std::size_t i = 0; i < jt.size(); ++i) {
    std::string loc = "/templates/" + std::to_string(i);
    const json& jtokens = get_array(jt[i], "tokens", loc);
    std::vector<Token> tokens = tokens_from_json(jtokens, loc + "/tokens");
    NodeId leaf = b.tree.insert_template(tokens);
    std::string d = opt_string(jt[i], "description", loc);
    if (!d.empty()) b.tree.set_template_description(leaf, d);
    std::vector<NodeId> path = b.tree.template_of(leaf).path;
    for (std::size_t k = 0; k < jtokens.size(); ++k) {
      std::string field = opt_string(jtokens[k], "field", loc + "/tokens/" + std::to_string(k));
      if (field.empty()) continue;
      TokenNode& n = b.tree.node(path[k]);
      if (n.field && *n.field != field)
        throw IntegrityError("shared node " + std::to_string(n.id) + " named both '" + *n.field + "' and '" + field + "'");
      n.field = field;
    }
  }
  b.mappings = mappings_from_json(doc);
  if (std::string diag = check_integrity(b); !diag.empty()) throw IntegrityError(diag);
  return b;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed on " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace logtree
