// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/schema.hpp"

#include <cctype>
#include <map>
#include <set>

#include "logtree/error.hpp"
#include "logtree/matcher.hpp"

namespace logtree::schema {

using nlohmann::json;

std::string normalize_name(std::string_view raw) {
  std::string out;
  bool pending = false;
  char prev = 0;
  for (char ch : raw) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      bool hump = std::isupper(c) && prev && (std::islower(static_cast<unsigned char>(prev)) ||
                                               std::isdigit(static_cast<unsigned char>(prev)));
      if ((pending || hump) && !out.empty()) out += '_';
      pending = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending = true;
    }
    prev = ch;
  }
  if (!out.empty() && std::isdigit(static_cast<unsigned char>(out.front()))) out = "f_" + out;
  return out;
}

std::string register_field(Schema& schema, std::string_view name, std::string description, bool temporal) {
  std::string norm = normalize_name(name);
  if (norm.empty()) throw InputError("field name '" + std::string(name) + "' has no identifier characters");
  if (const SchemaField* f = schema.find(norm)) {
    if (f->description != description) throw NameCollision(norm, f->description, description);
    return norm;
  }
  schema.add(SchemaField{norm, std::move(description), {}, temporal});
  return norm;
}

namespace {

std::string token_line(const ParseTree& tree, const Schema& schema, NodeId id) {
  const TokenNode& n = tree.node(id);
  std::string s = "[" + std::to_string(id) + "] ";
  s += n.token.is_variable() ? "variable /" + n.token.text + "/" : "constant \"" + n.token.text + "\"";
  if (n.field) {
    s += "  already named " + *n.field;
    if (const SchemaField* f = schema.find(*n.field)) s += ": " + f->description;
  }
  return s + "\n";
}

NamingAssignment decode(const std::string& reply, NodeId leaf) {
  json doc = llm::extract_json(reply);
  if (!doc.is_object()) throw InvalidReply("reply must be a JSON object");
  NamingAssignment a;
  a.leaf = leaf;
  if (!doc.contains("template_description") || !doc["template_description"].is_string())
    throw InvalidReply("missing string 'template_description'");
  a.template_description = doc["template_description"].get<std::string>();
  if (!doc.contains("fields") || !doc["fields"].is_array()) throw InvalidReply("missing 'fields' array");
  for (const json& f : doc["fields"]) {
    if (!f.is_object() || !f.contains("token") || !f["token"].is_number_unsigned() || !f.contains("name") ||
        !f["name"].is_string())
      throw InvalidReply("each field needs an integer 'token' and a string 'name'");
    FieldName fn;
    fn.token = f["token"].get<NodeId>();
    fn.name = f["name"].get<std::string>();
    fn.description = f.value("description", std::string());
    fn.temporal = f.value("temporal", false);
    a.fields.push_back(std::move(fn));
  }
  return a;
}

}  // namespace

NamingAssignment name_template(llm::Gateway& gw, NodeId leaf, const ParseTree& tree, const Schema& schema,
                               const std::vector<std::string>& samples, const llm::ExampleStore* examples,
                               const Config& config) {
  Template t = tree.template_of(leaf);
  std::string wildcard = wildcard_form(tree, t);
  std::string query = "Template: " + wildcard + "\nTokens:\n";
  for (NodeId id : t.path) query += token_line(tree, schema, id);
  query += "Sample lines:\n";
  for (std::size_t i = 0; i < samples.size() && i < config.sample_lines; ++i) query += samples[i] + "\n";

  std::string shots;
  if (config.fewshot && examples && examples->size())
    shots = llm::render_examples(llm::nearest_examples(gw, *examples, gw.describe(wildcard, "template"), config.fewshot_k));

  std::string prompt =
      "TASK: name-template\nGive every variable token of the log template a short snake_case field name and a "
      "one-sentence description. Also name constants that carry meaning on their own (a program name, an action); "
      "leave the rest out. Tokens marked as already named must keep exactly that name. Use the same name for the "
      "same kind of value across templates. Mark time stamps as temporal. Reply with JSON {\"template_description\": "
      "\"...\", \"fields\": [{\"token\": id, \"name\": \"...\", \"description\": \"...\", \"temporal\": false}]}.\n" +
      shots + llm::kQueryMarker + query;

  std::set<NodeId> on_path(t.path.begin(), t.path.end());
  return llm::repair_loop<NamingAssignment>(
      [&](const std::string& feedback, int) { return decode(gw.complete_one(llm::with_feedback(prompt, feedback)), leaf); },
      [&](const NamingAssignment& a) -> std::optional<std::string> {
        if (a.template_description.empty()) return std::string("the template description is empty");
        std::map<NodeId, const FieldName*> by_token;
        std::set<std::string> names;
        for (const FieldName& f : a.fields) {
          if (!on_path.count(f.token)) return "token " + std::to_string(f.token) + " is not part of this template";
          if (by_token.count(f.token)) return "token " + std::to_string(f.token) + " is named twice";
          std::string norm = normalize_name(f.name);
          if (norm.empty()) return "token " + std::to_string(f.token) + " has an empty name";
          if (!names.insert(norm).second) return "the name '" + norm + "' is used for two tokens of one template";
          const TokenNode& n = tree.node(f.token);
          if (n.field && *n.field != norm)
            return "token " + std::to_string(f.token) + " is already named '" + *n.field + "'; reuse that name";
          by_token[f.token] = &f;
        }
        for (NodeId id : t.path) {
          const TokenNode& n = tree.node(id);
          if (n.token.is_variable() && !by_token.count(id) && !n.field)
            return "variable token " + std::to_string(id) + " has no name";
          if (n.field && by_token.count(id) == 0 && n.token.is_variable())
            return "token " + std::to_string(id) + " is already named '" + *n.field + "'; include it with that name";
        }
        return std::nullopt;
      },
      config.repair_iters);
}

std::vector<std::string> apply_assignment(const NamingAssignment& a, Bundle& bundle) {
  std::vector<std::string> collisions;
  if (!a.template_description.empty()) bundle.tree.set_template_description(a.leaf, a.template_description);
  for (const FieldName& f : a.fields) {
    TokenNode& n = bundle.tree.node(f.token);
    if (n.field) continue;  // inherited names keep their registered description
    std::string norm;
    try {
      norm = register_field(bundle.schema, f.name, f.description, f.temporal);
    } catch (const NameCollision& e) {
      norm = e.name();
      collisions.push_back(norm);
    }
    n.field = norm;
  }
  return collisions;
}

std::vector<InventoryRow> field_inventory(const Bundle& bundle) {
  std::map<std::string, std::size_t> count;
  for (const auto& [_, n] : bundle.tree.nodes())
    if (n.field) ++count[*n.field];
  std::vector<InventoryRow> rows;
  for (const SchemaField& f : bundle.schema.fields()) rows.push_back({f.name, f.description, count[f.name]});
  return rows;
}

void collect_examples(Bundle& bundle, const std::vector<std::string>& corpus, std::size_t per_field) {
  for (SchemaField& f : bundle.schema.fields()) f.example_values.clear();
  CompiledTree ct(bundle.tree);
  std::vector<MatchResult> results = ingest_parallel(ct, corpus);
  for (const MatchResult& r : results) {
    if (!r.record) continue;
    for (const Capture& c : r.record->captures) {
      SchemaField* f = bundle.schema.find(c.key);
      if (!f || f->example_values.size() >= per_field) continue;
      if (std::find(f->example_values.begin(), f->example_values.end(), c.value) == f->example_values.end())
        f->example_values.push_back(c.value);
    }
  }
}

Report name_all(llm::Gateway& gw, Bundle& bundle, const std::vector<std::string>& corpus, const Config& config) {
  Report report;
  CompiledTree ct(bundle.tree);
  std::map<NodeId, std::vector<std::string>> samples;
  for (const std::string& line : corpus) {
    if (auto leaf = ct.classify(line); leaf && samples[*leaf].size() < config.sample_lines) samples[*leaf].push_back(line);
  }
  llm::ExampleStore examples;
  for (NodeId leaf : bundle.tree.leaves()) {
    NamingAssignment a;
    try {
      a = name_template(gw, leaf, bundle.tree, bundle.schema, samples[leaf], &examples, config);
    } catch (const RepairExhausted& e) {
      report.unnamed.push_back(leaf);
      report.events.push_back("template " + std::to_string(leaf) + " left unnamed: " + e.what());
      continue;
    }
    for (const std::string& c : apply_assignment(a, bundle)) {
      report.collisions.push_back(c);
      report.events.push_back("template " + std::to_string(leaf) + ": description of '" + c + "' differs from the registered one");
    }
    ++report.named;
    if (config.fewshot) {
      std::string wildcard = wildcard_form(bundle.tree, bundle.tree.template_of(leaf));
      std::string desc = gw.describe(wildcard, "template");
      json out{{"template_description", a.template_description}, {"fields", json::array()}};
      for (const FieldName& f : a.fields)
        out["fields"].push_back({{"token", f.token}, {"name", normalize_name(f.name)}, {"description", f.description}});
      examples.add(llm::Example{desc, gw.embed(desc), wildcard, out.dump()});
    }
  }
  collect_examples(bundle, corpus, config.example_values);
  return report;
}

}  // namespace logtree::schema
