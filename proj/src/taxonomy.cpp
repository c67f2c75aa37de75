// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/taxonomy.hpp"

#include <algorithm>

#include "logtree/error.hpp"

namespace logtree::taxonomy {

using nlohmann::json;

std::string parent_of(const std::string& path) {
  std::size_t dot = path.rfind('.');
  return dot == std::string::npos ? std::string() : path.substr(0, dot);
}

std::vector<RawAttribute> parse_taxonomy(const json& doc) {
  const json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("attributes")) throw ParseError("taxonomy needs an 'attributes' array", "/attributes");
    list = &doc["attributes"];
  }
  if (!list->is_array()) throw ParseError("taxonomy attributes must be an array", doc.is_object() ? "/attributes" : "");
  std::string base = doc.is_object() ? "/attributes/" : "/";
  std::vector<RawAttribute> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const json& a = (*list)[i];
    std::string loc = base + std::to_string(i);
    if (!a.is_object() || !a.contains("path") || !a["path"].is_string()) throw ParseError("attribute needs a string 'path'", loc);
    RawAttribute r;
    r.path = a["path"].get<std::string>();
    if (r.path.empty() || r.path.front() == '.' || r.path.back() == '.' || r.path.find("..") != std::string::npos ||
        r.path.find_first_of(" \t\n") != std::string::npos)
      throw ParseError("malformed attribute path '" + r.path + "'", loc + "/path");
    if (!seen.insert(r.path).second) throw ParseError("duplicate attribute path '" + r.path + "'", loc + "/path");
    if (a.contains("description")) {
      if (!a["description"].is_string()) throw ParseError("'description' must be a string", loc + "/description");
      r.description = a["description"].get<std::string>();
    }
    if (a.contains("type") && !a["type"].is_null()) {
      if (!a["type"].is_string()) throw ParseError("'type' must be a string", loc + "/type");
      r.type = a["type"].get<std::string>();
    }
    out.push_back(std::move(r));
  }
  return out;
}

AttributeIndex::AttributeIndex(std::vector<Attribute> attributes, std::string version)
    : attributes_(std::move(attributes)), version_(std::move(version)) {
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (!by_path_.emplace(attributes_[i].path, i).second)
      throw IntegrityError("duplicate attribute '" + attributes_[i].path + "' in index");
    if (attributes_[i].embedding.empty()) throw IntegrityError("attribute '" + attributes_[i].path + "' is not embedded");
  }
}

const Attribute* AttributeIndex::find(const std::string& path) const {
  auto it = by_path_.find(path);
  return it == by_path_.end() ? nullptr : &attributes_[it->second];
}

std::set<std::string> AttributeIndex::paths() const {
  std::set<std::string> out;
  for (const Attribute& a : attributes_) out.insert(a.path);
  return out;
}

std::set<std::string> AttributeIndex::type_tags() const {
  std::set<std::string> out;
  for (const Attribute& a : attributes_)
    if (a.type) out.insert(*a.type);
  return out;
}

std::vector<std::string> AttributeIndex::siblings(const std::string& path) const {
  std::vector<std::string> out;
  std::string parent = parent_of(path);
  for (const Attribute& a : attributes_)
    if (a.path != path && a.parent == parent) out.push_back(a.path);
  return out;
}

json AttributeIndex::to_json() const {
  json attrs = json::array();
  for (const Attribute& a : attributes_) {
    json j{{"path", a.path}, {"description", a.description}, {"embedding", a.embedding}};
    if (a.type) j["type"] = *a.type;
    attrs.push_back(std::move(j));
  }
  return json{{"format", "logtree-attribute-index"}, {"version", version_}, {"attributes", attrs}};
}

AttributeIndex AttributeIndex::from_json(const json& doc) {
  try {
    if (doc.at("format") != "logtree-attribute-index") throw ParseError("not an attribute index", "/format");
    std::vector<Attribute> attrs;
    for (const json& j : doc.at("attributes")) {
      Attribute a;
      a.path = j.at("path").get<std::string>();
      a.parent = parent_of(a.path);
      a.description = j.at("description").get<std::string>();
      a.embedding = j.at("embedding").get<llm::Embedding>();
      if (j.contains("type")) a.type = j["type"].get<std::string>();
      attrs.push_back(std::move(a));
    }
    return AttributeIndex(std::move(attrs), doc.at("version").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed attribute index: ") + e.what());
  }
}

void AttributeIndex::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json().dump() + "\n"); }

AttributeIndex AttributeIndex::load(const std::filesystem::path& path) {
  std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("attribute index is not JSON: ") + e.what(), "byte " + std::to_string(e.byte));
  }
  return from_json(doc);
}

std::string taxonomy_version(const json& doc) { return llm::hex64(llm::fnv1a64(doc.dump())); }

AttributeIndex preprocess_taxonomy(llm::Gateway& gw, const json& doc) {
  std::vector<RawAttribute> raw = parse_taxonomy(doc);
  std::vector<Attribute> attrs;
  for (const RawAttribute& r : raw) {
    std::string prompt =
        "TASK: describe-attribute\nWrite one or two sentences explaining what values this attribute of a security "
        "event taxonomy holds and when a log field belongs in it.";
    prompt += std::string(llm::kQueryMarker) + "attribute: " + r.path + "\n";
    if (!r.description.empty()) prompt += "official description: " + r.description + "\n";
    if (r.type) prompt += "type: " + *r.type + "\n";
    std::string written = llm::normalize_prompt(gw.complete_one(prompt));
    if (written.empty()) throw ProviderError("model returned an empty description for " + r.path);
    Attribute a;
    a.path = r.path;
    a.parent = parent_of(r.path);
    a.type = r.type;
    a.description = r.description.empty() ? written : r.description + " " + written;
    a.embedding = gw.embed(r.path + ": " + a.description);
    attrs.push_back(std::move(a));
  }
  return AttributeIndex(std::move(attrs), taxonomy_version(doc));
}

std::string field_text(const SchemaField& f) { return f.name + ": " + f.description; }

std::vector<Candidate> shortlist(llm::Gateway& gw, const AttributeIndex& index, const SchemaField& field,
                                 const std::set<std::string>& assigned, std::size_t k) {
  llm::Embedding q = gw.embed(field_text(field));
  std::vector<Candidate> all;
  for (const Attribute& a : index.attributes()) all.push_back({a.path, llm::cosine(q, a.embedding), false});
  std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) { return a.similarity > b.similarity; });
  std::vector<Candidate> out(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(k, all.size())));
  std::set<std::string> listed;
  for (const Candidate& c : out) listed.insert(c.path);
  std::vector<Candidate> injected;
  for (const std::string& a : assigned) {
    if (!index.contains(a)) continue;
    for (const std::string& s : index.siblings(a)) {
      if (!listed.insert(s).second) continue;
      injected.push_back({s, llm::cosine(q, index.find(s)->embedding), true});
    }
  }
  std::stable_sort(injected.begin(), injected.end(),
                   [](const Candidate& a, const Candidate& b) { return a.similarity > b.similarity; });
  out.insert(out.end(), injected.begin(), injected.end());
  return out;
}

std::string assign_type(llm::Gateway& gw, const SchemaField& field, const std::set<std::string>& tags, int repair_iters) {
  std::string prompt = "TASK: assign-type\nPick the type that best fits the values of this log field. Reply with JSON "
                       "{\"type\": \"...\"} using one of the listed types.";
  prompt += std::string(llm::kQueryMarker) + "field: " + field_text(field) + "\n";
  if (!field.example_values.empty()) {
    prompt += "example values:";
    for (const std::string& v : field.example_values) prompt += " " + v;
    prompt += "\n";
  }
  prompt += "types:";
  for (const std::string& t : tags) prompt += " " + t;
  prompt += "\n";
  return llm::repair_loop<std::string>(
      [&](const std::string& feedback, int) {
        json doc = llm::extract_json(gw.complete_one(llm::with_feedback(prompt, feedback)));
        if (!doc.is_object() || !doc.contains("type") || !doc["type"].is_string())
          throw InvalidReply("reply must be {\"type\": \"...\"}");
        return doc["type"].get<std::string>();
      },
      [&](const std::string& t) -> std::optional<std::string> {
        if (!tags.count(t)) return "'" + t + "' is not one of the listed types";
        return std::nullopt;
      },
      repair_iters);
}

std::vector<Candidate> prune_by_type(const std::vector<Candidate>& candidates, const AttributeIndex& index,
                                     const std::string& tag) {
  std::vector<Candidate> out;
  for (const Candidate& c : candidates) {
    const Attribute* a = index.find(c.path);
    if (a && a->type == tag) out.push_back(c);
  }
  return out.empty() ? candidates : out;
}

std::vector<std::string> map_field(llm::Gateway& gw, const SchemaField& field, const AttributeIndex& index,
                                   const std::vector<Candidate>& candidates, std::size_t n, int repair_iters,
                                   const std::string& examples, llm::RepairOutcome* outcome) {
  if (candidates.empty()) throw InputError("map_field needs at least one candidate");
  std::string prompt = "TASK: map-field\nChoose the taxonomy attributes, if any, that hold the same information as "
                       "the log field. Pick at most " +
                       std::to_string(n) +
                       " and only from the candidate list; reply {\"attributes\": []} when none fits. Reply with "
                       "JSON {\"attributes\": [\"path\", ...]}.\n" +
                       examples;
  prompt += std::string(llm::kQueryMarker) + "field: " + field_text(field) + "\n";
  if (!field.example_values.empty()) {
    prompt += "example values:";
    for (const std::string& v : field.example_values) prompt += " " + v;
    prompt += "\n";
  }
  prompt += "candidates:\n";
  std::set<std::string> allowed;
  for (const Candidate& c : candidates) {
    allowed.insert(c.path);
    const Attribute* a = index.find(c.path);
    prompt += "- " + c.path + (a ? ": " + a->description : std::string()) + "\n";
  }
  return llm::repair_loop<std::vector<std::string>>(
      [&](const std::string& feedback, int) {
        std::string reply = gw.complete_one(llm::with_feedback(prompt, feedback));
        if (llm::normalize_prompt(reply) == "none") return std::vector<std::string>{};
        json doc = llm::extract_json(reply);
        if (!doc.is_object() || !doc.contains("attributes") || !doc["attributes"].is_array())
          throw InvalidReply("reply must be {\"attributes\": [...]}");
        std::vector<std::string> out;
        for (const json& a : doc["attributes"]) {
          if (!a.is_string()) throw InvalidReply("attributes must be strings");
          if (a == "none") continue;
          out.push_back(a.get<std::string>());
        }
        return out;
      },
      [&](const std::vector<std::string>& attrs) -> std::optional<std::string> {
        if (attrs.size() > n)
          return "chose " + std::to_string(attrs.size()) + " attributes but at most " + std::to_string(n) + " are allowed";
        std::set<std::string> seen;
        for (const std::string& a : attrs) {
          if (!allowed.count(a)) return "'" + a + "' is not in the candidate list";
          if (!seen.insert(a).second) return "'" + a + "' is listed twice";
        }
        return std::nullopt;
      },
      repair_iters, outcome);
}

std::set<std::string> co_fields(const Bundle& bundle, const std::string& field) {
  std::set<std::string> out;
  for (const Template& t : bundle.tree.templates()) {
    std::set<std::string> names;
    for (NodeId id : t.path)
      if (const auto& f = bundle.tree.node(id).field) names.insert(*f);
    if (!names.count(field)) continue;
    for (const std::string& n : names)
      if (n != field) out.insert(n);
  }
  return out;
}

json Report::to_json() const {
  json rows = json::array();
  for (const FieldReport& f : fields) {
    json r{{"field", f.field},       {"candidates", f.candidates}, {"injected", f.injected},
           {"attributes", f.attributes}, {"rejected", f.rejected}, {"failed", f.failed}};
    if (f.type) r["type"] = *f.type;
    rows.push_back(std::move(r));
  }
  return json{{"fields", rows}, {"conflicts", conflicts}};
}

Report map_all(llm::Gateway& gw, Bundle& bundle, const AttributeIndex& index, const Config& config) {
  Report report;
  std::set<std::string> tags = config.use_types ? index.type_tags() : std::set<std::string>{};
  llm::ExampleStore shots;
  for (const SchemaField& field : bundle.schema.fields()) {
    FieldReport fr;
    fr.field = field.name;
    std::set<std::string> assigned;
    for (const std::string& co : co_fields(bundle, field.name))
      if (auto it = bundle.mappings.find(co); it != bundle.mappings.end()) assigned.insert(it->second.begin(), it->second.end());
    std::vector<Candidate> cands = shortlist(gw, index, field, assigned, config.shortlist_k);
    try {
      if (!tags.empty()) {
        fr.type = assign_type(gw, field, tags, config.repair_iters);
        cands = prune_by_type(cands, index, *fr.type);
      }
      for (const Candidate& c : cands)
        if (c.injected) fr.injected.push_back(c.path);
      fr.candidates = cands.size();
      std::string examples;
      if (config.fewshot && shots.size())
        examples = llm::render_examples(llm::nearest_examples(gw, shots, field_text(field), config.fewshot_k));
      llm::RepairOutcome outcome;
      try {
        fr.attributes =
            map_field(gw, field, index, cands, bundle.max_attributes, config.repair_iters, examples, &outcome);
      } catch (const RepairExhausted&) {
        fr.rejected = outcome.diagnostics;
        throw;
      }
      fr.rejected = outcome.diagnostics;
      if (config.fewshot) {
        std::string text = field_text(field);
        shots.add(llm::Example{text, gw.embed(text), text, json{{"attributes", fr.attributes}}.dump()});
      }
    } catch (const RepairExhausted&) {
      fr.failed = true;
      fr.attributes.clear();
    }
    if (fr.attributes.empty())
      bundle.mappings.erase(field.name);
    else
      bundle.mappings[field.name] = fr.attributes;
    report.fields.push_back(std::move(fr));
  }
  std::map<std::string, std::vector<std::string>> users;
  for (const auto& [field, attrs] : bundle.mappings)
    for (const std::string& a : attrs) users[a].push_back(field);
  for (auto& [a, fs] : users)
    if (fs.size() > 1) report.conflicts[a] = fs;
  return report;
}

}  // namespace logtree::taxonomy
