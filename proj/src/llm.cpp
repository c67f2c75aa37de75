// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "logtree/bundle.hpp"

namespace logtree::llm {

using nlohmann::json;

std::string normalize_prompt(std::string_view prompt) {
  std::string out;
  out.reserve(prompt.size());
  bool space = false;
  for (char c : prompt) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string prompt_hash(std::string_view prompt) { return hex64(fnv1a64(normalize_prompt(prompt))); }

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw InputError("cosine of vectors with different dimensions");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Embedding hashed_embedding(std::string_view text, std::size_t dim) {
  Embedding v(dim, 0.0);
  std::string word;
  auto flush = [&]() {
    if (word.empty()) return;
    std::uint64_t h = fnv1a64(word);
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
    word.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      flush();
    }
  }
  flush();
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm > 0)
    for (double& x : v) x /= norm;
  return v;
}

namespace {

std::vector<std::string> string_list(const json& j, const std::string& loc) {
  std::vector<std::string> out;
  if (j.is_string()) return {j.get<std::string>()};
  if (!j.is_array()) throw ParseError("expected a string or an array of strings", loc);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw ParseError("expected a string", loc + "/" + std::to_string(i));
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

Embedding vector_from_json(const json& j, const std::string& loc) {
  if (!j.is_array()) throw ParseError("embedding must be an array of numbers", loc);
  Embedding v;
  for (const json& x : j) {
    if (!x.is_number()) throw ParseError("embedding must be an array of numbers", loc);
    v.push_back(x.get<double>());
  }
  return v;
}

}  // namespace

MockProvider::MockProvider(const json& transcript, std::string identity) : identity_(std::move(identity)) {
  if (!transcript.is_object()) throw ParseError("transcript must be a JSON object", "/");
  if (transcript.contains("embedding_dim")) {
    if (!transcript["embedding_dim"].is_number_unsigned() || transcript["embedding_dim"].get<std::size_t>() == 0)
      throw ParseError("embedding_dim must be a positive integer", "/embedding_dim");
    dim_ = transcript["embedding_dim"].get<std::size_t>();
  }
  if (transcript.contains("entries")) {
    const json& entries = transcript["entries"];
    if (!entries.is_array()) throw ParseError("entries must be an array", "/entries");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      std::string loc = "/entries/" + std::to_string(i);
      const json& e = entries[i];
      if (!e.is_object()) throw ParseError("entry must be an object", loc);
      Entry entry;
      if (e.contains("match")) entry.match = string_list(e["match"], loc + "/match");
      if (e.contains("exclude")) entry.exclude = string_list(e["exclude"], loc + "/exclude");
      if (e.contains("prompt_hash")) entry.hash = e["prompt_hash"].get<std::string>();
      if (!e.contains("response")) throw ParseError("entry lacks a response", loc);
      const json& r = e["response"];
      entry.response = r.is_string() ? r.get<std::string>() : r.dump();
      if (entry.match.empty() && entry.hash.empty()) throw ParseError("entry needs 'match' or 'prompt_hash'", loc);
      entries_.push_back(std::move(entry));
    }
  }
  if (transcript.contains("embeddings")) {
    for (const auto& [text, vec] : transcript["embeddings"].items()) {
      Embedding v = vector_from_json(vec, "/embeddings/" + text);
      if (v.size() != dim_) throw ParseError("embedding has wrong dimension", "/embeddings/" + text);
      embeddings_.emplace(text, std::move(v));
    }
  }
}

std::unique_ptr<MockProvider> MockProvider::from_file(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), path.string() + ": byte " + std::to_string(e.byte));
  }
  return std::make_unique<MockProvider>(doc);
}

std::string MockProvider::complete(const std::string& prompt, double) {
  ++completion_calls_;
  std::string norm = normalize_prompt(prompt);
  std::string hash = hex64(fnv1a64(norm));
  {
    std::lock_guard lock(mu_);
    prompts_.push_back(prompt);
  }
  std::size_t marker = prompt.rfind(kQueryMarker);
  std::string query = marker == std::string::npos ? norm : normalize_prompt(prompt.substr(marker));
  std::string header = normalize_prompt(prompt.substr(0, prompt.find('\n')));
  for (const Entry& e : entries_) {
    if (!e.hash.empty() && e.hash != hash) continue;
    bool ok = true;
    for (const std::string& m : e.match) {
      std::string needle = normalize_prompt(m);
      ok = ok && (query.find(needle) != std::string::npos || header.find(needle) != std::string::npos);
    }
    for (const std::string& x : e.exclude) ok = ok && query.find(normalize_prompt(x)) == std::string::npos;
    if (ok) return e.response;
  }
  if (!unmatched_log_.empty()) {
    std::lock_guard lock(mu_);
    std::ofstream out(unmatched_log_, std::ios::app);
    out << json(prompt).dump() << '\n';
  }
  std::string head = norm.substr(0, 240);
  throw ProviderError("mock transcript has no entry for prompt " + hash + ": " + head);
}

Embedding MockProvider::embed(const std::string& text) {
  ++embedding_calls_;
  auto it = embeddings_.find(text);
  if (it != embeddings_.end()) return it->second;
  return hashed_embedding(text, dim_);
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw CacheError("cannot create cache directory " + dir_.string() + ": " + ec.message());
  auto load = [&](const char* name, auto&& apply) {
    std::filesystem::path file = dir_ / name;
    if (!std::filesystem::exists(file)) return;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CacheError("cannot read " + file.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        json row = json::parse(line);
        apply(row);
      } catch (const std::exception& e) {
        throw CacheError(file.string() + ":" + std::to_string(lineno) + ": corrupt cache entry: " + e.what());
      }
    }
  };
  load("completions.jsonl", [&](const json& row) {
    std::vector<std::string> rs = row.at("responses").get<std::vector<std::string>>();
    completions_[row.at("key").get<std::string>()] = std::move(rs);
  });
  load("embeddings.jsonl", [&](const json& row) {
    embeddings_[row.at("key").get<std::string>()] = row.at("vector").get<Embedding>();
  });
}

std::optional<std::vector<std::string>> ResponseCache::completions(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = completions_.find(key);
  if (it == completions_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put_completions(const std::string& key, const std::vector<std::string>& responses) {
  std::unique_lock lock(mu_);
  completions_[key] = responses;
  if (!dir_.empty()) append(dir_ / "completions.jsonl", json{{"key", key}, {"responses", responses}});
}

std::optional<Embedding> ResponseCache::embedding(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = embeddings_.find(key);
  if (it == embeddings_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put_embedding(const std::string& key, const Embedding& vec) {
  std::unique_lock lock(mu_);
  embeddings_[key] = vec;
  if (!dir_.empty()) append(dir_ / "embeddings.jsonl", json{{"key", key}, {"vector", vec}});
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return completions_.size() + embeddings_.size();
}

void ResponseCache::append(const std::filesystem::path& file, const json& row) {
  std::ofstream out(file, std::ios::binary | std::ios::app);
  if (!out) throw CacheError("cannot append to " + file.string());
  out << row.dump() << '\n';
  out.flush();
  if (!out) throw CacheError("write failed on " + file.string());
}

std::vector<std::string> Gateway::complete(const std::string& prompt, const SamplingSpec& spec) {
  if (spec.n_samples < 1) throw ConfigError("n_samples must be at least 1");
  std::string variants;
  for (const std::string& v : spec.prompt_variants) variants += v + '\x1f';
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.6f", spec.temperature);
  std::string key = provider_.identity() + ":" + prompt_hash(prompt) + ":" + std::to_string(spec.n_samples) + ":" +
                    temp + ":" + hex64(fnv1a64(variants));
  if (auto hit = cache_.completions(key)) {
    ++cache_hits_;
    return *hit;
  }
  std::vector<std::string> out;
  out.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    std::string p = prompt;
    if (!spec.prompt_variants.empty()) p += "\n" + spec.prompt_variants[i % spec.prompt_variants.size()];
    ++provider_calls_;
    out.push_back(provider_.complete(p, spec.temperature));
  }
  cache_.put_completions(key, out);
  return out;
}

std::string Gateway::complete_one(const std::string& prompt) { return complete(prompt, SamplingSpec::single()).front(); }

Embedding Gateway::embed(const std::string& text) {
  std::string key = provider_.identity() + ":embed:" + hex64(fnv1a64(text));
  if (auto hit = cache_.embedding(key)) {
    ++cache_hits_;
    return *hit;
  }
  ++provider_calls_;
  Embedding v = provider_.embed(text);
  if (v.size() != provider_.dim())
    throw ProviderError("provider returned a " + std::to_string(v.size()) + "-dimensional embedding, declared " +
                        std::to_string(provider_.dim()));
  cache_.put_embedding(key, v);
  return v;
}

std::string Gateway::describe(std::string_view item, std::string_view kind) {
  if (normalize_prompt(item).empty()) throw EmptyInput("cannot describe an empty " + std::string(kind));
  std::string prompt = "TASK: describe-" + std::string(kind) +
                       "\nWrite one short paragraph describing what the following log " + std::string(kind) +
                       " reports. Mention the program and the kind of event. Do not quote variable values." +
                       kQueryMarker + std::string(kind) + ": " + std::string(item) + "\n";
  std::string text = normalize_prompt(complete_one(prompt));
  if (text.empty()) throw ProviderError("model returned an empty description");
  return text;
}

std::string with_feedback(const std::string& prompt, const std::string& feedback) {
  if (feedback.empty()) return prompt;
  return prompt + "\nYour previous answers were rejected. Fix every problem listed below.\n" + feedback;
}

json extract_json(const std::string& reply) {
  std::string body = reply;
  std::size_t fence = reply.rfind("```json");
  if (fence != std::string::npos) {
    std::size_t start = reply.find('\n', fence);
    std::size_t end = start == std::string::npos ? std::string::npos : reply.find("```", start);
    if (end == std::string::npos) throw InvalidReply("unterminated ```json block");
    body = reply.substr(start + 1, end - start - 1);
  }
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw InvalidReply(std::string("reply is not valid JSON: ") + e.what());
  }
}

void ExampleStore::add(Example example) {
  if (example.embedding.empty()) throw InputError("example without an embedding");
  if (dim_ == 0) dim_ = example.embedding.size();
  if (example.embedding.size() != dim_)
    throw InputError("example embedding has dimension " + std::to_string(example.embedding.size()) + ", store uses " +
                     std::to_string(dim_));
  entries_.push_back(std::move(example));
}

std::vector<const Example*> ExampleStore::nearest(const Embedding& query, std::size_t k) const {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < entries_.size(); ++i) scored.emplace_back(cosine(query, entries_[i].embedding), i);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<const Example*> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(&entries_[scored[i].second]);
  return out;
}

json ExampleStore::to_json() const {
  json arr = json::array();
  for (const Example& e : entries_)
    arr.push_back({{"description", e.description}, {"embedding", e.embedding}, {"prompt", e.prompt}, {"output", e.output}});
  return arr;
}

ExampleStore ExampleStore::from_json(const json& doc) {
  ExampleStore s;
  if (!doc.is_array()) throw ParseError("example store must be an array");
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& e = doc[i];
    try {
      s.add(Example{e.at("description").get<std::string>(), e.at("embedding").get<Embedding>(),
                    e.at("prompt").get<std::string>(), e.at("output").get<std::string>()});
    } catch (const json::exception& ex) {
      throw ParseError(ex.what(), "/examples/" + std::to_string(i));
    }
  }
  return s;
}

std::vector<const Example*> nearest_examples(Gateway& gateway, const ExampleStore& store,
                                             const std::string& query_description, std::size_t k) {
  if (store.size() == 0 || k == 0) return {};
  return store.nearest(gateway.embed(query_description), k);
}

std::string render_examples(const std::vector<const Example*>& examples) {
  if (examples.empty()) return {};
  std::string out = "Here are solved examples for similar inputs.\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out += "EXAMPLE " + std::to_string(i + 1) + " (" + examples[i]->description + ")\nINPUT:\n" + examples[i]->prompt +
           "\nOUTPUT:\n" + examples[i]->output + "\n";
  }
  return out;
}

}  // namespace logtree::llm
