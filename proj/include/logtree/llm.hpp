// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "logtree/error.hpp"

namespace logtree::llm {

using Embedding = std::vector<double>;

/// Collapses whitespace runs to one space and trims both ends.
std::string normalize_prompt(std::string_view prompt);
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);
/// fnv1a64 of the normalized prompt, as 16 hex digits.
std::string prompt_hash(std::string_view prompt);

double cosine(const Embedding& a, const Embedding& b);

class Provider {
public:
  virtual ~Provider() = default;
  virtual std::string complete(const std::string& prompt, double temperature) = 0;
  virtual Embedding embed(const std::string& text) = 0;
  virtual std::size_t dim() const = 0;
  /// Namespaces cache keys so two providers never share entries.
  virtual std::string identity() const = 0;
};

/// Prompts are laid out as instructions, few-shot examples, this marker, then
/// the item under work and any repair feedback.
inline constexpr const char* kQueryMarker = "\n=== QUERY ===\n";

/// Replays a transcript document:
///   {"embedding_dim": 64,
///    "entries": [{"match": [substrings], "exclude": [substrings],
///                 "prompt_hash": hex, "response": text}],
///    "embeddings": {text: [numbers]}}
/// Substrings are tested against the prompt's first line and the part after
/// the query marker, so few-shot examples never trigger an entry. The first
/// entry whose conditions all hold answers. An unknown prompt is a
/// ProviderError. Embeddings default to a hashed bag of words.
class MockProvider : public Provider {
public:
  explicit MockProvider(const nlohmann::json& transcript, std::string identity = "mock");
  static std::unique_ptr<MockProvider> from_file(const std::filesystem::path& path);

  std::string complete(const std::string& prompt, double temperature) override;
  Embedding embed(const std::string& text) override;
  std::size_t dim() const override { return dim_; }
  std::string identity() const override { return identity_; }

  std::size_t completion_calls() const noexcept { return completion_calls_; }
  std::size_t embedding_calls() const noexcept { return embedding_calls_; }
  const std::vector<std::string>& prompts() const noexcept { return prompts_; }

  /// Prompts with no matching entry are appended here (one JSON string per
  /// line) before the error is thrown; handy when authoring transcripts.
  void set_unmatched_log(std::filesystem::path path) { unmatched_log_ = std::move(path); }

private:
  struct Entry {
    std::vector<std::string> match;
    std::vector<std::string> exclude;
    std::string hash;
    std::string response;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, Embedding> embeddings_;
  std::size_t dim_ = 64;
  std::string identity_;
  std::atomic<std::size_t> completion_calls_{0};
  std::atomic<std::size_t> embedding_calls_{0};
  std::vector<std::string> prompts_;
  std::mutex mu_;
  std::filesystem::path unmatched_log_;
};

/// Deterministic bag-of-words embedding: lowercased alphanumeric words hashed
/// into signed buckets, L2-normalized.
Embedding hashed_embedding(std::string_view text, std::size_t dim);

struct HttpConfig {
  std::string endpoint = "https://api.openai.com";
  std::string chat_model = "gpt-4o";
  std::string embedding_model = "text-embedding-3-small";
  std::string api_key_env = "LOGTREE_API_KEY";
  std::size_t embedding_dim = 1536;
  int max_retries = 3;
  int retry_backoff_ms = 200;
  int timeout_s = 120;
};

/// OpenAI-compatible chat-completions and embeddings client.
class HttpProvider : public Provider {
public:
  /// Throws ConfigError when the API key variable is unset or empty.
  explicit HttpProvider(HttpConfig config);
  ~HttpProvider() override;

  std::string complete(const std::string& prompt, double temperature) override;
  Embedding embed(const std::string& text) override;
  std::size_t dim() const override { return config_.embedding_dim; }
  std::string identity() const override;

private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  HttpConfig config_;
  std::string api_key_;
};

/// Completions and embeddings keyed by content hash. With a directory the
/// cache is mirrored to append-only JSONL files and reloaded on open; a
/// malformed line is a CacheError.
class ResponseCache {
public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::vector<std::string>> completions(const std::string& key) const;
  void put_completions(const std::string& key, const std::vector<std::string>& responses);
  std::optional<Embedding> embedding(const std::string& key) const;
  void put_embedding(const std::string& key, const Embedding& vec);

  std::size_t size() const;

private:
  void append(const std::filesystem::path& file, const nlohmann::json& row);

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::vector<std::string>> completions_;
  std::unordered_map<std::string, Embedding> embeddings_;
};

struct SamplingSpec {
  std::size_t n_samples = 3;
  double temperature = 0.7;
  std::vector<std::string> prompt_variants;  // suffixes; sample i uses variant i mod size

  static SamplingSpec single() { return SamplingSpec{1, 0.0, {}}; }
};

/// Provider plus cache. Every stage talks to the model through this.
class Gateway {
public:
  Gateway(Provider& provider, ResponseCache& cache) : provider_(provider), cache_(cache) {}

  /// spec.n_samples completions, in variant order.
  std::vector<std::string> complete(const std::string& prompt, const SamplingSpec& spec);
  std::string complete_one(const std::string& prompt);
  Embedding embed(const std::string& text);

  /// Short single-paragraph description of a line or template. Throws
  /// EmptyInput on blank input.
  std::string describe(std::string_view item, std::string_view kind = "line");

  std::size_t dim() const { return provider_.dim(); }
  std::size_t provider_calls() const noexcept { return provider_calls_; }
  std::size_t cache_hits() const noexcept { return cache_hits_; }

private:
  Provider& provider_;
  ResponseCache& cache_;
  std::atomic<std::size_t> provider_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

/// Winner by key multiplicity; ties go to the earliest occurrence. Returns
/// the index into `candidates`. Candidates must be nonempty.
template <class T, class KeyFn>
std::size_t majority_vote(const std::vector<T>& candidates, KeyFn key_fn) {
  using Key = std::decay_t<decltype(key_fn(candidates.front()))>;
  std::vector<Key> keys;
  keys.reserve(candidates.size());
  for (const T& c : candidates) keys.push_back(key_fn(c));
  std::size_t best = 0, best_count = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::size_t count = 0;
    for (const Key& k : keys) count += k == keys[i] ? 1 : 0;
    if (count > best_count) {
      best = i;
      best_count = count;
    }
  }
  return best;
}

struct RepairOutcome {
  int iterations = 0;
  std::vector<std::string> diagnostics;
};

/// Runs generate(feedback, iteration) until check passes. `feedback` carries
/// every earlier diagnostic. InvalidReply thrown by generate counts as a
/// failed check with its message as the diagnostic. Throws RepairExhausted.
template <class T>
T repair_loop(const std::function<T(const std::string& feedback, int iteration)>& generate,
              const std::function<std::optional<std::string>(const T&)>& check, int max_iters,
              RepairOutcome* outcome = nullptr) {
  if (max_iters < 1) throw ConfigError("repair loop needs at least one iteration");
  std::string feedback;
  std::string last;
  for (int it = 1; it <= max_iters; ++it) {
    if (outcome) outcome->iterations = it;
    std::optional<std::string> diag;
    try {
      T artifact = generate(feedback, it);
      diag = check(artifact);
      if (!diag) return artifact;
    } catch (const InvalidReply& e) {
      diag = e.what();
    }
    last = *diag;
    if (outcome) outcome->diagnostics.push_back(last);
    feedback += "Attempt " + std::to_string(it) + " was rejected: " + last + "\n";
  }
  throw RepairExhausted(last, max_iters);
}

/// Appends the repair feedback section to a prompt.
std::string with_feedback(const std::string& prompt, const std::string& feedback);

/// Parses the JSON object a model reply carries: the last ```json fenced
/// block, else the whole reply. Throws InvalidReply.
nlohmann::json extract_json(const std::string& reply);

struct Example {
  std::string description;
  Embedding embedding;
  std::string prompt;
  std::string output;
};

class ExampleStore {
public:
  /// Throws InputError when the vector's dimension differs from the store's.
  void add(Example example);
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<Example>& entries() const noexcept { return entries_; }

  /// Top-k by cosine similarity, descending; ties keep insertion order.
  std::vector<const Example*> nearest(const Embedding& query, std::size_t k = 5) const;

  nlohmann::json to_json() const;
  static ExampleStore from_json(const nlohmann::json& doc);

private:
  std::size_t dim_ = 0;
  std::vector<Example> entries_;
};

std::vector<const Example*> nearest_examples(Gateway& gateway, const ExampleStore& store,
                                             const std::string& query_description, std::size_t k = 5);

/// Renders few-shot examples as prompt text.
std::string render_examples(const std::vector<const Example*>& examples);

}  // namespace logtree::llm
