// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "logtree/bundle.hpp"
#include "logtree/llm.hpp"
#include "logtree/tree.hpp"

namespace logtree::induce {

/// Cosine distance (1 - similarity) between every pair of rows; computed in
/// parallel. Row-major n*n.
std::vector<double> distance_matrix(const std::vector<llm::Embedding>& points);
std::vector<double> distance_matrix_serial(const std::vector<llm::Embedding>& points);

/// Classic DBSCAN over a precomputed distance matrix. Neighbourhoods include
/// the point itself and use `dist <= eps`. Returns a label per point, -1 for
/// noise; cluster labels are numbered in order of their first core point.
std::vector<int> dbscan(const std::vector<double>& dist, std::size_t n, double eps, std::size_t min_samples);

struct Cluster {
  std::vector<std::size_t> members;  // corpus ordinals (0-based), ascending
  std::vector<NodeId> anchor;        // shared tree prefix
  llm::Embedding centroid;
  double mean_distance = 0;          // mean pairwise embedding distance
};

struct Config {
  std::size_t buffer_size = 2500;
  double epsilon = 0.05;
  std::size_t min_samples = 2;
  std::size_t max_rounds = 3;       // proposal rounds per cluster before deferral
  int repair_iters = 3;
  std::size_t overlap_sample = 5;   // lines shown when asking about the same format
  int narrow_iters = 3;
  std::size_t prompt_lines = 20;    // cluster lines shown in proposal prompts
  std::size_t fewshot_k = 5;
  bool fewshot = true;
  llm::SamplingSpec sampling;
};

/// Orders by density (size / mean pairwise distance, zero distance counting
/// as infinitely dense and singletons as zero), then size, then smallest
/// member. Clusters must be nonempty.
std::size_t select_cluster(const std::vector<Cluster>& clusters);

struct Candidate {
  std::vector<Token> tokens;  // full template including the anchor prefix
  std::size_t coverage = 0;   // cluster lines matched
  std::size_t spillover = 0;  // already parsed lines matched
};

struct Decision {
  enum class Kind { accept, replace_old, narrowed };
  Kind kind = Kind::accept;
  Candidate candidate;
  std::vector<NodeId> replaced;
};

/// Everything needed to resume induction after a crash.
struct State {
  ParseTree tree;
  std::size_t cursor = 0;             // next corpus ordinal to buffer
  std::vector<std::size_t> buffer;    // ordinals currently buffered
  std::set<std::size_t> deferred;     // ordinals given up on
  llm::ExampleStore examples;
  std::size_t accepted = 0;           // templates accepted so far
  std::size_t rounds = 0;

  nlohmann::json to_json() const;
  static State from_json(const nlohmann::json& doc);
};

struct Report {
  std::size_t templates = 0;
  std::size_t matched_lines = 0;
  std::size_t deferred_lines = 0;
  std::vector<std::string> events;
};

class Inducer {
public:
  Inducer(llm::Gateway& gateway, const std::vector<std::string>& corpus, Config config);

  State& state() noexcept { return state_; }
  const State& state() const noexcept { return state_; }

  /// Fills the buffer with unmatched lines from the cursor onward.
  void fill_buffer();

  std::vector<Cluster> cluster_buffer(const std::vector<std::size_t>& buffer);
  std::vector<std::size_t> confirm_cluster(const Cluster& cluster);
  Candidate propose_template(const Cluster& cluster, const std::vector<std::size_t>& lines);
  Decision resolve_overlap(const Candidate& candidate, const std::vector<std::size_t>& lines);

  /// Coverage over `lines` and spillover over parsed lines for `tokens`.
  Candidate score(std::vector<Token> tokens, const std::vector<std::size_t>& lines) const;

  /// One buffer round: cluster, pick, confirm, propose, resolve, insert.
  /// Returns false when there is nothing left to do.
  bool step();

  /// Runs rounds until done, invoking `checkpoint` after every accepted template.
  Report run(const std::function<void(const State&)>& checkpoint = {});

  std::vector<std::string> events() const { return events_; }

private:
  std::string line_description(std::size_t ordinal);
  std::vector<std::size_t> parsed_lines() const;
  void log(std::string event);

  llm::Gateway& gw_;
  const std::vector<std::string>& corpus_;
  Config config_;
  State state_;
  std::vector<std::string> events_;
};

}  // namespace logtree::induce
