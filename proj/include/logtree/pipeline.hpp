// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "logtree/bundle.hpp"
#include "logtree/error.hpp"
#include "logtree/induce.hpp"
#include "logtree/llm.hpp"
#include "logtree/schema.hpp"
#include "logtree/taxonomy.hpp"
#include "logtree/validate.hpp"

namespace logtree {

struct RunConfig {
  std::optional<std::filesystem::path> mock;  // transcript; replaces the HTTP provider
  llm::HttpConfig http;
  std::filesystem::path cache_dir;            // empty: in-memory cache only

  std::size_t buffer_size = 2500;
  double epsilon = 0.05;
  std::size_t min_samples = 2;
  std::size_t samples = 3;                    // self-consistency completions per proposal
  double temperature = 0.7;
  std::size_t fewshot_k = 5;
  bool fewshot = true;
  int repair_iters = 3;
  std::size_t shortlist_k = 50;
  bool use_types = false;
  std::size_t max_attributes = 1;
  std::size_t validation_window = 8;
  std::size_t validation_frozen = 8;
  std::size_t validation_passes = 1;
  bool skip_validation = false;

  /// Throws ConfigError for a non-positive knob.
  void check() const;

  induce::Config induce_config() const;
  schema::Config schema_config() const;
  taxonomy::Config mapping_config() const;
  validate::Config validation_config() const;

  /// Knobs that change results; provider and cache settings are left out.
  nlohmann::ordered_json to_json() const;
  /// Overlays the keys present in `doc`. Unknown keys are a ConfigError.
  void merge_json(const nlohmann::json& doc);
  static RunConfig load(const std::filesystem::path& path);
};

/// Mock when configured, otherwise HTTP; HTTP without a key is a ConfigError.
std::unique_ptr<llm::Provider> make_provider(const RunConfig& config);

enum class PipelineStage { induce, validate_syntax, name, validate_schema, map, validate_mapping };
inline constexpr std::size_t kStageCount = 6;
const char* pipeline_stage_name(PipelineStage stage);
/// Throws ConfigError for an unknown name.
PipelineStage parse_pipeline_stage(const std::string& name);

/// A fatal failure inside one stage; the last checkpoint is left intact.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

struct RunOptions {
  std::filesystem::path work_dir;           // empty: no checkpoints
  std::optional<PipelineStage> stop_after;
  bool resume = false;
};

struct PipelineResult {
  Bundle bundle;
  std::vector<std::string> completed;       // stage names, in order
  nlohmann::ordered_json report;            // per-stage reports
  std::string integrity;                    // first violation, "" when the bundle is sound
  bool finished = false;                    // every stage ran
};

/// Runs generation and validation for syntax, schema and mapping in that
/// order. After each stage the work directory holds state.json (resumable)
/// and bundle.json. `index` is needed only once the mapping stage runs.
PipelineResult run_pipeline(llm::Gateway& gateway, const RunConfig& config, const std::vector<std::string>& lines,
                            const taxonomy::AttributeIndex* index, const RunOptions& options = {});

}  // namespace logtree
