// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/pipeline.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace logtree {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<const char*, kStageCount> kStageNames = {"induce", "validate-syntax", "name",
                                                              "validate-schema", "map", "validate-mapping"};
constexpr const char* kStateFormat = "logtree-run";
constexpr int kStateVersion = 1;

template <class T>
void positive(const char* name, T v) {
  if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
}

std::string corpus_hash(const std::vector<std::string>& lines) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& l : lines) {
    h ^= llm::fnv1a64(l);
    h *= 1099511628211ull;
  }
  return llm::hex64(h);
}

}  // namespace

void RunConfig::check() const {
  positive("buffer_size", buffer_size);
  positive("epsilon", epsilon);
  positive("min_samples", min_samples);
  positive("samples", samples);
  positive("fewshot_k", fewshot_k);
  positive("repair_iters", repair_iters);
  positive("shortlist_k", shortlist_k);
  positive("max_attributes", max_attributes);
  positive("validation_window", validation_window);
  positive("validation_passes", validation_passes);
  if (temperature < 0) throw ConfigError("temperature must be non-negative");
  if (epsilon > 2) throw ConfigError("epsilon is a cosine distance and cannot exceed 2");
}

induce::Config RunConfig::induce_config() const {
  induce::Config c;
  c.buffer_size = buffer_size;
  c.epsilon = epsilon;
  c.min_samples = min_samples;
  c.repair_iters = repair_iters;
  c.fewshot_k = fewshot_k;
  c.fewshot = fewshot;
  c.sampling = llm::SamplingSpec{samples, samples == 1 ? 0.0 : temperature, {}};
  return c;
}

schema::Config RunConfig::schema_config() const {
  schema::Config c;
  c.repair_iters = repair_iters;
  c.fewshot_k = fewshot_k;
  c.fewshot = fewshot;
  return c;
}

taxonomy::Config RunConfig::mapping_config() const {
  taxonomy::Config c;
  c.shortlist_k = shortlist_k;
  c.use_types = use_types;
  c.repair_iters = repair_iters;
  c.fewshot = fewshot;
  c.fewshot_k = fewshot_k;
  return c;
}

validate::Config RunConfig::validation_config() const {
  validate::Config c;
  c.window = validation_window;
  c.frozen = validation_frozen;
  c.repair_iters = repair_iters;
  c.passes = validation_passes;
  return c;
}

ordered_json RunConfig::to_json() const {
  return {{"buffer_size", buffer_size},   {"epsilon", epsilon},
          {"min_samples", min_samples},   {"samples", samples},
          {"temperature", temperature},   {"fewshot_k", fewshot_k},
          {"fewshot", fewshot},           {"repair_iters", repair_iters},
          {"shortlist_k", shortlist_k},   {"use_types", use_types},
          {"max_attributes", max_attributes}, {"validation_window", validation_window},
          {"validation_frozen", validation_frozen}, {"validation_passes", validation_passes},
          {"skip_validation", skip_validation}};
}

void RunConfig::merge_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  auto count = [&](const std::string& key, const json& v, std::size_t& out) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(key + " must be a non-negative integer");
    out = v.get<std::size_t>();
  };
  auto flag = [&](const std::string& key, const json& v, bool& out) {
    if (!v.is_boolean()) throw ConfigError(key + " must be a boolean");
    out = v.get<bool>();
  };
  auto real = [&](const std::string& key, const json& v, double& out) {
    if (!v.is_number()) throw ConfigError(key + " must be a number");
    out = v.get<double>();
  };
  auto text = [&](const std::string& key, const json& v) {
    if (!v.is_string()) throw ConfigError(key + " must be a string");
    return v.get<std::string>();
  };
  for (const auto& [key, v] : doc.items()) {
    if (key == "buffer_size") count(key, v, buffer_size);
    else if (key == "epsilon") real(key, v, epsilon);
    else if (key == "min_samples") count(key, v, min_samples);
    else if (key == "samples") count(key, v, samples);
    else if (key == "temperature") real(key, v, temperature);
    else if (key == "fewshot_k") count(key, v, fewshot_k);
    else if (key == "fewshot") flag(key, v, fewshot);
    else if (key == "repair_iters") {
      std::size_t n = 0;
      count(key, v, n);
      repair_iters = static_cast<int>(n);
    } else if (key == "shortlist_k") count(key, v, shortlist_k);
    else if (key == "use_types") flag(key, v, use_types);
    else if (key == "max_attributes") count(key, v, max_attributes);
    else if (key == "validation_window") count(key, v, validation_window);
    else if (key == "validation_frozen") count(key, v, validation_frozen);
    else if (key == "validation_passes") count(key, v, validation_passes);
    else if (key == "skip_validation") flag(key, v, skip_validation);
    else if (key == "mock") mock = text(key, v);
    else if (key == "cache_dir") cache_dir = text(key, v);
    else if (key == "provider") {
      if (!v.is_object()) throw ConfigError("provider must be an object");
      for (const auto& [pk, pv] : v.items()) {
        if (pk == "endpoint") http.endpoint = text(pk, pv);
        else if (pk == "chat_model") http.chat_model = text(pk, pv);
        else if (pk == "embedding_model") http.embedding_model = text(pk, pv);
        else if (pk == "api_key_env") http.api_key_env = text(pk, pv);
        else if (pk == "embedding_dim") count(pk, pv, http.embedding_dim);
        else if (pk == "timeout_s") {
          std::size_t n = 0;
          count(pk, pv, n);
          http.timeout_s = static_cast<int>(n);
        } else if (pk == "max_retries") {
          std::size_t n = 0;
          count(pk, pv, n);
          http.max_retries = static_cast<int>(n);
        } else throw ConfigError("unknown provider key '" + pk + "'");
      }
    } else {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig c;
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  c.merge_json(doc);
  // relative paths in a config file are relative to the file
  auto rebase = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = path.parent_path() / p;
  };
  if (c.mock) rebase(*c.mock);
  rebase(c.cache_dir);
  return c;
}

std::unique_ptr<llm::Provider> make_provider(const RunConfig& config) {
  if (config.mock) return llm::MockProvider::from_file(*config.mock);
  return std::make_unique<llm::HttpProvider>(config.http);
}

const char* pipeline_stage_name(PipelineStage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

PipelineStage parse_pipeline_stage(const std::string& name) {
  for (std::size_t i = 0; i < kStageCount; ++i)
    if (name == kStageNames[i]) return static_cast<PipelineStage>(i);
  throw ConfigError("unknown stage '" + name + "'");
}

namespace {

struct Checkpoint {
  std::vector<std::string> completed;
  std::optional<json> induce_state;
  std::optional<Bundle> bundle;
  ordered_json report = ordered_json::object();
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& cp, const ordered_json& config,
                     const std::string& corpus) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  ordered_json j;
  j["format"] = kStateFormat;
  j["version"] = kStateVersion;
  j["config"] = config;
  j["corpus"] = corpus;
  j["completed"] = cp.completed;
  j["induce"] = cp.induce_state ? ordered_json(*cp.induce_state) : ordered_json(nullptr);
  j["bundle"] = cp.bundle ? to_json(*cp.bundle) : ordered_json(nullptr);
  j["report"] = cp.report;
  write_file_atomic(dir / "state.json", j.dump(1) + "\n");
  if (cp.bundle) save_bundle(dir / "bundle.json", *cp.bundle);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const ordered_json& config, const std::string& corpus) {
  Checkpoint cp;
  auto file = dir / "state.json";
  if (!std::filesystem::exists(file)) return cp;
  json j;
  try {
    j = json::parse(read_file(file));
  } catch (const json::exception& e) {
    throw ParseError(e.what(), file.string());
  }
  if (!j.is_object() || j.value("format", "") != kStateFormat) throw ParseError("not a run state", file.string());
  if (j.value("version", 0) != kStateVersion) throw ParseError("unsupported run state version", file.string());
  if (j["config"] != json(config)) throw ConfigError("the checkpoint was written with a different configuration");
  if (j["corpus"] != corpus) throw ConfigError("the checkpoint was written for a different input log");
  for (const auto& s : j["completed"]) cp.completed.push_back(s.get<std::string>());
  if (!j["induce"].is_null()) cp.induce_state = j["induce"];
  if (!j["bundle"].is_null()) cp.bundle = from_json(j["bundle"]);
  cp.report = ordered_json::parse(j["report"].dump());
  return cp;
}

ordered_json audit_json(const std::vector<validate::AuditEntry>& audit) {
  ordered_json a = ordered_json::array();
  for (const auto& e : audit) a.push_back(ordered_json::parse(e.to_json().dump()));
  return a;
}

}  // namespace

PipelineResult run_pipeline(llm::Gateway& gw, const RunConfig& config, const std::vector<std::string>& lines,
                            const taxonomy::AttributeIndex* index, const RunOptions& options) {
  config.check();
  const ordered_json cfg = config.to_json();
  const std::string corpus = corpus_hash(lines);
  Checkpoint cp;
  if (options.resume && !options.work_dir.empty()) cp = load_checkpoint(options.work_dir, cfg, corpus);

  std::set<std::string> paths;
  if (index) paths = index->paths();
  const validate::Context vctx{&lines, index ? &paths : nullptr};

  auto done = [&](PipelineStage s) {
    return std::find(cp.completed.begin(), cp.completed.end(), pipeline_stage_name(s)) != cp.completed.end();
  };

  for (std::size_t i = 0; i < kStageCount; ++i) {
    auto stage = static_cast<PipelineStage>(i);
    const char* name = pipeline_stage_name(stage);
    if (!done(stage)) {
      try {
        switch (stage) {
          case PipelineStage::induce: {
            induce::Inducer inducer(gw, lines, config.induce_config());
            if (cp.induce_state) inducer.state() = induce::State::from_json(*cp.induce_state);
            induce::Report r = inducer.run([&](const induce::State& st) {
              cp.induce_state = st.to_json();
              save_checkpoint(options.work_dir, cp, cfg, corpus);
            });
            Bundle b;
            b.tree = inducer.state().tree;
            b.max_attributes = config.max_attributes;
            cp.bundle = std::move(b);
            cp.induce_state.reset();
            cp.report[name] = {{"templates", r.templates}, {"matched_lines", r.matched_lines},
                               {"deferred_lines", r.deferred_lines}, {"events", r.events}};
            break;
          }
          case PipelineStage::validate_syntax:
          case PipelineStage::validate_schema:
          case PipelineStage::validate_mapping: {
            if (config.skip_validation) {
              cp.report[name] = {{"skipped", true}};
              break;
            }
            validate::Stage vs = stage == PipelineStage::validate_syntax   ? validate::Stage::syntax
                                 : stage == PipelineStage::validate_schema ? validate::Stage::schema
                                                                           : validate::Stage::mapping;
            std::vector<validate::AuditEntry> audit;
            cp.bundle = validate::validate_stage(gw, vs, *cp.bundle, vctx, config.validation_config(), &audit);
            cp.report[name] = {{"audit", audit_json(audit)}};
            break;
          }
          case PipelineStage::name: {
            schema::Report r = schema::name_all(gw, *cp.bundle, lines, config.schema_config());
            cp.report[name] = {{"named", r.named}, {"unnamed", r.unnamed}, {"collisions", r.collisions},
                               {"events", r.events}};
            break;
          }
          case PipelineStage::map: {
            if (!index) throw ConfigError("the mapping stage needs a taxonomy index");
            taxonomy::Report r = taxonomy::map_all(gw, *cp.bundle, *index, config.mapping_config());
            cp.report[name] = ordered_json::parse(r.to_json().dump());
            break;
          }
        }
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError(name, e.what());
      }
      cp.completed.push_back(name);
      save_checkpoint(options.work_dir, cp, cfg, corpus);
    }
    if (options.stop_after && *options.stop_after == stage) break;
  }

  PipelineResult res;
  res.bundle = cp.bundle.value_or(Bundle{});
  res.completed = cp.completed;
  res.report = cp.report;
  res.finished = cp.completed.size() == kStageCount;
  res.integrity = check_integrity(res.bundle, index ? &paths : nullptr);
  return res;
}

}  // namespace logtree
