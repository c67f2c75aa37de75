// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line entry point.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "logtree/bundle.hpp"
#include "logtree/error.hpp"
#include "logtree/matcher.hpp"
#include "logtree/metrics.hpp"
#include "logtree/pipeline.hpp"
#include "logtree/query.hpp"

using namespace logtree;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Settings shared by every subcommand that talks to a model.
struct ModelOptions {
  std::string config;
  std::string mock;
  std::string cache;
  std::string unmatched;
};

void add_model_options(CLI::App* app, ModelOptions& o) {
  app->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--mock", o.mock, "replay this transcript instead of calling a provider")->check(CLI::ExistingFile);
  app->add_option("--cache", o.cache, "response cache directory");
  app->add_option("--log-unmatched", o.unmatched, "append prompts the transcript cannot answer to this file");
}

RunConfig base_config(const ModelOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (!o.mock.empty()) c.mock = o.mock;
  if (!o.cache.empty()) c.cache_dir = o.cache;
  return c;
}

// Provider, cache and gateway, built before any work starts so that a
// missing key fails fast.
struct Model {
  std::unique_ptr<llm::Provider> provider;
  std::unique_ptr<llm::ResponseCache> cache;
  std::unique_ptr<llm::Gateway> gateway;

  Model(const RunConfig& c, const ModelOptions& o) {
    provider = make_provider(c);
    if (!o.unmatched.empty())
      if (auto* m = dynamic_cast<llm::MockProvider*>(provider.get())) m->set_unmatched_log(o.unmatched);
    cache = c.cache_dir.empty() ? std::make_unique<llm::ResponseCache>() : std::make_unique<llm::ResponseCache>(c.cache_dir);
    gateway = std::make_unique<llm::Gateway>(*provider, *cache);
  }
};

json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(e.what(), path);
  }
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  if (path.empty() || path == "-") std::cout << j.dump(2) << "\n";
  else write_file_atomic(path, j.dump(2) + "\n");
}

// A saved bundle, or a template document as accepted by `build`.
Bundle load_any_bundle(const std::string& path) {
  json doc = load_json(path);
  return doc.contains("format") ? from_json(doc) : build_bundle(doc);
}

std::vector<std::string> read_input(const std::string& path) {
  if (path == "-") {
    std::stringstream ss;
    ss << std::cin.rdbuf();
    return split_lines(ss.str());
  }
  return read_lines(path);
}

std::string render_lines(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

std::string fixed(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(4) << v;
  return o.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"logtree: parse-tree log parser generation, ingestion and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "logtree 1.0.0");
  int status = 0;

  // preprocess-taxonomy
  ModelOptions pt_model;
  std::string pt_in, pt_index;
  auto* pt = app.add_subcommand("preprocess-taxonomy", "describe and embed taxonomy attributes");
  pt->add_option("--in", pt_in, "taxonomy document")->required()->check(CLI::ExistingFile);
  pt->add_option("--index", pt_index, "attribute index to write")->required();
  add_model_options(pt, pt_model);
  pt->callback([&]() {
    RunConfig c = base_config(pt_model);
    Model m(c, pt_model);
    auto index = taxonomy::preprocess_taxonomy(*m.gateway, load_json(pt_in));
    index.save(pt_index);
    std::cerr << "indexed " << index.size() << " attributes, version " << index.version() << "\n";
  });

  // induce
  ModelOptions in_model;
  std::string in_input, in_out;
  auto* ind = app.add_subcommand("induce", "induce a parse tree from a log");
  ind->add_option("--input", in_input, "log file")->required()->check(CLI::ExistingFile);
  ind->add_option("--out", in_out, "bundle to write")->required();
  add_model_options(ind, in_model);
  ind->callback([&]() {
    RunConfig c = base_config(in_model);
    c.check();
    Model m(c, in_model);
    auto lines = read_lines(in_input);
    induce::Inducer inducer(*m.gateway, lines, c.induce_config());
    induce::Report r = inducer.run();
    Bundle b;
    b.tree = inducer.state().tree;
    b.max_attributes = c.max_attributes;
    save_bundle(in_out, b);
    for (const auto& e : r.events) std::cerr << e << "\n";
    std::cerr << r.templates << " templates, " << r.matched_lines << " lines matched, " << r.deferred_lines
              << " deferred\n";
  });

  // name
  ModelOptions nm_model;
  std::string nm_bundle, nm_input;
  auto* nm = app.add_subcommand("name", "name the variables of every template");
  nm->add_option("--bundle", nm_bundle, "bundle, updated in place")->required()->check(CLI::ExistingFile);
  nm->add_option("--input", nm_input, "log file for sample lines")->required()->check(CLI::ExistingFile);
  add_model_options(nm, nm_model);
  nm->callback([&]() {
    RunConfig c = base_config(nm_model);
    Model m(c, nm_model);
    Bundle b = load_bundle(nm_bundle);
    schema::Report r = schema::name_all(*m.gateway, b, read_lines(nm_input), c.schema_config());
    save_bundle(nm_bundle, b);
    for (const auto& e : r.events) std::cerr << e << "\n";
    std::cerr << r.named << " templates named, " << r.unnamed.size() << " left unnamed\n";
  });

  // map
  ModelOptions mp_model;
  std::string mp_bundle, mp_index, mp_report;
  std::size_t mp_max = 0;
  bool mp_types = false;
  auto* mp = app.add_subcommand("map", "map schema fields onto taxonomy attributes");
  mp->add_option("--bundle", mp_bundle, "bundle, updated in place")->required()->check(CLI::ExistingFile);
  mp->add_option("--index", mp_index, "attribute index")->required()->check(CLI::ExistingFile);
  mp->add_option("--max-attrs", mp_max, "attributes allowed per field");
  mp->add_flag("--use-types", mp_types, "assign a type first and prune candidates by it");
  mp->add_option("--report", mp_report, "write the mapping report here");
  add_model_options(mp, mp_model);
  mp->callback([&]() {
    RunConfig c = base_config(mp_model);
    if (mp_types) c.use_types = true;
    Model m(c, mp_model);
    Bundle b = load_bundle(mp_bundle);
    if (mp_max) b.max_attributes = mp_max;
    auto index = taxonomy::AttributeIndex::load(mp_index);
    taxonomy::Report r = taxonomy::map_all(*m.gateway, b, index, c.mapping_config());
    save_bundle(mp_bundle, b);
    if (!mp_report.empty()) write_json(mp_report, nlohmann::ordered_json::parse(r.to_json().dump()));
    std::size_t mapped = 0, failed = 0;
    for (const auto& f : r.fields) {
      mapped += !f.attributes.empty();
      failed += f.failed;
    }
    for (const auto& [attr, fields] : r.conflicts) {
      std::cerr << "conflict: " << attr << " claimed by";
      for (const auto& f : fields) std::cerr << " " << f;
      std::cerr << "\n";
    }
    std::cerr << mapped << " of " << r.fields.size() << " fields mapped, " << failed << " failed\n";
  });

  // validate
  ModelOptions va_model;
  std::string va_bundle, va_corpus, va_stage = "syntax", va_index, va_audit;
  auto* va = app.add_subcommand("validate", "run one validation stage over a bundle");
  va->add_option("--bundle", va_bundle, "bundle, updated in place")->required()->check(CLI::ExistingFile);
  va->add_option("--corpus", va_corpus, "retained log lines for the match-set guard")->required()->check(CLI::ExistingFile);
  va->add_option("--stage", va_stage, "syntax, schema or mapping")->check(CLI::IsMember({"syntax", "schema", "mapping"}));
  va->add_option("--index", va_index, "attribute index for the attribute guard")->check(CLI::ExistingFile);
  va->add_option("--audit", va_audit, "append the audit log (JSONL) here");
  add_model_options(va, va_model);
  va->callback([&]() {
    RunConfig c = base_config(va_model);
    Model m(c, va_model);
    Bundle b = load_bundle(va_bundle);
    auto corpus = read_lines(va_corpus);
    std::set<std::string> paths;
    if (!va_index.empty()) paths = taxonomy::AttributeIndex::load(va_index).paths();
    validate::Context ctx{&corpus, va_index.empty() ? nullptr : &paths};
    std::vector<validate::AuditEntry> audit;
    b = validate::validate_stage(*m.gateway, validate::parse_stage(va_stage), b, ctx, c.validation_config(), &audit);
    save_bundle(va_bundle, b);
    std::ofstream log;
    if (!va_audit.empty()) log.open(va_audit, std::ios::app);
    for (const auto& e : audit) {
      if (log) log << e.to_json().dump() << "\n";
      std::cerr << "batch " << e.batch << ": " << e.status << (e.rationale.empty() ? "" : " (" + e.rationale + ")") << "\n";
    }
  });

  // ingest
  std::string ig_bundle, ig_input = "-", ig_output = "-";
  bool ig_tax = false, ig_serial = false;
  auto* ig = app.add_subcommand("ingest", "apply a bundle to a log, one JSON record per line");
  ig->add_option("--bundle", ig_bundle, "bundle")->required()->check(CLI::ExistingFile);
  ig->add_option("--input", ig_input, "log file, '-' for stdin");
  ig->add_option("--output", ig_output, "JSONL output, '-' for stdout");
  ig->add_flag("--taxonomy-view", ig_tax, "add taxonomy attribute values to each record");
  ig->add_flag("--serial", ig_serial, "match on one thread");
  ig->callback([&]() {
    Bundle b = load_bundle(ig_bundle);
    std::ifstream fin;
    std::istream* in = &std::cin;
    if (ig_input != "-") {
      fin.open(ig_input);
      if (!fin) throw IoError("cannot open " + ig_input);
      in = &fin;
    }
    std::ofstream fout;
    std::ostream* out = &std::cout;
    if (ig_output != "-") {
      fout.open(ig_output);
      if (!fout) throw IoError("cannot open " + ig_output);
      out = &fout;
    }
    IngestOptions opt;
    opt.taxonomy = ig_tax;
    opt.parallel = !ig_serial;
    IngestStats s = ingest_stream(*in, *out, b, opt);
    std::cerr << s.matched << " of " << s.lines << " lines matched\n";
  });

  // query
  std::string q_bundle, q_records, q_input, q_query, q_golden, q_suite, q_index, q_report;
  auto* qc = app.add_subcommand("query", "run a query, or a comparison suite, against parsed records");
  qc->add_option("--bundle", q_bundle, "bundle the records were parsed with")->required()->check(CLI::ExistingFile);
  qc->add_option("--records", q_records, "ingest output (JSONL)")->check(CLI::ExistingFile);
  qc->add_option("--input", q_input, "raw log; parsed on the fly")->check(CLI::ExistingFile);
  qc->add_option("--query", q_query, "query document")->check(CLI::ExistingFile);
  qc->add_option("--golden", q_golden, "golden line numbers, one per line or a JSON array")->check(CLI::ExistingFile);
  qc->add_option("--suite", q_suite, "query suite comparing custom, standardized and substring forms")->check(CLI::ExistingFile);
  qc->add_option("--index", q_index, "attribute index for standardized name checks")->check(CLI::ExistingFile);
  qc->add_option("--report", q_report, "write the suite report here");
  qc->callback([&]() {
    Bundle b = load_bundle(q_bundle);
    std::set<std::string> paths;
    if (!q_index.empty()) paths = taxonomy::AttributeIndex::load(q_index).paths();
    const std::set<std::string>* tax = q_index.empty() ? nullptr : &paths;
    if (!q_suite.empty()) {
      if (q_input.empty()) throw ConfigError("--suite needs --input");
      auto suite = query::parse_suite(load_json(q_suite));
      auto rep = query::run_suite(suite, read_lines(q_input), b, tax);
      for (const auto& r : rep.rows) {
        std::cout << std::left << std::setw(36) << r.name;
        for (const auto* f : {&r.custom, &r.standardized, &r.substring})
          std::cout << (f->present ? " P=" + fixed(f->score.precision) + " R=" + fixed(f->score.recall) : std::string("      -      "));
        std::cout << "\n";
      }
      std::cout << "mean F1 custom=" << fixed(rep.custom_f1) << " standardized=" << fixed(rep.standardized_f1)
                << " substring=" << fixed(rep.substring_f1) << "\n";
      if (!q_report.empty()) write_json(q_report, rep.to_json());
      return;
    }
    if (q_query.empty()) throw ConfigError("query needs --query or --suite");
    if (q_records.empty() == q_input.empty()) throw ConfigError("give exactly one of --records and --input");
    auto rows = q_records.empty() ? query::ingest_rows(b, read_lines(q_input)) : query::rows_from_jsonl(read_file(q_records));
    auto spec = query::parse_query(read_file(q_query));
    auto hits = query::run_query(rows, spec, b, tax);
    for (std::size_t h : hits) std::cout << h << "\n";
    if (!q_golden.empty()) {
      std::string text = read_file(q_golden);
      std::vector<std::size_t> golden;
      json j = json::parse(text, nullptr, false);
      if (j.is_array()) {
        for (const auto& x : j) golden.push_back(x.get<std::size_t>());
      } else {
        for (const auto& l : split_lines(text))
          if (!l.empty()) golden.push_back(std::stoul(l));
      }
      auto s = query::score(hits, golden);
      std::cerr << "precision=" << fixed(s.precision) << " recall=" << fixed(s.recall) << (s.flagged ? " (nothing matched)" : "")
                << "\n";
    }
  });

  // eval
  std::string ev_pred, ev_gt, ev_input, ev_metrics = "ts,pgs,sgs,ga,pa,map";
  auto* ev = app.add_subcommand("eval", "score a predicted bundle against a ground-truth bundle");
  ev->add_option("--pred", ev_pred, "predicted bundle")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", ev_gt, "ground-truth bundle or template document")->required()->check(CLI::ExistingFile);
  ev->add_option("--input", ev_input, "log both bundles parse")->required()->check(CLI::ExistingFile);
  ev->add_option("--metrics", ev_metrics, "comma-separated subset of ts,pgs,sgs,ga,pa,map");
  ev->callback([&]() {
    auto r = metrics::evaluate(load_any_bundle(ev_pred), load_any_bundle(ev_gt), read_lines(ev_input));
    std::map<std::string, double> values = {{"ts", r.ts}, {"pgs", r.pgs}, {"sgs", r.sgs},
                                            {"ga", r.ga}, {"pa", r.pa},   {"map", r.map}};
    std::stringstream ss(ev_metrics);
    std::string m;
    std::cout << "metric  value\n";
    while (std::getline(ss, m, ',')) {
      if (!values.count(m)) throw ConfigError("unknown metric '" + m + "'");
      std::cout << std::left << std::setw(8) << m << fixed(values[m]) << "\n";
    }
    std::cout << "lines " << r.lines << ", truth matched " << r.gt_matched << ", predicted matched " << r.pred_matched
              << ", SGS occurrences " << r.aligned_occurrences << " (" << r.misaligned_lines << " lines misaligned)\n";
  });

  // run
  ModelOptions rn_model;
  std::string rn_input, rn_index, rn_work, rn_out, rn_stop;
  bool rn_resume = false, rn_skip = false, rn_nofewshot = false;
  auto* rn = app.add_subcommand("run", "full pipeline: syntax, schema and mapping, each generated then validated");
  rn->add_option("--input", rn_input, "log file")->required()->check(CLI::ExistingFile);
  rn->add_option("--index", rn_index, "attribute index")->check(CLI::ExistingFile);
  rn->add_option("--work", rn_work, "checkpoint directory");
  rn->add_option("--out", rn_out, "final bundle");
  rn->add_option("--stop-after", rn_stop, "stop after this stage")
      ->check(CLI::IsMember({"induce", "validate-syntax", "name", "validate-schema", "map", "validate-mapping"}));
  rn->add_flag("--resume", rn_resume, "continue from the checkpoint in --work");
  rn->add_flag("--skip-validation", rn_skip, "skip the three validation stages");
  rn->add_flag("--no-fewshot", rn_nofewshot, "no few-shot examples in any prompt");
  add_model_options(rn, rn_model);
  rn->callback([&]() {
    RunConfig c = base_config(rn_model);
    if (rn_skip) c.skip_validation = true;
    if (rn_nofewshot) c.fewshot = false;
    c.check();
    if (rn_resume && rn_work.empty()) throw ConfigError("--resume needs --work");
    Model m(c, rn_model);
    std::optional<taxonomy::AttributeIndex> index;
    if (!rn_index.empty()) index = taxonomy::AttributeIndex::load(rn_index);
    RunOptions opt;
    opt.work_dir = rn_work;
    opt.resume = rn_resume;
    if (!rn_stop.empty()) opt.stop_after = parse_pipeline_stage(rn_stop);
    PipelineResult res = run_pipeline(*m.gateway, c, read_lines(rn_input), index ? &*index : nullptr, opt);
    if (!rn_out.empty()) save_bundle(rn_out, res.bundle);
    std::cerr << "stages done:";
    for (const auto& s : res.completed) std::cerr << " " << s;
    std::cerr << "\n" << res.bundle.tree.leaf_count() << " templates, " << res.bundle.schema.fields().size()
              << " fields, " << res.bundle.mappings.size() << " mapped; " << m.gateway->provider_calls()
              << " model calls\n";
    if (!res.integrity.empty()) {
      std::cerr << "bundle invariant violated: " << res.integrity << "\n";
      status = 3;
    }
  });

  // build
  std::string bd_templates, bd_out;
  auto* bd = app.add_subcommand("build", "compile a hand-written template document into a bundle");
  bd->add_option("--templates", bd_templates, "template document")->required()->check(CLI::ExistingFile);
  bd->add_option("--out", bd_out, "bundle to write")->required();
  bd->callback([&]() {
    Bundle b = build_bundle(load_json(bd_templates));
    save_bundle(bd_out, b);
    std::cerr << b.tree.leaf_count() << " templates, " << b.schema.fields().size() << " fields\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const StageError& e) {
    std::cerr << "error in stage " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
