// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "logtree/bundle.hpp"
#include "logtree/matcher.hpp"

namespace logtree::query {

/// Query documents are parenthesised prefix expressions:
///
///   (query custom
///     (and (exists assigned_ip)
///          (eq log_host "laphroaig")
///          (not (contains client "android"))))
///
/// Predicates: exists, eq, ne, contains, lt, le, gt, ge, range (lo <= v < hi),
/// const (substring of the template's constant part); connectives and, or,
/// not. Names resolve in the document's form (custom: schema fields,
/// standardized: taxonomy attributes); "field:" or "attr:" forces one. The
/// (query FORM ...) wrapper is optional and defaults to custom. Comments run
/// from ';' to the end of the line.
enum class Form { custom, standardized };

struct Expr {
  enum class Kind { all, any, negate, exists, eq, ne, contains, lt, le, gt, ge, range, constant };
  enum class Space { form, field, attr };

  Kind kind = Kind::all;
  Space space = Space::form;
  std::string name;
  std::string value;   // eq/ne/contains/const operand, range lower bound
  std::string upper;   // range upper bound
  double number = 0;   // lt/le/gt/ge operand
  std::vector<Expr> children;
};

struct QuerySpec {
  Form form = Form::custom;
  Expr root;
};

/// Throws ParseError located as "line:column".
QuerySpec parse_query(std::string_view text);
std::string to_text(const QuerySpec& spec);

/// What a query sees of one ingested line.
struct Row {
  std::size_t line_number = 0;
  NodeId template_id = 0;
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<std::pair<std::string, std::string>> attrs;
};

Row row_of(const StructuredRecord& record, const Bundle& bundle);
/// Matched records of `lines` under `bundle`.
std::vector<Row> ingest_rows(const Bundle& bundle, const std::vector<std::string>& lines);
/// Reads ingest JSONL output; unmatched lines are skipped. Needs records
/// written with the taxonomy view for standardized queries.
std::vector<Row> rows_from_jsonl(std::string_view text);

/// Throws QueryError for a name unknown to the bundle schema (custom) or to
/// `taxonomy` (standardized; the bundle's mapped attributes when null).
void check_query(const QuerySpec& spec, const Bundle& bundle, const std::set<std::string>* taxonomy = nullptr);

/// Matching line ordinals, ascending. Checks the query first.
std::vector<std::size_t> run_query(const std::vector<Row>& rows, const QuerySpec& spec, const Bundle& bundle,
                                   const std::set<std::string>* taxonomy = nullptr);
std::vector<std::size_t> run_query_serial(const std::vector<Row>& rows, const QuerySpec& spec, const Bundle& bundle,
                                          const std::set<std::string>* taxonomy = nullptr);

/// Syslog "Mon DD HH:MM:SS" becomes "MM-DD HH:MM:SS" so that it orders
/// across months; anything else is only trimmed.
std::string normalize_timestamp(std::string_view value);

struct SubstringStage {
  bool include = true;
  std::string text;
};
using SubstringPipeline = std::vector<SubstringStage>;

/// `fgrep "a" | fgrep -v "b"`. Throws ParseError; an empty pipeline is rejected.
SubstringPipeline parse_pipeline(std::string_view text);
std::vector<std::size_t> run_substring(const std::vector<std::string>& lines, const SubstringPipeline& pipeline);

struct Score {
  double precision = 0;
  double recall = 0;
  bool flagged = false;  // nothing predicted against a nonempty golden set

  double f1() const { return precision + recall == 0 ? 0.0 : 2 * precision * recall / (precision + recall); }
};
Score score(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& golden);

/// Suite document:
///   {"queries":[{"name":..,"custom":"(..)","standardized":"(..)",
///                "substring":"fgrep ..","golden":[line numbers]}]}
/// Each form is optional per query.
struct SuiteQuery {
  std::string name;
  std::optional<QuerySpec> custom;
  std::optional<QuerySpec> standardized;
  std::optional<SubstringPipeline> substring;
  std::vector<std::size_t> golden;
};
std::vector<SuiteQuery> parse_suite(const nlohmann::json& doc);

struct FormResult {
  bool present = false;
  Score score;
  std::vector<std::size_t> matches;
};

struct SuiteRow {
  std::string name;
  FormResult custom, standardized, substring;
};

struct SuiteReport {
  std::vector<SuiteRow> rows;
  double custom_f1 = 0, standardized_f1 = 0, substring_f1 = 0;  // means over queries carrying the form
  bool custom_ge_standardized = false;
  bool custom_ge_substring = false;

  nlohmann::ordered_json to_json() const;
};

SuiteReport run_suite(const std::vector<SuiteQuery>& suite, const std::vector<std::string>& lines,
                      const Bundle& bundle, const std::set<std::string>* taxonomy = nullptr);

}  // namespace logtree::query
