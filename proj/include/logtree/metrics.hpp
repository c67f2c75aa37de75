// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logtree/bundle.hpp"

namespace logtree::metrics {

/// What a parser says about one line. `group` identifies the template the
/// line was assigned to; `wildcard` is that template with "<*>" for variables.
struct LineParse {
  std::string group;
  std::string wildcard;
};

/// One entry per scored line. An unset predicted entry means the parser did
/// not match the line; it scores 0 under every line metric. Ground truth must
/// label every line.
using Parse = std::vector<std::optional<LineParse>>;

std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 - levenshtein / max length; two empty strings score 1.
double template_similarity(std::string_view pred, std::string_view gt);

/// Mean template similarity over lines.
double mean_template_similarity(const Parse& pred, const Parse& gt);

/// Per item: 0 if its predicted label is shared with an item of another truth
/// label, else |pred group| / |truth group|. Mean over items. An empty universe
/// scores 1. Throws InputError when the sizes differ or truth has a gap.
double group_similarity(const std::vector<std::optional<std::string>>& pred, const std::vector<std::string>& gt);

double parser_group_similarity(const Parse& pred, const Parse& gt);
double group_accuracy(const Parse& pred, const Parse& gt);
double parsing_accuracy(const Parse& pred, const Parse& gt);

/// Variable occurrences aligned across the two schemas: predicted field name
/// (unset when the variable is unnamed) against the true field name.
double schema_group_similarity(const std::vector<std::optional<std::string>>& pred,
                               const std::vector<std::string>& gt);

/// Per field: 1 when both are unmapped, 0 when only the truth maps it, else
/// the share of predicted attributes found in the truth. Averaged with the
/// given occurrence counts as weights. Throws InputError for a field outside
/// `weights`.
double mapping_accuracy(const Mappings& pred, const Mappings& gt, const std::map<std::string, std::size_t>& weights);

/// Scores derived by re-parsing a log with a predicted and a true bundle.
struct Report {
  std::size_t lines = 0;
  std::size_t pred_matched = 0;
  std::size_t gt_matched = 0;
  std::size_t aligned_occurrences = 0;
  std::size_t misaligned_lines = 0;  // both matched, different variable counts; left out of SGS
  std::size_t foreign_fields = 0;     // predicted mapped fields absent from the true schema
  double ts = 0, pgs = 0, sgs = 0, ga = 0, pa = 0, map = 0;
};

/// Lines the true bundle does not match are not scored.
Report evaluate(const Bundle& pred, const Bundle& gt, const std::vector<std::string>& lines);

}  // namespace logtree::metrics
