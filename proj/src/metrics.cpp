// Copyright 2026 The logtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "logtree/metrics.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "logtree/error.hpp"
#include "logtree/matcher.hpp"

namespace logtree::metrics {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double template_similarity(std::string_view pred, std::string_view gt) {
  std::size_t longest = std::max(pred.size(), gt.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(pred, gt)) / static_cast<double>(longest);
}

namespace {

void check_universe(const Parse& pred, const Parse& gt) {
  if (pred.size() != gt.size())
    throw InputError("predicted parse covers " + std::to_string(pred.size()) + " lines, truth covers " +
                     std::to_string(gt.size()));
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (!gt[i]) throw InputError("truth leaves line " + std::to_string(i + 1) + " unlabeled");
}

template <class F>
double mean_over(std::size_t n, F score) {
  if (n == 0) return 1.0;
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) sum += score(i);
  return sum / static_cast<double>(n);
}

}  // namespace

double mean_template_similarity(const Parse& pred, const Parse& gt) {
  check_universe(pred, gt);
  return mean_over(gt.size(), [&](std::size_t i) {
    return pred[i] ? template_similarity(pred[i]->wildcard, gt[i]->wildcard) : 0.0;
  });
}

namespace {

using Views = std::vector<const std::string*>;

// Dense ids per distinct label, -1 for an unset one.
std::vector<int> intern(const Views& labels, std::size_t& distinct) {
  std::unordered_map<std::string_view, int> ids;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const std::string* s : labels) {
    if (!s) {
      out.push_back(-1);
      continue;
    }
    auto [it, fresh] = ids.emplace(*s, static_cast<int>(ids.size()));
    out.push_back(it->second);
  }
  distinct = ids.size();
  return out;
}

struct Groups {
  std::vector<int> pred, truth;
  std::vector<std::size_t> pred_size, truth_size;
  std::vector<int> pred_truth;  // the one truth label of a pure predicted group, -2 when mixed
};

Groups group_table(const Views& pred, const Views& gt) {
  Groups g;
  std::size_t np = 0, nt = 0;
  g.pred = intern(pred, np);
  g.truth = intern(gt, nt);
  g.pred_size.assign(np, 0);
  g.truth_size.assign(nt, 0);
  g.pred_truth.assign(np, -1);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    ++g.truth_size[g.truth[i]];
    int p = g.pred[i];
    if (p < 0) continue;
    ++g.pred_size[p];
    int& t = g.pred_truth[p];
    if (t == -1) t = g.truth[i];
    else if (t != g.truth[i]) t = -2;
  }
  return g;
}

Groups group_table(const Parse& pred, const Parse& gt) {
  Views p, t;
  p.reserve(pred.size());
  t.reserve(gt.size());
  for (const auto& l : pred) p.push_back(l ? &l->group : nullptr);
  for (const auto& l : gt) t.push_back(&l->group);
  return group_table(p, t);
}

double similarity_of(const Groups& g) {
  return mean_over(g.truth.size(), [&](std::size_t i) {
    int p = g.pred[i];
    if (p < 0 || g.pred_truth[p] == -2) return 0.0;
    return static_cast<double>(g.pred_size[p]) / static_cast<double>(g.truth_size[g.truth[i]]);
  });
}

}  // namespace

double group_similarity(const std::vector<std::optional<std::string>>& pred, const std::vector<std::string>& gt) {
  if (pred.size() != gt.size())
    throw InputError("predicted labels cover " + std::to_string(pred.size()) + " items, truth covers " +
                     std::to_string(gt.size()));
  Views p, t;
  p.reserve(pred.size());
  t.reserve(gt.size());
  for (const auto& l : pred) p.push_back(l ? &*l : nullptr);
  for (const auto& l : gt) t.push_back(&l);
  return similarity_of(group_table(p, t));
}

double parser_group_similarity(const Parse& pred, const Parse& gt) {
  check_universe(pred, gt);
  return similarity_of(group_table(pred, gt));
}

double group_accuracy(const Parse& pred, const Parse& gt) {
  check_universe(pred, gt);
  // Same set exactly when the predicted group is pure and as large as the true one.
  Groups g = group_table(pred, gt);
  return mean_over(gt.size(), [&](std::size_t i) {
    int p = g.pred[i];
    if (p < 0 || g.pred_truth[p] == -2) return 0.0;
    return g.pred_size[p] == g.truth_size[g.truth[i]] ? 1.0 : 0.0;
  });
}

double parsing_accuracy(const Parse& pred, const Parse& gt) {
  check_universe(pred, gt);
  return mean_over(gt.size(), [&](std::size_t i) { return pred[i] && pred[i]->wildcard == gt[i]->wildcard ? 1.0 : 0.0; });
}

double schema_group_similarity(const std::vector<std::optional<std::string>>& pred,
                               const std::vector<std::string>& gt) {
  return group_similarity(pred, gt);
}

double mapping_accuracy(const Mappings& pred, const Mappings& gt, const std::map<std::string, std::size_t>& weights) {
  for (const auto* m : {&pred, &gt})
    for (const auto& [field, _] : *m)
      if (!weights.count(field)) throw InputError("field '" + field + "' is not in the shared inventory");
  double sum = 0, total = 0;
  static const std::vector<std::string> none;
  for (const auto& [field, w] : weights) {
    auto pi = pred.find(field);
    auto gi = gt.find(field);
    const auto& p = pi == pred.end() ? none : pi->second;
    const auto& g = gi == gt.end() ? none : gi->second;
    double s;
    if (p.empty()) {
      s = g.empty() ? 1.0 : 0.0;
    } else {
      std::set<std::string> truth(g.begin(), g.end());
      std::set<std::string> said(p.begin(), p.end());
      std::size_t hit = 0;
      for (const auto& a : said) hit += truth.count(a);
      s = static_cast<double>(hit) / static_cast<double>(said.size());
    }
    sum += s * static_cast<double>(w);
    total += static_cast<double>(w);
  }
  return total == 0 ? 1.0 : sum / total;
}

Report evaluate(const Bundle& pred, const Bundle& gt, const std::vector<std::string>& lines) {
  CompiledTree pt(pred.tree), gtree(gt.tree);
  auto pr = ingest_parallel(pt, lines);
  auto gr = ingest_parallel(gtree, lines);

  std::map<NodeId, std::string> pred_wild, gt_wild;
  for (const auto& t : pred.tree.templates()) pred_wild[t.leaf_id] = wildcard_form(pred.tree, t);
  for (const auto& t : gt.tree.templates()) gt_wild[t.leaf_id] = wildcard_form(gt.tree, t);

  auto variables = [](const StructuredRecord& r, const ParseTree& tree) {
    std::vector<const Capture*> out;
    for (const auto& c : r.captures)
      if (tree.node(c.node).token.is_variable()) out.push_back(&c);
    return out;
  };

  Report rep;
  rep.lines = lines.size();
  Parse p, g;
  std::vector<std::optional<std::string>> pnames;
  std::vector<std::string> gnames;
  std::map<std::string, std::size_t> weights;
  for (const auto& f : gt.schema.fields()) weights[f.name] = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (pr[i].matched()) ++rep.pred_matched;
    if (!gr[i].matched()) continue;
    ++rep.gt_matched;
    const auto& grec = *gr[i].record;
    g.push_back(LineParse{std::to_string(grec.template_id), gt_wild.at(grec.template_id)});
    if (!pr[i].matched()) {
      p.push_back(std::nullopt);
      continue;
    }
    const auto& prec = *pr[i].record;
    p.push_back(LineParse{std::to_string(prec.template_id), pred_wild.at(prec.template_id)});

    for (const auto& c : grec.captures)
      if (gt.tree.node(c.node).field) ++weights[*gt.tree.node(c.node).field];
    auto pv = variables(prec, pred.tree);
    auto gv = variables(grec, gt.tree);
    if (pv.size() != gv.size()) {
      ++rep.misaligned_lines;
      continue;
    }
    for (std::size_t k = 0; k < gv.size(); ++k) {
      const auto& gf = gt.tree.node(gv[k]->node).field;
      if (!gf) continue;  // the truth leaves it unnamed: nothing to group against
      const auto& pf = pred.tree.node(pv[k]->node).field;
      pnames.push_back(pf ? std::optional<std::string>(*pf) : std::nullopt);
      gnames.push_back(*gf);
    }
  }
  rep.aligned_occurrences = gnames.size();
  rep.ts = mean_template_similarity(p, g);
  rep.pgs = parser_group_similarity(p, g);
  rep.ga = group_accuracy(p, g);
  rep.pa = parsing_accuracy(p, g);
  rep.sgs = schema_group_similarity(pnames, gnames);

  Mappings shared;
  for (const auto& [field, attrs] : pred.mappings) {
    if (weights.count(field)) shared[field] = attrs;
    else ++rep.foreign_fields;
  }
  Mappings truth;
  for (const auto& [field, attrs] : gt.mappings)
    if (weights.count(field)) truth[field] = attrs;
  rep.map = mapping_accuracy(shared, truth, weights);
  return rep;
}

}  // namespace logtree::metrics
