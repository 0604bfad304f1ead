#include "fairaudit/utility_card.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>

#include "fairaudit/errors.hpp"

namespace fairaudit {

namespace {
constexpr const char* kModule = "utility_card";
}

void UtilityWeights::validate() const {
  if (!(w1 > 0.0) || !(w2 > 0.0))
    throw ConfigError(kModule, "utility weights must both be positive");
}

json UtilityWeights::to_json() const { return json{{"w1", w1}, {"w2", w2}}; }

UtilityWeights UtilityWeights::from_json(const json& j) {
  UtilityWeights w;
  if (j.is_array()) {
    if (j.size() != 2) throw ConfigError(kModule, "utility weights array must have 2 entries");
    w.w1 = j[0].get<double>();
    w.w2 = j[1].get<double>();
  } else {
    w.w1 = j.at("w1").get<double>();
    w.w2 = j.at("w2").get<double>();
  }
  w.validate();
  return w;
}

double individual_utility(int y, double p_hat, const UtilityWeights& w) {
  if (y != 0 && y != 1) throw ConfigError(kModule, "utility labels must be 0 or 1");
  if (!(p_hat >= 0.0 && p_hat <= 1.0))
    throw ConfigError(kModule, "p_hat must lie in [0,1]");
  return w.w1 * y * p_hat + w.w2 * (1 - y) * (1.0 - p_hat);
}

UtilityRecords utility_table(const TrainedModel& full, const TrainedModel& basic,
                             const Dataset& test, const UtilityWeights& w,
                             const std::vector<std::string>& expected_basic_columns) {
  w.validate();
  if (test.rows() == 0) throw DataError(kModule, "empty test partition");
  if (full.spec.family != basic.spec.family)
    throw ConfigError(kModule, "full and basic models must share one family");

  std::set<std::string> basic_cols;
  for (const auto& f : basic.features) basic_cols.insert(f.column);
  if (!expected_basic_columns.empty()) {
    std::set<std::string> expected(expected_basic_columns.begin(), expected_basic_columns.end());
    if (basic_cols != expected) {
      std::string got, want;
      for (const auto& c : basic_cols) got += (got.empty() ? "" : ", ") + c;
      for (const auto& c : expected) want += (want.empty() ? "" : ", ") + c;
      throw ConfigError(kModule, "basic model feature set mismatch: trained on {" + got +
                                     "}, expected {" + want + "}");
    }
  }

  PredictionVector pf = predict_proba(full, test);
  PredictionVector pb = predict_proba(basic, test);
  UtilityRecords rec;
  rec.weights = w;
  rec.y = test.labels();
  int n = test.rows();
  rec.iu_full.resize(static_cast<size_t>(n));
  rec.iu_basic.resize(static_cast<size_t>(n));
  rec.iu_diff.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    size_t s = static_cast<size_t>(i);
    rec.iu_full[s] = individual_utility(rec.y[s], pf.p_hat[s], w);
    rec.iu_basic[s] = individual_utility(rec.y[s], pb.p_hat[s], w);
    rec.iu_diff[s] = rec.iu_full[s] - rec.iu_basic[s];
  }
  rec.design = build_design(test, full.options.design());
  return rec;
}

int UtilityTree::leaf_count() const {
  int k = 0;
  for (const auto& n : nodes) k += n.feature < 0 ? 1 : 0;
  return k;
}

json UtilityTree::to_json() const {
  json nodes_j = json::array();
  for (const auto& n : nodes) {
    nodes_j.push_back(json{{"feature", n.feature},
                           {"threshold", n.threshold},
                           {"left", n.left},
                           {"right", n.right},
                           {"value", n.value},
                           {"n", n.n},
                           {"sse", n.sse}});
  }
  json feats = json::array();
  for (const auto& f : features) feats.push_back(f.to_json());
  json j;
  j["nodes"] = nodes_j;
  j["features"] = feats;
  j["alpha"] = alpha;
  j["alpha_path"] = alpha_path;
  j["alpha_rank_truncated"] = alpha_rank_truncated;
  j["n_records"] = n_records;
  return j;
}

namespace {

struct NodeStats {
  double mean = 0.0;
  double sse = 0.0;
};

NodeStats stats_of(const std::vector<double>& y, const std::vector<int>& rows) {
  NodeStats s;
  double sum = 0.0;
  for (int r : rows) sum += y[static_cast<size_t>(r)];
  s.mean = sum / static_cast<double>(rows.size());
  for (int r : rows) {
    double d = y[static_cast<size_t>(r)] - s.mean;
    s.sse += d * d;
  }
  return s;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double children_sse = 0.0;
};

// minimizes SSE(left) + SSE(right); ties go to the lowest feature index,
// then the lowest threshold
SplitChoice best_split(const DesignMatrix& dm, const std::vector<double>& y,
                       const std::vector<int>& rows, int min_leaf) {
  SplitChoice best;
  double best_sse = std::numeric_limits<double>::infinity();
  int m = static_cast<int>(rows.size());
  std::vector<std::pair<double, double>> xy(static_cast<size_t>(m));
  for (int j = 0; j < dm.p; ++j) {
    for (int i = 0; i < m; ++i) {
      int r = rows[static_cast<size_t>(i)];
      xy[static_cast<size_t>(i)] = {dm.at(r, j), y[static_cast<size_t>(r)]};
    }
    std::sort(xy.begin(), xy.end());
    if (xy.front().first == xy.back().first) continue;

    double sum_total = 0.0, sum2_total = 0.0;
    for (const auto& p : xy) {
      sum_total += p.second;
      sum2_total += p.second * p.second;
    }
    double sum_l = 0.0, sum2_l = 0.0;
    for (int i = 1; i < m; ++i) {
      sum_l += xy[static_cast<size_t>(i - 1)].second;
      sum2_l += xy[static_cast<size_t>(i - 1)].second * xy[static_cast<size_t>(i - 1)].second;
      if (xy[static_cast<size_t>(i)].first == xy[static_cast<size_t>(i - 1)].first) continue;
      if (i < min_leaf || m - i < min_leaf) continue;
      double nl = i, nr = m - i;
      double sse_l = std::max(0.0, sum2_l - sum_l * sum_l / nl);
      double sum_r = sum_total - sum_l;
      double sse_r = std::max(0.0, (sum2_total - sum2_l) - sum_r * sum_r / nr);
      double total = sse_l + sse_r;
      if (best.feature < 0 || total < best_sse - 1e-15 * std::max(1.0, best_sse)) {
        best_sse = total;
        best.feature = j;
        best.threshold =
            (xy[static_cast<size_t>(i - 1)].first + xy[static_cast<size_t>(i)].first) / 2.0;
        best.children_sse = total;
      }
    }
  }
  return best;
}

// (sum of leaf sse, leaf count) over the live subtree rooted at `idx`
std::pair<double, int> subtree_leaves(const std::vector<UtilityNode>& nodes, int idx) {
  const UtilityNode& n = nodes[static_cast<size_t>(idx)];
  if (n.feature < 0) return {n.sse, 1};
  auto l = subtree_leaves(nodes, n.left);
  auto r = subtree_leaves(nodes, n.right);
  return {l.first + r.first, l.second + r.second};
}

void live_internal_nodes(const std::vector<UtilityNode>& nodes, int idx, std::vector<int>* out) {
  const UtilityNode& n = nodes[static_cast<size_t>(idx)];
  if (n.feature < 0) return;
  out->push_back(idx);
  live_internal_nodes(nodes, n.left, out);
  live_internal_nodes(nodes, n.right, out);
}

std::vector<UtilityNode> compact(const std::vector<UtilityNode>& nodes) {
  std::vector<int> remap(nodes.size(), -1);
  std::vector<int> order;
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    int idx = stack.back();
    stack.pop_back();
    remap[static_cast<size_t>(idx)] = static_cast<int>(order.size());
    order.push_back(idx);
    const UtilityNode& n = nodes[static_cast<size_t>(idx)];
    if (n.feature >= 0) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
  std::vector<UtilityNode> out;
  out.reserve(order.size());
  for (int idx : order) {
    UtilityNode n = nodes[static_cast<size_t>(idx)];
    if (n.feature >= 0) {
      n.left = remap[static_cast<size_t>(n.left)];
      n.right = remap[static_cast<size_t>(n.right)];
    } else {
      n.left = n.right = -1;
    }
    out.push_back(n);
  }
  return out;
}

}  // namespace

UtilityTree fit_utility_tree(const UtilityRecords& records, int min_split, int min_leaf,
                             int alpha_rank) {
  if (min_split < 2 || min_leaf < 1 || alpha_rank < 1)
    throw ConfigError(kModule, "tree minimums and alpha rank must be positive");
  int n = records.size();
  if (n < min_split)
    throw DataError(kModule, "utility tree needs at least " + std::to_string(min_split) +
                                 " records, got " + std::to_string(n));
  if (records.design.n != n)
    throw ConfigError(kModule, "design rows do not match utility records");

  const std::vector<double>& y = records.iu_diff;
  const DesignMatrix& dm = records.design;

  UtilityTree tree;
  tree.features = dm.features;
  tree.n_records = n;

  // grow
  std::vector<std::vector<int>> node_rows;
  {
    std::vector<int> all(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
    NodeStats s = stats_of(y, all);
    tree.nodes.push_back(UtilityNode{-1, 0.0, -1, -1, s.mean, n, s.sse});
    node_rows.push_back(std::move(all));
  }
  std::vector<int> work = {0};
  while (!work.empty()) {
    int idx = work.back();
    work.pop_back();
    std::vector<int> rows = std::move(node_rows[static_cast<size_t>(idx)]);
    int m = static_cast<int>(rows.size());
    double sse = tree.nodes[static_cast<size_t>(idx)].sse;
    if (m < min_split || sse <= 1e-12 * m) continue;
    SplitChoice choice = best_split(dm, y, rows, min_leaf);
    if (choice.feature < 0) continue;
    if (sse - choice.children_sse <= 1e-12 * std::max(1.0, sse)) continue;

    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
      if (dm.at(r, choice.feature) < choice.threshold) left_rows.push_back(r);
      else right_rows.push_back(r);
    }
    NodeStats ls = stats_of(y, left_rows);
    NodeStats rs = stats_of(y, right_rows);
    int li = static_cast<int>(tree.nodes.size());
    int ri = li + 1;
    tree.nodes.push_back(
        UtilityNode{-1, 0.0, -1, -1, ls.mean, static_cast<int>(left_rows.size()), ls.sse});
    tree.nodes.push_back(
        UtilityNode{-1, 0.0, -1, -1, rs.mean, static_cast<int>(right_rows.size()), rs.sse});
    node_rows.resize(tree.nodes.size());
    node_rows[static_cast<size_t>(li)] = std::move(left_rows);
    node_rows[static_cast<size_t>(ri)] = std::move(right_rows);
    UtilityNode& parent = tree.nodes[static_cast<size_t>(idx)];
    parent.feature = choice.feature;
    parent.threshold = choice.threshold;
    parent.left = li;
    parent.right = ri;
    work.push_back(li);
    work.push_back(ri);
  }

  // weakest-link alpha path; alphas are per-sample (sse normalized by n)
  std::vector<UtilityNode> scratch = tree.nodes;
  std::vector<double> path = {0.0};
  std::vector<std::vector<int>> collapsed_at_step = {{}};
  std::vector<int> cumulative;
  while (true) {
    std::vector<int> internal;
    live_internal_nodes(scratch, 0, &internal);
    if (internal.empty()) break;
    double gmin = std::numeric_limits<double>::infinity();
    std::vector<double> g(internal.size());
    for (size_t k = 0; k < internal.size(); ++k) {
      auto [leaf_sse, leaves] = subtree_leaves(scratch, internal[k]);
      g[k] = (scratch[static_cast<size_t>(internal[k])].sse - leaf_sse) /
             static_cast<double>(leaves - 1) / static_cast<double>(n);
      gmin = std::min(gmin, g[k]);
    }
    double tol = 1e-12 * std::max(1.0, std::fabs(gmin));
    for (size_t k = 0; k < internal.size(); ++k) {
      if (g[k] <= gmin + tol) {
        scratch[static_cast<size_t>(internal[k])].feature = -1;
        cumulative.push_back(internal[k]);
      }
    }
    path.push_back(std::max(gmin, path.back()));
    collapsed_at_step.push_back(cumulative);
  }

  tree.alpha_path = path;
  size_t pick;
  if (static_cast<size_t>(alpha_rank) <= path.size()) {
    pick = path.size() - static_cast<size_t>(alpha_rank);
  } else {
    pick = path.size() - 1;
    tree.alpha_rank_truncated = true;
  }
  tree.alpha = path[pick];

  std::vector<UtilityNode> pruned = tree.nodes;
  for (int idx : collapsed_at_step[pick]) pruned[static_cast<size_t>(idx)].feature = -1;
  tree.nodes = compact(pruned);
  return tree;
}

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string split_condition(const UtilityTree& tree, const UtilityNode& node,
                            const LabelDictionary& dictionary, bool right_branch) {
  const FeatureInfo& info = tree.features[static_cast<size_t>(node.feature)];
  if (info.kind == ColumnKind::kContinuous) {
    double v = node.threshold;
    if (info.source_range)
      v = info.source_range->first + v * (info.source_range->second - info.source_range->first);
    return info.column + (right_branch ? " >= " : " < ") + format_g6(v);
  }
  auto col_it = dictionary.find(info.column);
  if (col_it == dictionary.end() || !col_it->second.count(info.code))
    throw ConfigError(kModule,
                      "dictionary lacks a label for " + info.column + "=" + info.code);
  const std::string& label = col_it->second.at(info.code);
  return info.column + (right_branch ? " = " : " != ") + label;
}

void guide_rules(const UtilityTree& tree, const LabelDictionary& dictionary, int idx,
                 const std::string& prefix, std::string* out) {
  const UtilityNode& node = tree.nodes[static_cast<size_t>(idx)];
  if (node.feature < 0) {
    *out += prefix + " -> utility gain " + format_g6(node.value) + ", n=" +
            std::to_string(node.n) + "\n";
    return;
  }
  std::string l = split_condition(tree, node, dictionary, false);
  std::string r = split_condition(tree, node, dictionary, true);
  std::string sep = prefix.empty() ? "" : " AND ";
  guide_rules(tree, dictionary, node.left, prefix + sep + l, out);
  guide_rules(tree, dictionary, node.right, prefix + sep + r, out);
}

}  // namespace

GuideDocument render_guide(const UtilityTree& tree, const LabelDictionary& dictionary) {
  if (tree.nodes.empty()) throw ConfigError(kModule, "cannot render an empty tree");
  GuideDocument doc;

  const UtilityNode& root = tree.nodes[0];
  if (root.feature < 0) {
    doc.text = "mean utility gain " + format_g6(root.value) + " across all n=" +
               std::to_string(root.n) + " records\n";
  } else {
    guide_rules(tree, dictionary, 0, "", &doc.text);
  }

  std::string dot = "digraph utility_guide {\n  node [shape=box];\n";
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    const UtilityNode& node = tree.nodes[i];
    std::string label;
    if (node.feature < 0) {
      label = "value=" + format_g6(node.value) + "\\nn=" + std::to_string(node.n);
    } else {
      label = dot_escape(split_condition(tree, node, dictionary, true)) + "?\\nvalue=" +
              format_g6(node.value) + "\\nn=" + std::to_string(node.n);
    }
    dot += "  n" + std::to_string(i) + " [label=\"" + label + "\"];\n";
  }
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    const UtilityNode& node = tree.nodes[i];
    if (node.feature < 0) continue;
    dot += "  n" + std::to_string(i) + " -> n" + std::to_string(node.left) +
           " [label=\"no\"];\n";
    dot += "  n" + std::to_string(i) + " -> n" + std::to_string(node.right) +
           " [label=\"yes\"];\n";
  }
  dot += "}\n";
  doc.dot = dot;
  return doc;
}

}  // namespace fairaudit
