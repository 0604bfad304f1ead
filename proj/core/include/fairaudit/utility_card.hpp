#pragma once

#include <map>
#include <string>
#include <vector>

#include "fairaudit/learners.hpp"

namespace fairaudit {

// (w1, w2): weight of correct positive-class probability mass, weight of
// correct negative-class probability mass.
struct UtilityWeights {
  double w1 = 25.0;
  double w2 = 1.0;

  void validate() const;
  json to_json() const;
  static UtilityWeights from_json(const json& j);
};

// IU = w1 * y * p_hat + w2 * (1 - y) * (1 - p_hat)
double individual_utility(int y, double p_hat, const UtilityWeights& w);

struct UtilityRecords {
  std::vector<double> iu_full;
  std::vector<double> iu_basic;
  std::vector<double> iu_diff;  // iu_full - iu_basic, per record
  std::vector<int> y;
  DesignMatrix design;  // tree feature space: the full model's design
  UtilityWeights weights;

  int size() const { return static_cast<int>(iu_diff.size()); }
};

// One record per test row. The basic model's source columns must equal
// `expected_basic_columns` when that list is non-empty, and both models must
// share one family.
UtilityRecords utility_table(const TrainedModel& full, const TrainedModel& basic,
                             const Dataset& test, const UtilityWeights& w,
                             const std::vector<std::string>& expected_basic_columns = {});

struct UtilityNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean iu_diff of the node's records
  int n = 0;
  double sse = 0.0;  // sum of squared deviations from `value`
};

struct UtilityTree {
  std::vector<UtilityNode> nodes;  // nodes[0] is the root; compact
  std::vector<FeatureInfo> features;
  double alpha = 0.0;              // per-sample cost-complexity parameter used
  std::vector<double> alpha_path;  // ascending, starts at 0 for the full tree
  bool alpha_rank_truncated = false;
  int n_records = 0;

  int leaf_count() const;
  json to_json() const;
};

// Squared-error regression tree on iu_diff with weakest-link cost-complexity
// pruning at the alpha_rank-th largest path value. A rank beyond the path
// uses the largest available alpha and sets alpha_rank_truncated.
UtilityTree fit_utility_tree(const UtilityRecords& records, int min_split = 50,
                             int min_leaf = 50, int alpha_rank = 5);

// column -> code -> display label, for categorical split rendering.
using LabelDictionary = std::map<std::string, std::map<std::string, std::string>>;

struct GuideDocument {
  std::string text;  // one conjunction rule per leaf
  std::string dot;   // graphviz digraph, one node per tree node
};

// Split thresholds are rendered in source units via each feature's
// source_range. Every categorical code appearing in a split must have a
// dictionary label.
GuideDocument render_guide(const UtilityTree& tree, const LabelDictionary& dictionary);

}  // namespace fairaudit
