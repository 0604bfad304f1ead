#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairaudit/design.hpp"

namespace fairaudit {

// (c_neg, c_pos): cost of a false positive, cost of a false negative.
struct CostPair {
  double c_neg = 1.0;
  double c_pos = 1.0;

  void validate() const;
  json to_json() const;
  static CostPair from_json(const json& j);
};

// Expected-cost-minimizing decision threshold for calibrated probabilities.
double cost_threshold(const CostPair& costs);

enum class LearnerFamily { kLogistic, kTree, kForest, kGbStumps };

std::string to_string(LearnerFamily family);
LearnerFamily learner_family_from_string(const std::string& s);

struct LearnerSpec {
  LearnerFamily family = LearnerFamily::kLogistic;
  CostPair costs;
  uint64_t seed = 0;

  int max_depth = 20;       // tree
  int n_trees = 200;        // forest
  int n_rounds = 200;       // gb_stumps
  double shrinkage = 0.1;   // gb_stumps
  double l2 = 1e-4;         // logistic

  // Decision threshold on p_hat. Instance weighting already folds the costs
  // into training, so the default is 0.5; set this to cost_threshold(costs)
  // to use the threshold rule instead (typically with unit costs).
  std::optional<double> threshold_override;

  void validate() const;
  json to_json() const;
  static LearnerSpec from_json(const json& j);
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output: probability (tree/forest) or score (gb)
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_row(const double* x, int p) const;
  int depth() const;
};

struct TrainOptions {
  bool include_sensitive = true;
  std::vector<std::string> exclude_columns;
  std::vector<std::string> restrict_columns;

  DesignOptions design() const;
  json to_json() const;
  static TrainOptions from_json(const json& j);
};

struct TrainedModel {
  LearnerSpec spec;
  TrainOptions options;
  std::vector<FeatureInfo> features;
  double decision_threshold = 0.5;

  // logistic
  std::vector<double> coef;
  double intercept = 0.0;
  bool converged = false;
  int iterations = 0;

  // tree / forest / gb_stumps
  std::vector<Tree> trees;
  double init_score = 0.0;  // gb_stumps

  std::vector<std::string> feature_names() const;

  json to_json() const;
  static TrainedModel from_json(const json& j);
};

struct PredictionVector {
  std::vector<double> p_hat;
  std::vector<int> y_hat;
};

TrainedModel train(const LearnerSpec& spec, const Dataset& data, const TrainOptions& options);
TrainedModel train(const LearnerSpec& spec, const Dataset& data, bool include_sensitive = true);

PredictionVector predict_proba(const TrainedModel& model, const Dataset& data);

// Probabilities for a prebuilt design matrix (feature layout must match).
std::vector<double> predict_design(const TrainedModel& model, const DesignMatrix& dm);

// --- weighted L2-regularized logistic core (shared with propensity) ---
//
// Loss(beta) = (sum_i w_i * ce_i) / (sum_i w_i) + (l2/2) * sum_{j<p} beta_j^2
// with beta laid out as p coefficients followed by the intercept; the
// intercept is not penalized. Normalizing by the weight total makes the
// minimizer invariant to rescaling all weights by a constant.

double logistic_loss(const std::vector<double>& x, int n, int p, const std::vector<int>& y,
                     const std::vector<double>& w, const std::vector<double>& beta, double l2);

std::vector<double> logistic_gradient(const std::vector<double>& x, int n, int p,
                                      const std::vector<int>& y, const std::vector<double>& w,
                                      const std::vector<double>& beta, double l2);

struct LogisticFit {
  std::vector<double> beta;  // size p+1, last entry is the intercept
  int iterations = 0;
  bool converged = false;
};

// Full-batch gradient descent with Armijo backtracking. Stops when the
// gradient max-norm drops below tol or after max_iter iterations.
LogisticFit fit_logistic(const std::vector<double>& x, int n, int p, const std::vector<int>& y,
                         const std::vector<double>& w, double l2 = 1e-4, int max_iter = 500,
                         double tol = 1e-6);

// Damped Newton variant: same loss, quadratic local model with step halving.
// Used where an accurate fit within a small iteration cap matters.
LogisticFit fit_logistic_newton(const std::vector<double>& x, int n, int p,
                                const std::vector<int>& y, const std::vector<double>& w,
                                double l2 = 0.0, int max_iter = 100, double tol = 1e-8);

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

// Per-record cost weights: c_pos on positives, c_neg on negatives.
std::vector<double> instance_weights(const std::vector<int>& y, const CostPair& costs);

}  // namespace fairaudit
