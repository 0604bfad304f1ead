#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairaudit/design.hpp"

namespace fairaudit {

// Logistic model of group membership on baseline covariates. Sensitive
// columns and caller-named surrogates never enter the regression.
struct PropensityModel {
  SensitiveContrast contrast;
  std::vector<FeatureInfo> features;
  std::vector<double> coef;
  double intercept = 0.0;
  std::vector<double> scores;  // fitted e_i per record, in (0,1)
  std::vector<int> z;          // group indicator per record
  std::vector<std::string> excluded;
  bool converged = false;
  int iterations = 0;

  json to_json() const;
};

// Fits Z on the non-sensitive design minus `exclusions`. Non-convergence
// within the iteration cap is treated as separation and raised as a
// NumericError naming the largest-|standardized coefficient| features.
PropensityModel fit_propensity(const Dataset& data, const SensitiveContrast& contrast,
                               const std::vector<std::string>& exclusions = {});

struct SurrogateFlag {
  std::string feature;
  double single_accuracy = 0.0;   // single-feature classification accuracy for Z
  double coef_scaled = 0.0;       // |coefficient| * feature sd in the full model
  std::string reason;             // "single_feature_accuracy" | "top_coefficient"

  json to_json() const;
};

// Advisory only: flags features whose single-feature logistic fit classifies
// Z with accuracy >= 0.95, plus the top-5 standardized coefficients of the
// full model. Exclusion stays an explicit config decision.
std::vector<SurrogateFlag> detect_surrogates(const PropensityModel& model, const Dataset& data);

struct MatchedSample {
  std::vector<std::pair<int, int>> pairs;  // (treated row, control row)
  std::vector<int> unmatched_treated;
  double caliper = 0.05;
  double unmatched_fraction = 0.0;

  std::vector<int> matched_rows() const;  // union of both sides, ascending
  json to_json() const;
};

// Greedy 1-to-1 nearest-neighbor matching without replacement: treated units
// in descending score order each take the closest unused control within the
// caliper. Exact score ties break by a seed-derived hash so record order
// never matters.
MatchedSample match_caliper(const PropensityModel& model, double caliper = 0.05,
                            uint64_t seed = 0);

struct FeatureBalance {
  std::string feature;
  double smd_before = 0.0;
  std::optional<double> smd_after;
  bool degenerate = false;  // zero pooled variance with unequal means

  json to_json() const;
};

struct BalanceReport {
  std::vector<FeatureBalance> features;
  std::vector<SurrogateFlag> surrogates;

  json to_json() const;
};

// Standardized mean differences (ddof=1 variances, pooled as the mean of the
// two group variances) per design feature, before and optionally after
// matching. Categorical columns enter via their indicator features.
BalanceReport balance_smd(const Dataset& data, const SensitiveContrast& contrast,
                          const MatchedSample* matched = nullptr);

}  // namespace fairaudit
