#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairaudit/dataset.hpp"

namespace fairaudit {

// Continuous covariate: normal(mean + shift_by_code[z], sd) clipped to
// plausible_range. Values are drawn in source units; the outcome model sees
// them scaled by plausible_range, matching what preprocessing produces.
struct ContinuousFeatureConfig {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
  std::pair<double, double> plausible_range{0.0, 1.0};
  std::map<std::string, double> shift_by_code;  // sensitive code -> mean offset
};

// Categorical covariate with global category probabilities, optionally
// overridden per sensitive code. mark_sensitive makes the schema treat it as
// a sensitive column (pass-through grouping).
struct CategoricalFeatureConfig {
  std::string name;
  std::vector<std::string> codes;
  std::vector<double> probs;
  std::map<std::string, std::vector<double>> probs_by_code;
  bool mark_sensitive = false;
};

// Deterministic function of the sensitive code and one continuous base
// feature: value = scale[z] * base + offset[z]. Emulates a surrogate such as
// an ideal-body-weight column derived from height and sex.
struct SurrogateConfig {
  std::string name;
  std::string base_feature;
  std::pair<double, double> plausible_range{0.0, 1.0};
  std::map<std::string, double> scale_by_code;
  std::map<std::string, double> offset_by_code;
};

struct OutcomeConfig {
  std::string name = "outcome";
  double target_rate = 0.5;
  // logit contribution per scaled continuous feature
  std::map<std::string, double> coefficients;
  // additive logit shift per sensitive code
  std::map<std::string, double> code_effects;
};

struct GeneratorConfig {
  int n = 0;
  uint64_t seed = 0;
  std::string sensitive_name = "group";
  std::vector<std::string> sensitive_codes;
  std::vector<double> sensitive_fractions;
  std::vector<ContinuousFeatureConfig> continuous;
  std::vector<CategoricalFeatureConfig> categorical;
  std::optional<SurrogateConfig> surrogate;
  OutcomeConfig outcome;

  void validate() const;
  json to_json() const;
  static GeneratorConfig from_json(const json& j);
};

struct BiasInjection {
  enum class Mechanism { kLabelFlipPos, kLabelFlipNeg, kFeatureMissingness };
  Mechanism mechanism = Mechanism::kLabelFlipPos;
  std::string target_code;    // sensitive code the injection applies to
  double q = 0.0;             // per-record probability
  std::string feature;        // for feature_missingness

  void validate() const;
  json to_json() const;
  static BiasInjection from_json(const json& j);
};

std::string to_string(BiasInjection::Mechanism m);
BiasInjection::Mechanism injection_mechanism_from_string(const std::string& s);

// Column name of the untouched outcome copy kept next to an injected label.
inline constexpr const char* kCleanLabelColumn = "label_clean";

// Draws the cohort. The outcome intercept is calibrated by bisection so the
// expected outcome rate hits config.outcome.target_rate; an unreachable
// target raises NumericError reporting the achievable rate. Injections apply
// after clean-label generation; the clean label is kept in a hidden audit
// column that never enters a design matrix.
Dataset generate(const GeneratorConfig& config, const std::vector<BiasInjection>& injections = {});

// Applies injections to an already-generated cohort (e.g. to its training
// partition only). Uses per-record streams derived from `seed`, so records
// outside the target group are untouched bit-for-bit.
Dataset apply_injections(const Dataset& data, const std::string& sensitive_name,
                         const std::vector<BiasInjection>& injections, uint64_t seed);

}  // namespace fairaudit
