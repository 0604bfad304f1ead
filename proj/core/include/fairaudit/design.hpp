#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairaudit/dataset.hpp"

namespace fairaudit {

// One column of the numeric design matrix, with enough metadata to render a
// split on it back in source units ("age > 72", "surgery=CARD").
struct FeatureInfo {
  std::string name;    // "age" or "surgery=CARD"
  std::string column;  // source dataset column
  ColumnKind kind = ColumnKind::kContinuous;
  std::string code;  // one-hot code; empty for continuous features
  std::optional<std::pair<double, double>> source_range;

  json to_json() const;
  static FeatureInfo from_json(const json& j);
};

struct DesignOptions {
  bool include_sensitive = true;
  std::vector<std::string> exclude_columns;
  // When non-empty, only these columns enter the design (outcome and audit
  // columns stay excluded regardless).
  std::vector<std::string> restrict_columns;

  json to_json() const;
  static DesignOptions from_json(const json& j);
};

// Row-major dense matrix. Continuous columns contribute one feature each,
// categorical and sensitive columns one indicator per schema category.
struct DesignMatrix {
  std::vector<FeatureInfo> features;
  std::vector<double> values;  // n * p
  int n = 0;
  int p = 0;

  double at(int row, int col) const { return values[static_cast<size_t>(row) * p + col]; }
  std::vector<std::string> feature_names() const;
};

// Requires a preprocessed dataset (no missing cells among selected columns).
DesignMatrix build_design(const Dataset& data, const DesignOptions& opts);

}  // namespace fairaudit
