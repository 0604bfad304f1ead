#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairaudit/jsonio.hpp"

namespace fairaudit {

// Reserved category that unknown categorical codes are remapped into.
inline constexpr const char* kMissingCategory = "MISSING";

enum class ColumnKind {
  kContinuous,
  kCategorical,
  kBinaryOutcome,
  kSensitive,
  // Hidden bookkeeping columns (e.g. a generator's clean outcome copy).
  // Never enter any design matrix.
  kAudit,
};

std::string to_string(ColumnKind kind);
ColumnKind column_kind_from_string(const std::string& s);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kContinuous;
  // Required iff kind == continuous; scaling endpoints for preprocessing.
  std::optional<std::pair<double, double>> plausible_range;
  // Valid codes for categorical / sensitive columns.
  std::vector<std::string> categories;
  // Original plausible range, preserved by preprocessing after the working
  // range becomes [0,1]. Display-only (e.g. unscaling tree thresholds).
  std::optional<std::pair<double, double>> source_range;
};

struct FeatureSchema {
  std::vector<ColumnSpec> columns;

  // Enforces: exactly one outcome, >=1 sensitive column, plausible_range
  // present iff continuous with min < max, categories present for
  // categorical/sensitive, unique names. Throws ConfigError.
  void validate() const;

  int column_index(const std::string& name) const;  // -1 when absent
  const ColumnSpec& column(const std::string& name) const;
  int outcome_index() const;

  json to_json() const;
  static FeatureSchema from_json(const json& j);
};

// One binary contrast on a sensitive column: rows with `positive` form the
// z=1 group, rows with `negative` z=0.
struct SensitiveContrast {
  std::string column;
  std::string positive;
  std::string negative;

  json to_json() const;
  static SensitiveContrast from_json(const json& j);
};

}  // namespace fairaudit
