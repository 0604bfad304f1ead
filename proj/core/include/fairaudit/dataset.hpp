#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairaudit/schema.hpp"

namespace fairaudit {

// Column storage: numeric kinds fill `num`, code kinds fill `cat`.
struct Column {
  std::vector<double> num;
  std::vector<std::string> cat;
  std::vector<uint8_t> missing;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<Column> columns;  // parallel to schema.columns
  std::string provenance;       // "ingested" | "synthetic"
  bool preprocessed = false;

  int rows() const;
  const Column& column(const std::string& name) const;
  Column& column(const std::string& name);

  // Outcome labels; throws DataError if any outcome cell is missing.
  std::vector<int> labels() const;

  // Row subset, same schema.
  Dataset select_rows(const std::vector<int>& rows) const;
};

struct ColumnReport {
  int out_of_range_nulled = 0;
  int imputed = 0;
  int remapped = 0;
  std::optional<double> imputation_mean;  // on the scaled [0,1] values
};

struct PreprocessReport {
  std::map<std::string, ColumnReport> columns;
  json to_json() const;
};

// CSV ingestion: header row required, names must match the schema
// (order-insensitive), empty/unparseable numeric cells become missing.
Dataset load_csv(const std::string& path, const FeatureSchema& schema);

// Raw CSV emission in schema column order; missing cells are empty.
void write_csv(const Dataset& data, const std::string& path);

// Scaling/imputation statistics fitted on one partition and frozen, so a
// held-out set is transformed with training-fold means.
class Preprocessor {
 public:
  // Learns imputation means and category dictionaries. Throws DataError if a
  // continuous column has no observed in-range value.
  void fit(const Dataset& train);

  // Applies range-nulling, [0,1] scaling by plausible_range, mean imputation
  // and MISSING-category remapping. Output schema carries range [0,1] with
  // the original endpoints preserved in source_range.
  std::pair<Dataset, PreprocessReport> transform(const Dataset& data) const;

  bool fitted() const { return fitted_; }

 private:
  FeatureSchema fit_schema_;
  std::vector<double> means_;  // per column; NaN for non-continuous
  bool fitted_ = false;
};

// Fit-and-transform on a single dataset.
std::pair<Dataset, PreprocessReport> preprocess(const Dataset& data);

// KDIGO-style creatinine rule: positive when the 48h peak rises by at least
// 0.3 mg/dL or by at least 50% over baseline.
int aki_label(double baseline_cr, double max_cr_48h);

struct SplitResult {
  Dataset train;
  Dataset test;
};

// Seeded disjoint partition; test size = round(m * test_fraction), clamped so
// both sides stay non-empty.
SplitResult split(const Dataset& data, double test_fraction, uint64_t seed);

// Keeps only rows whose contrast column equals the positive or negative code.
Dataset restrict_to_contrast(const Dataset& data, const SensitiveContrast& contrast);

// 0/1 group indicator per row (1 = positive code). Rows outside the contrast
// are rejected with DataError.
std::vector<int> contrast_indicator(const Dataset& data, const SensitiveContrast& contrast);

// Returns a copy with the contrast column's codes exchanged (positive <->
// negative); all other cells untouched.
Dataset swap_contrast(const Dataset& data, const SensitiveContrast& contrast);

}  // namespace fairaudit
