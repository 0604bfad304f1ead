#include "fairaudit/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "fairaudit/errors.hpp"
#include "fairaudit/jsonio.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit {

namespace {

constexpr const char* kModule = "dataset";
const double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_code_kind(ColumnKind k) {
  return k == ColumnKind::kCategorical || k == ColumnKind::kSensitive;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || errno == ERANGE) return false;
  while (*end == ' ' || *end == '\t') ++end;
  if (*end != '\0') return false;
  if (!std::isfinite(v)) return false;
  out = v;
  return true;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Minimal RFC-4180 row parser: comma delimiter, double-quote escaping.
std::vector<std::string> parse_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\r') {
      // tolerate CRLF line endings
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace

int Dataset::rows() const {
  if (columns.empty()) return 0;
  return static_cast<int>(columns[0].missing.size());
}

const Column& Dataset::column(const std::string& name) const {
  int idx = schema.column_index(name);
  if (idx < 0) throw DataError(kModule, "no such column: " + name);
  return columns[static_cast<size_t>(idx)];
}

Column& Dataset::column(const std::string& name) {
  int idx = schema.column_index(name);
  if (idx < 0) throw DataError(kModule, "no such column: " + name);
  return columns[static_cast<size_t>(idx)];
}

std::vector<int> Dataset::labels() const {
  int oi = schema.outcome_index();
  const Column& col = columns[static_cast<size_t>(oi)];
  std::vector<int> y(col.num.size());
  for (size_t i = 0; i < col.num.size(); ++i) {
    if (col.missing[i])
      throw DataError(kModule, "missing outcome value in row " + std::to_string(i));
    y[i] = col.num[i] >= 0.5 ? 1 : 0;
  }
  return y;
}

Dataset Dataset::select_rows(const std::vector<int>& rows) const {
  Dataset out;
  out.schema = schema;
  out.provenance = provenance;
  out.preprocessed = preprocessed;
  out.columns.resize(columns.size());
  for (size_t c = 0; c < columns.size(); ++c) {
    const Column& src = columns[c];
    Column& dst = out.columns[c];
    dst.missing.reserve(rows.size());
    bool code = !src.cat.empty() || (src.num.empty() && is_code_kind(schema.columns[c].kind));
    if (code) dst.cat.reserve(rows.size());
    else dst.num.reserve(rows.size());
    for (int r : rows) {
      size_t ri = static_cast<size_t>(r);
      dst.missing.push_back(src.missing[ri]);
      if (code) dst.cat.push_back(src.cat[ri]);
      else dst.num.push_back(src.num[ri]);
    }
  }
  return out;
}

Dataset load_csv(const std::string& path, const FeatureSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open file: " + path);

  std::string header_line;
  if (!std::getline(in, header_line))
    throw DataError(kModule, "empty file: " + path);
  std::vector<std::string> header = parse_csv_row(header_line);
  for (auto& h : header) h = trim(h);

  // order-insensitive header match; both missing and unknown names are errors
  std::vector<int> field_of_column(schema.columns.size(), -1);
  std::vector<std::string> missing_cols;
  std::vector<std::string> unknown_cols;
  for (size_t c = 0; c < schema.columns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), schema.columns[c].name);
    if (it == header.end()) missing_cols.push_back(schema.columns[c].name);
    else field_of_column[c] = static_cast<int>(it - header.begin());
  }
  for (const auto& h : header) {
    if (schema.column_index(h) < 0) unknown_cols.push_back(h);
  }
  if (!missing_cols.empty() || !unknown_cols.empty()) {
    std::string msg = "header/schema mismatch in " + path;
    if (!missing_cols.empty()) {
      msg += "; missing columns:";
      for (const auto& n : missing_cols) msg += " " + n;
    }
    if (!unknown_cols.empty()) {
      msg += "; unknown columns:";
      for (const auto& n : unknown_cols) msg += " " + n;
    }
    throw DataError(kModule, msg);
  }

  Dataset data;
  data.schema = schema;
  data.provenance = "ingested";
  data.columns.resize(schema.columns.size());

  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == std::ifstream::traits_type::eof()) break;
    std::vector<std::string> fields = parse_csv_row(line);
    if (fields.size() != header.size())
      throw DataError(kModule, "row " + std::to_string(row + 1) + " has " +
                                   std::to_string(fields.size()) + " fields, expected " +
                                   std::to_string(header.size()));
    for (size_t c = 0; c < schema.columns.size(); ++c) {
      const ColumnSpec& spec = schema.columns[c];
      const std::string cell = trim(fields[static_cast<size_t>(field_of_column[c])]);
      Column& col = data.columns[c];
      if (is_code_kind(spec.kind)) {
        col.cat.push_back(cell);
        col.missing.push_back(cell.empty() ? 1 : 0);
      } else {
        double v;
        if (parse_double(cell, v)) {
          if (spec.kind == ColumnKind::kBinaryOutcome && v != 0.0 && v != 1.0)
            throw DataError(kModule, "outcome column " + spec.name + " has non-binary value " +
                                         cell + " in row " + std::to_string(row + 1));
          col.num.push_back(v);
          col.missing.push_back(0);
        } else {
          col.num.push_back(kNaN);
          col.missing.push_back(1);
        }
      }
    }
    ++row;
  }
  if (row == 0) throw DataError(kModule, "no data rows in " + path);
  return data;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(kModule, "cannot write file: " + path);
  for (size_t c = 0; c < data.schema.columns.size(); ++c) {
    if (c) out << ",";
    out << csv_escape(data.schema.columns[c].name);
  }
  out << "\n";
  int m = data.rows();
  for (int r = 0; r < m; ++r) {
    for (size_t c = 0; c < data.columns.size(); ++c) {
      if (c) out << ",";
      const Column& col = data.columns[c];
      if (col.missing[static_cast<size_t>(r)]) continue;  // empty cell = missing
      if (!col.cat.empty()) out << csv_escape(col.cat[static_cast<size_t>(r)]);
      else out << format_exact(col.num[static_cast<size_t>(r)]);
    }
    out << "\n";
  }
}

void Preprocessor::fit(const Dataset& train) {
  train.schema.validate();
  if (train.rows() == 0) throw DataError(kModule, "cannot fit preprocessor on empty dataset");
  fit_schema_ = train.schema;
  means_.assign(train.schema.columns.size(), kNaN);
  for (size_t c = 0; c < train.schema.columns.size(); ++c) {
    const ColumnSpec& spec = train.schema.columns[c];
    if (spec.kind != ColumnKind::kContinuous) continue;
    const auto [lo, hi] = *spec.plausible_range;
    const Column& col = train.columns[c];
    double sum = 0.0;
    int n = 0;
    for (size_t r = 0; r < col.num.size(); ++r) {
      if (col.missing[r]) continue;
      double v = col.num[r];
      if (v < lo || v > hi) continue;  // treated as missing at transform time
      sum += (v - lo) / (hi - lo);
      ++n;
    }
    if (n == 0)
      throw DataError(kModule, "continuous column has no observed in-range value, cannot impute: " +
                                   spec.name);
    means_[c] = sum / n;
  }
  fitted_ = true;
}

std::pair<Dataset, PreprocessReport> Preprocessor::transform(const Dataset& data) const {
  if (!fitted_) throw DataError(kModule, "preprocessor not fitted");
  if (data.schema.columns.size() != fit_schema_.columns.size())
    throw DataError(kModule, "dataset schema does not match fitted schema");
  for (size_t c = 0; c < fit_schema_.columns.size(); ++c) {
    if (data.schema.columns[c].name != fit_schema_.columns[c].name ||
        data.schema.columns[c].kind != fit_schema_.columns[c].kind)
      throw DataError(kModule, "dataset schema does not match fitted schema at column " +
                                   data.schema.columns[c].name);
  }

  Dataset out;
  out.schema = fit_schema_;
  out.provenance = data.provenance;
  out.preprocessed = true;
  out.columns.resize(data.columns.size());
  PreprocessReport report;

  int m = data.rows();
  for (size_t c = 0; c < fit_schema_.columns.size(); ++c) {
    const ColumnSpec& spec = fit_schema_.columns[c];
    ColumnSpec& out_spec = out.schema.columns[c];
    const Column& col = data.columns[c];
    Column& out_col = out.columns[c];
    ColumnReport& cr = report.columns[spec.name];

    switch (spec.kind) {
      case ColumnKind::kContinuous: {
        const auto [lo, hi] = *spec.plausible_range;
        const bool already_unit = (lo == 0.0 && hi == 1.0);
        out_col.num.resize(static_cast<size_t>(m));
        out_col.missing.assign(static_cast<size_t>(m), 0);
        for (int r = 0; r < m; ++r) {
          size_t ri = static_cast<size_t>(r);
          bool miss = col.missing[ri] != 0;
          double v = miss ? kNaN : col.num[ri];
          if (!miss && (v < lo || v > hi)) {
            miss = true;
            ++cr.out_of_range_nulled;
          }
          if (miss) {
            out_col.num[ri] = means_[c];
            ++cr.imputed;
          } else {
            out_col.num[ri] = (v - lo) / (hi - lo);
          }
        }
        if (cr.imputed > 0) cr.imputation_mean = means_[c];
        // working range becomes [0,1]; keep the original endpoints for display
        if (!already_unit) {
          out_spec.source_range = spec.source_range ? spec.source_range
                                                    : std::optional<std::pair<double, double>>({lo, hi});
          out_spec.plausible_range = {0.0, 1.0};
        }
        break;
      }
      case ColumnKind::kCategorical:
      case ColumnKind::kSensitive: {
        std::set<std::string> valid(spec.categories.begin(), spec.categories.end());
        out_col.cat.resize(static_cast<size_t>(m));
        out_col.missing.assign(static_cast<size_t>(m), 0);
        bool any_remapped = false;
        for (int r = 0; r < m; ++r) {
          size_t ri = static_cast<size_t>(r);
          const std::string& code = col.cat[ri];
          if (col.missing[ri] || valid.find(code) == valid.end()) {
            out_col.cat[ri] = kMissingCategory;
            ++cr.remapped;
            any_remapped = true;
          } else {
            out_col.cat[ri] = code;
          }
        }
        if (any_remapped &&
            std::find(out_spec.categories.begin(), out_spec.categories.end(), kMissingCategory) ==
                out_spec.categories.end()) {
          out_spec.categories.push_back(kMissingCategory);
        }
        break;
      }
      case ColumnKind::kBinaryOutcome:
      case ColumnKind::kAudit: {
        out_col.num = col.num;
        out_col.missing = col.missing;
        for (int r = 0; r < m; ++r) {
          if (col.missing[static_cast<size_t>(r)])
            throw DataError(kModule, "missing value in column " + spec.name + " (row " +
                                         std::to_string(r) + ") cannot be imputed");
        }
        break;
      }
    }
  }
  return {std::move(out), std::move(report)};
}

std::pair<Dataset, PreprocessReport> preprocess(const Dataset& data) {
  Preprocessor pp;
  pp.fit(data);
  return pp.transform(data);
}

json PreprocessReport::to_json() const {
  json cols = json::object();
  for (const auto& [name, cr] : columns) {
    json jc;
    jc["out_of_range_nulled"] = cr.out_of_range_nulled;
    jc["imputed"] = cr.imputed;
    jc["remapped"] = cr.remapped;
    jc["imputation_mean"] = cr.imputation_mean ? json(canon6(*cr.imputation_mean)) : json(nullptr);
    cols[name] = jc;
  }
  return json{{"columns", cols}};
}

int aki_label(double baseline_cr, double max_cr_48h) {
  if (!(baseline_cr > 0.0) || !(max_cr_48h > 0.0))
    throw DataError(kModule, "creatinine values must be positive");
  if (max_cr_48h - baseline_cr >= 0.3) return 1;
  if (max_cr_48h >= 1.5 * baseline_cr) return 1;
  return 0;
}

SplitResult split(const Dataset& data, double test_fraction, uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError(kModule, "test_fraction must lie in (0,1)");
  int m = data.rows();
  if (m < 2) throw DataError(kModule, "need at least 2 rows to split");
  long long want = std::llround(static_cast<double>(m) * test_fraction);
  int n_test = static_cast<int>(std::clamp<long long>(want, 1, m - 1));
  Rng rng(derive_seed(seed, "split"));
  std::vector<int> perm = rng.permutation(m);
  std::vector<int> test_rows(perm.begin(), perm.begin() + n_test);
  std::vector<int> train_rows(perm.begin() + n_test, perm.end());
  // keep original row order within each side
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {data.select_rows(train_rows), data.select_rows(test_rows)};
}

Dataset restrict_to_contrast(const Dataset& data, const SensitiveContrast& contrast) {
  int ci = data.schema.column_index(contrast.column);
  if (ci < 0) throw ConfigError(kModule, "contrast names unknown column: " + contrast.column);
  if (data.schema.columns[static_cast<size_t>(ci)].kind != ColumnKind::kSensitive)
    throw ConfigError(kModule, "contrast column is not sensitive: " + contrast.column);
  const Column& col = data.columns[static_cast<size_t>(ci)];
  std::vector<int> keep;
  for (size_t r = 0; r < col.cat.size(); ++r) {
    if (col.missing[r]) continue;
    if (col.cat[r] == contrast.positive || col.cat[r] == contrast.negative)
      keep.push_back(static_cast<int>(r));
  }
  if (keep.empty())
    throw DataError(kModule, "no rows match contrast codes on column " + contrast.column);
  return data.select_rows(keep);
}

std::vector<int> contrast_indicator(const Dataset& data, const SensitiveContrast& contrast) {
  const Column& col = data.column(contrast.column);
  std::vector<int> z(col.cat.size());
  for (size_t r = 0; r < col.cat.size(); ++r) {
    if (col.cat[r] == contrast.positive) z[r] = 1;
    else if (col.cat[r] == contrast.negative) z[r] = 0;
    else
      throw DataError(kModule, "row " + std::to_string(r) + " has sensitive code '" + col.cat[r] +
                                   "' outside the contrast {" + contrast.positive + "," +
                                   contrast.negative + "}");
  }
  return z;
}

Dataset swap_contrast(const Dataset& data, const SensitiveContrast& contrast) {
  Dataset out = data;
  Column& col = out.column(contrast.column);
  for (auto& code : col.cat) {
    if (code == contrast.positive) code = contrast.negative;
    else if (code == contrast.negative) code = contrast.positive;
  }
  return out;
}

}  // namespace fairaudit
