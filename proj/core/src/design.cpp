#include "fairaudit/design.hpp"

#include <algorithm>
#include <set>

#include "fairaudit/errors.hpp"

namespace fairaudit {

namespace {
constexpr const char* kModule = "design";
}

json FeatureInfo::to_json() const {
  json j;
  j["name"] = name;
  j["column"] = column;
  j["kind"] = to_string(kind);
  j["code"] = code;
  if (source_range) j["source_range"] = {source_range->first, source_range->second};
  else j["source_range"] = nullptr;
  return j;
}

FeatureInfo FeatureInfo::from_json(const json& j) {
  FeatureInfo f;
  f.name = j.at("name").get<std::string>();
  f.column = j.at("column").get<std::string>();
  f.kind = column_kind_from_string(j.at("kind").get<std::string>());
  f.code = j.at("code").get<std::string>();
  if (j.contains("source_range") && !j["source_range"].is_null())
    f.source_range = {j["source_range"][0].get<double>(), j["source_range"][1].get<double>()};
  return f;
}

json DesignOptions::to_json() const {
  return json{{"include_sensitive", include_sensitive},
              {"exclude_columns", exclude_columns},
              {"restrict_columns", restrict_columns}};
}

DesignOptions DesignOptions::from_json(const json& j) {
  DesignOptions o;
  o.include_sensitive = j.value("include_sensitive", true);
  o.exclude_columns = j.value("exclude_columns", std::vector<std::string>{});
  o.restrict_columns = j.value("restrict_columns", std::vector<std::string>{});
  return o;
}

std::vector<std::string> DesignMatrix::feature_names() const {
  std::vector<std::string> names;
  names.reserve(features.size());
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

DesignMatrix build_design(const Dataset& data, const DesignOptions& opts) {
  const FeatureSchema& schema = data.schema;
  std::set<std::string> excluded(opts.exclude_columns.begin(), opts.exclude_columns.end());
  std::set<std::string> restricted(opts.restrict_columns.begin(), opts.restrict_columns.end());
  for (const auto& name : excluded) {
    if (schema.column_index(name) < 0)
      throw ConfigError(kModule, "excluded column not in schema: " + name);
  }
  for (const auto& name : restricted) {
    if (schema.column_index(name) < 0)
      throw ConfigError(kModule, "restricted column not in schema: " + name);
  }

  DesignMatrix dm;
  int m = data.rows();
  dm.n = m;

  // feature layout first
  std::vector<size_t> col_of_feature;
  std::vector<int> code_of_feature;  // index into categories, -1 for continuous
  for (size_t c = 0; c < schema.columns.size(); ++c) {
    const ColumnSpec& spec = schema.columns[c];
    if (spec.kind == ColumnKind::kBinaryOutcome || spec.kind == ColumnKind::kAudit) continue;
    if (spec.kind == ColumnKind::kSensitive && !opts.include_sensitive) continue;
    if (excluded.count(spec.name)) continue;
    if (!restricted.empty() && !restricted.count(spec.name)) continue;
    if (spec.kind == ColumnKind::kContinuous) {
      FeatureInfo f;
      f.name = spec.name;
      f.column = spec.name;
      f.kind = spec.kind;
      f.source_range = spec.source_range ? spec.source_range : spec.plausible_range;
      dm.features.push_back(std::move(f));
      col_of_feature.push_back(c);
      code_of_feature.push_back(-1);
    } else {
      std::vector<std::string> cats = spec.categories;
      for (size_t k = 0; k < cats.size(); ++k) {
        FeatureInfo f;
        f.name = spec.name + "=" + cats[k];
        f.column = spec.name;
        f.kind = spec.kind;
        f.code = cats[k];
        dm.features.push_back(std::move(f));
        col_of_feature.push_back(c);
        code_of_feature.push_back(static_cast<int>(k));
      }
    }
  }
  dm.p = static_cast<int>(dm.features.size());
  if (dm.p == 0) throw ConfigError(kModule, "design matrix has no features");

  dm.values.assign(static_cast<size_t>(m) * dm.p, 0.0);
  for (int j = 0; j < dm.p; ++j) {
    size_t c = col_of_feature[static_cast<size_t>(j)];
    const ColumnSpec& spec = schema.columns[c];
    const Column& col = data.columns[c];
    if (code_of_feature[static_cast<size_t>(j)] < 0) {
      for (int r = 0; r < m; ++r) {
        if (col.missing[static_cast<size_t>(r)])
          throw DataError(kModule, "missing cell in column " + spec.name +
                                       "; preprocess the dataset before building a design");
        dm.values[static_cast<size_t>(r) * dm.p + j] = col.num[static_cast<size_t>(r)];
      }
    } else {
      const std::string& code =
          spec.categories[static_cast<size_t>(code_of_feature[static_cast<size_t>(j)])];
      for (int r = 0; r < m; ++r) {
        if (col.missing[static_cast<size_t>(r)])
          throw DataError(kModule, "missing cell in column " + spec.name +
                                       "; preprocess the dataset before building a design");
        if (col.cat[static_cast<size_t>(r)] == code)
          dm.values[static_cast<size_t>(r) * dm.p + j] = 1.0;
      }
    }
  }
  return dm;
}

}  // namespace fairaudit
