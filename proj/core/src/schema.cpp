#include "fairaudit/schema.hpp"

#include <set>

#include "fairaudit/errors.hpp"

namespace fairaudit {

namespace {
constexpr const char* kModule = "dataset";
}

std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kContinuous: return "continuous";
    case ColumnKind::kCategorical: return "categorical";
    case ColumnKind::kBinaryOutcome: return "binary_outcome";
    case ColumnKind::kSensitive: return "sensitive";
    case ColumnKind::kAudit: return "audit";
  }
  return "unknown";
}

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::kContinuous;
  if (s == "categorical") return ColumnKind::kCategorical;
  if (s == "binary_outcome" || s == "binary-outcome") return ColumnKind::kBinaryOutcome;
  if (s == "sensitive") return ColumnKind::kSensitive;
  if (s == "audit") return ColumnKind::kAudit;
  throw ConfigError(kModule, "unknown column kind: " + s);
}

void FeatureSchema::validate() const {
  if (columns.empty()) throw ConfigError(kModule, "schema has no columns");
  std::set<std::string> names;
  int outcomes = 0;
  int sensitives = 0;
  for (const auto& c : columns) {
    if (c.name.empty()) throw ConfigError(kModule, "schema column with empty name");
    if (!names.insert(c.name).second)
      throw ConfigError(kModule, "duplicate column name: " + c.name);
    switch (c.kind) {
      case ColumnKind::kContinuous:
        if (!c.plausible_range)
          throw ConfigError(kModule, "continuous column missing plausible_range: " + c.name);
        if (!(c.plausible_range->first < c.plausible_range->second))
          throw ConfigError(kModule, "plausible_range must satisfy min < max: " + c.name);
        break;
      case ColumnKind::kCategorical:
      case ColumnKind::kSensitive:
        if (c.plausible_range)
          throw ConfigError(kModule, "plausible_range on non-continuous column: " + c.name);
        if (c.categories.empty())
          throw ConfigError(kModule, "categorical column missing categories: " + c.name);
        break;
      case ColumnKind::kBinaryOutcome:
        ++outcomes;
        if (c.plausible_range)
          throw ConfigError(kModule, "plausible_range on outcome column: " + c.name);
        break;
      case ColumnKind::kAudit:
        break;
    }
    if (c.kind == ColumnKind::kSensitive) ++sensitives;
  }
  if (outcomes != 1)
    throw ConfigError(kModule, "schema must declare exactly one binary_outcome column, found " +
                                   std::to_string(outcomes));
  if (sensitives < 1)
    throw ConfigError(kModule, "schema must declare at least one sensitive column");
}

int FeatureSchema::column_index(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const ColumnSpec& FeatureSchema::column(const std::string& name) const {
  int idx = column_index(name);
  if (idx < 0) throw ConfigError(kModule, "no such column: " + name);
  return columns[static_cast<size_t>(idx)];
}

int FeatureSchema::outcome_index() const {
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].kind == ColumnKind::kBinaryOutcome) return static_cast<int>(i);
  }
  throw ConfigError(kModule, "schema has no binary_outcome column");
}

json FeatureSchema::to_json() const {
  json cols = json::array();
  for (const auto& c : columns) {
    json jc;
    jc["name"] = c.name;
    jc["kind"] = to_string(c.kind);
    if (c.plausible_range)
      jc["plausible_range"] = {c.plausible_range->first, c.plausible_range->second};
    if (!c.categories.empty()) jc["categories"] = c.categories;
    if (c.source_range) jc["source_range"] = {c.source_range->first, c.source_range->second};
    cols.push_back(jc);
  }
  return json{{"columns", cols}};
}

FeatureSchema FeatureSchema::from_json(const json& j) {
  FeatureSchema schema;
  if (!j.contains("columns") || !j["columns"].is_array())
    throw ConfigError(kModule, "schema JSON must contain a \"columns\" array");
  for (const auto& jc : j["columns"]) {
    ColumnSpec c;
    c.name = jc.at("name").get<std::string>();
    c.kind = column_kind_from_string(jc.at("kind").get<std::string>());
    if (jc.contains("plausible_range")) {
      const auto& r = jc["plausible_range"];
      c.plausible_range = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
    if (jc.contains("categories")) c.categories = jc["categories"].get<std::vector<std::string>>();
    if (jc.contains("source_range")) {
      const auto& r = jc["source_range"];
      c.source_range = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
    schema.columns.push_back(std::move(c));
  }
  schema.validate();
  return schema;
}

json SensitiveContrast::to_json() const {
  return json{{"column", column}, {"positive", positive}, {"negative", negative}};
}

SensitiveContrast SensitiveContrast::from_json(const json& j) {
  SensitiveContrast c;
  c.column = j.at("column").get<std::string>();
  c.positive = j.at("positive").get<std::string>();
  c.negative = j.at("negative").get<std::string>();
  if (c.positive == c.negative)
    throw ConfigError("dataset", "contrast positive and negative codes must differ");
  return c;
}

}  // namespace fairaudit
