#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairaudit/probes.hpp"
#include "fairaudit/synthgen.hpp"
#include "fairaudit/utility_card.hpp"

namespace fairaudit {

struct UtilityConfig {
  bool enabled = false;
  UtilityWeights weights;
  std::vector<std::string> basic_columns;
  std::string dictionary_path;  // exclusive with dictionary_inline
  json dictionary_inline = json();
  int min_split = 50;
  int min_leaf = 50;
  int alpha_rank = 5;
  // Non-logistic families produce scores the utility formula treats as
  // calibrated probabilities; requiring the flag keeps that explicit.
  bool acknowledge_uncalibrated = false;

  json to_json() const;
  static UtilityConfig from_json(const json& j);
};

struct AuditConfig {
  uint64_t seed = 0;
  std::string output_dir;

  // exactly one of: csv+schema paths, generator config (path or inline)
  std::string csv_path;
  std::string schema_path;
  std::string generator_path;
  std::optional<GeneratorConfig> generator_inline;
  std::vector<BiasInjection> injections;  // generator mode only

  SensitiveContrast contrast;
  LearnerSpec learner;
  std::vector<ProbeCondition> probes;
  std::vector<Metric> metrics = all_metrics();
  double caliper = 0.05;
  int replicates = 150;
  double test_fraction = 0.3;
  std::vector<std::string> propensity_exclusions;
  std::string asa_column;
  std::string emergency_column;
  bool oob_baseline = false;
  UtilityConfig utility;

  json raw = json::object();  // parsed document, echoed into reports

  bool generator_mode() const { return !generator_path.empty() || generator_inline.has_value(); }

  // Field-level checks; no file system access.
  void validate() const;
  // Referenced files exist and parse; contrast names a sensitive column.
  void validate_references() const;

  static AuditConfig from_json(const json& j);
  static AuditConfig load(const std::string& path);
};

// The full report is one canonical JSON document; renderers below are pure
// functions of it, so regeneration from report.json is exact.
struct AuditReport {
  json document;

  static AuditReport from_json(const json& j) { return AuditReport{j}; }
};

// ingest -> preprocess -> probes -> propensity/balance -> utility card.
// Writes outputs via emit_outputs when config.output_dir is non-empty.
// Every value except the "timing" block is deterministic in (config, seed).
AuditReport run_audit(const AuditConfig& config);

// Utility card alone (same ingest/split/seeds as run_audit). Writes
// card.json, guide.txt and tree.dot when output_dir is non-empty.
AuditReport run_card(const AuditConfig& config);

void emit_outputs(const AuditReport& report, const std::string& dir);
void emit_card_outputs(const AuditReport& report, const std::string& dir);

// Renderers (exposed for tests).
std::string render_markdown(const json& document);
std::string render_metrics_csv(const json& document);
std::string render_bias_panel_csv(const json& document);
std::string render_balance_csv(const json& document);

}  // namespace fairaudit
