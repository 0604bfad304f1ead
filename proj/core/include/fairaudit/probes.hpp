#pragma once

#include <map>
#include <string>
#include <vector>

#include "fairaudit/metrics.hpp"

namespace fairaudit {

enum class ProbeTag { kW, kSwap, kWo, kPsm, kSs, kSep, kStrat };

std::string to_string(ProbeTag tag);

struct ProbeCondition {
  ProbeTag tag = ProbeTag::kW;
  std::string stratum;  // STRAT only, e.g. "ASA2_NE"

  // "W", "SWAP", "WO", "PSM", "SS", "SEP", "STRAT:ASA2_NE"
  static ProbeCondition parse(const std::string& text);
  std::string label() const;
};

struct ProbeResult {
  ProbeCondition condition;
  std::vector<MetricEstimate> estimates;
  std::vector<GroupDifference> differences;
  std::map<std::string, int> group_sizes;  // evaluated test rows per group
  int n_evaluated = 0;
  json notes = json::object();

  json to_json() const;
};

struct ProbeOptions {
  std::vector<Metric> metrics = all_metrics();
  int replicates = 150;
  uint64_t seed = 0;
  double caliper = 0.05;
  std::vector<std::string> propensity_exclusions;
  std::string asa_column;        // STRAT only
  std::string emergency_column;  // STRAT only
};

// Fixed-test-set bootstrap: every replicate retrains on a resample of the
// training rows and is evaluated on the (condition-specific view of the)
// test set. Replicate seeds depend only on (seed, r), so conditions sharing
// a model kind see identical fits.
ProbeResult run_probe(const ProbeCondition& condition, const LearnerSpec& spec,
                      const Dataset& train, const Dataset& test,
                      const SensitiveContrast& contrast, const ProbeOptions& opts);

// Runs several conditions over shared per-replicate fits.
std::vector<ProbeResult> run_probes(const std::vector<ProbeCondition>& conditions,
                                    const LearnerSpec& spec, const Dataset& train,
                                    const Dataset& test, const SensitiveContrast& contrast,
                                    const ProbeOptions& opts);

// Merged physical-status strata: I -> ASA1, II/III -> ASA2, IV/V -> ASA3,
// suffixed _E or _NE by the emergency flag. Codes outside I..V are rejected.
extern const std::vector<std::string> kAsaGroups;

std::string asa_group(const std::string& asa_code, bool emergency);

struct AsaPartition {
  std::map<std::string, std::vector<int>> strata;  // group label -> row ids
};

AsaPartition stratify_asa(const Dataset& data, const std::string& asa_column,
                          const std::string& emergency_column);

// Equalizes group sizes by downsampling the majority group without
// replacement (all minority rows kept). Returns row ids into `z`.
std::vector<int> downsample_to_balance(const std::vector<int>& rows, const std::vector<int>& z,
                                       uint64_t seed);

struct BiasPanelRow {
  std::string condition;
  double delta_mean = 0.0;
  double delta_ci_low = 0.0;
  double delta_ci_high = 0.0;
  int n_defined = 0;

  json to_json() const;
};

// Predicted-positive-rate differences (positive minus negative group) per
// condition. All results must share one contrast.
std::vector<BiasPanelRow> bias_panel(const std::vector<ProbeResult>& results);

}  // namespace fairaudit
