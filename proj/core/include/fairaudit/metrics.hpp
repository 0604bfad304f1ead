#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fairaudit/dataset.hpp"
#include "fairaudit/learners.hpp"

namespace fairaudit {

inline constexpr const char* kAllGroups = "ALL";

enum class Metric { kFnr, kFpr, kFdr, kFor, kPpr };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);
std::vector<Metric> all_metrics();

struct ConfusionCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  long long tn = 0;

  long long total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(const std::vector<int>& y, const std::vector<int>& y_hat);

// UNDEFINED (zero denominator) comes back as an empty optional.
std::optional<double> rate(Metric metric, const ConfusionCounts& c);

struct MetricEstimate {
  Metric metric = Metric::kFnr;
  std::string group;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n_replicates = 0;
  int n_defined = 0;

  json to_json() const;
};

struct GroupDifference {
  Metric metric = Metric::kFnr;
  std::string group_a;
  std::string group_b;
  double delta_mean = 0.0;
  double delta_ci_low = 0.0;
  double delta_ci_high = 0.0;
  int n_replicates = 0;
  int n_defined = 0;

  json to_json() const;
};

// Type-7 (linear interpolation) quantile of the values; q in [0,1].
double percentile(std::vector<double> values, double q);

struct ReplicateSummary {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int n_defined = 0;
};

// Mean and [2.5%, 97.5%] percentile interval over the defined replicate
// values; undefined replicates are skipped and counted out of n_defined.
ReplicateSummary summarize_replicates(const std::vector<std::optional<double>>& values);

// m draws with replacement from [0, m); row order is the draw order.
std::vector<int> bootstrap_resample(int m, uint64_t seed);
std::vector<int> oob_rows(int m, const std::vector<int>& resample);

// One bootstrap replicate's predictor: decisions for the requested row ids.
using ReplicatePredictor = std::function<std::vector<int>(const std::vector<int>& eval_rows)>;

// Called once per replicate with the resampled training rows. Lets callers
// swap the learner for a fixed rule when an external oracle drives the test.
using TrainFn = std::function<ReplicatePredictor(int replicate, const std::vector<int>& train_rows)>;

struct BootstrapResult {
  std::vector<MetricEstimate> estimates;
  std::vector<GroupDifference> differences;
  double mean_oob_fraction = 0.0;
  int n_replicates = 0;

  const MetricEstimate& estimate(Metric m, const std::string& group) const;
  const GroupDifference& difference(Metric m) const;
};

// Out-of-bag bootstrap: per replicate, resample rows with replacement, let
// `trainer` build a predictor from the resample, evaluate it on the held-out
// rows. Replicate r's resample depends only on (seed, r), never on R.
BootstrapResult bootstrap_oob(const TrainFn& trainer, const Dataset& data,
                              const SensitiveContrast& contrast,
                              const std::vector<Metric>& metrics, int R, uint64_t seed);

// The standard estimator: trains `spec` on each resample.
BootstrapResult bootstrap_estimate(const LearnerSpec& spec, const Dataset& data,
                                   const SensitiveContrast& contrast,
                                   const std::vector<Metric>& metrics, int R = 150,
                                   uint64_t seed = 0);

// Shared summarization: per-replicate per-group rates -> estimates plus the
// positive-minus-negative group differences. rates[r][g] with g indexing
// groups; group_names supplies the labels in the same order. diff_a/diff_b
// name the two groups whose replicate-wise difference is summarized.
struct ReplicateRates {
  // [replicate][group] -> rate or UNDEFINED
  std::vector<std::vector<std::optional<double>>> values;
};

void summarize_groups(Metric metric, const std::vector<std::string>& group_names,
                      const ReplicateRates& rates, const std::string& diff_a,
                      const std::string& diff_b, std::vector<MetricEstimate>* estimates,
                      std::vector<GroupDifference>* differences);

}  // namespace fairaudit
