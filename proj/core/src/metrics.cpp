#include "fairaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fairaudit/errors.hpp"
#include "fairaudit/jsonio.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit {

namespace {
constexpr const char* kModule = "metrics";
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::kFnr: return "FNR";
    case Metric::kFpr: return "FPR";
    case Metric::kFdr: return "FDR";
    case Metric::kFor: return "FOR";
    case Metric::kPpr: return "PPR";
  }
  throw ConfigError(kModule, "unknown metric");
}

Metric metric_from_string(const std::string& s) {
  if (s == "FNR") return Metric::kFnr;
  if (s == "FPR") return Metric::kFpr;
  if (s == "FDR") return Metric::kFdr;
  if (s == "FOR") return Metric::kFor;
  if (s == "PPR") return Metric::kPpr;
  throw ConfigError(kModule, "unknown metric: " + s);
}

std::vector<Metric> all_metrics() {
  return {Metric::kFnr, Metric::kFpr, Metric::kFdr, Metric::kFor, Metric::kPpr};
}

ConfusionCounts confusion(const std::vector<int>& y, const std::vector<int>& y_hat) {
  if (y.size() != y_hat.size())
    throw DataError(kModule, "confusion: length mismatch (" + std::to_string(y.size()) + " vs " +
                                 std::to_string(y_hat.size()) + ")");
  ConfusionCounts c;
  for (size_t i = 0; i < y.size(); ++i) {
    if ((y[i] != 0 && y[i] != 1) || (y_hat[i] != 0 && y_hat[i] != 1))
      throw DataError(kModule, "confusion: values must be 0 or 1");
    if (y[i] == 1) {
      if (y_hat[i] == 1) ++c.tp;
      else ++c.fn;
    } else {
      if (y_hat[i] == 1) ++c.fp;
      else ++c.tn;
    }
  }
  return c;
}

std::optional<double> rate(Metric metric, const ConfusionCounts& c) {
  long long num = 0, den = 0;
  switch (metric) {
    case Metric::kFnr: num = c.fn; den = c.fn + c.tp; break;
    case Metric::kFpr: num = c.fp; den = c.fp + c.tn; break;
    case Metric::kFdr: num = c.fp; den = c.fp + c.tp; break;
    case Metric::kFor: num = c.fn; den = c.fn + c.tn; break;
    case Metric::kPpr: num = c.tp + c.fp; den = c.total(); break;
  }
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

json MetricEstimate::to_json() const {
  json j;
  j["metric"] = to_string(metric);
  j["group"] = group;
  j["mean"] = n_defined > 0 ? json(mean) : json(nullptr);
  j["ci_low"] = n_defined > 0 ? json(ci_low) : json(nullptr);
  j["ci_high"] = n_defined > 0 ? json(ci_high) : json(nullptr);
  j["n_replicates"] = n_replicates;
  j["n_defined"] = n_defined;
  return j;
}

json GroupDifference::to_json() const {
  json j;
  j["metric"] = to_string(metric);
  j["group_a"] = group_a;
  j["group_b"] = group_b;
  j["delta_mean"] = n_defined > 0 ? json(delta_mean) : json(nullptr);
  j["delta_ci_low"] = n_defined > 0 ? json(delta_ci_low) : json(nullptr);
  j["delta_ci_high"] = n_defined > 0 ? json(delta_ci_high) : json(nullptr);
  j["n_replicates"] = n_replicates;
  j["n_defined"] = n_defined;
  return j;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError(kModule, "percentile of empty set");
  if (q < 0.0 || q > 1.0) throw ConfigError(kModule, "percentile q must lie in [0,1]");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double h = q * static_cast<double>(values.size() - 1);
  size_t lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

ReplicateSummary summarize_replicates(const std::vector<std::optional<double>>& values) {
  std::vector<double> defined;
  defined.reserve(values.size());
  for (const auto& v : values)
    if (v) defined.push_back(*v);
  ReplicateSummary s;
  s.n_defined = static_cast<int>(defined.size());
  if (defined.empty()) {
    s.mean = s.lo = s.hi = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double v : defined) sum += v;
  s.mean = sum / static_cast<double>(defined.size());
  s.lo = percentile(defined, 0.025);
  s.hi = percentile(defined, 0.975);
  return s;
}

std::vector<int> bootstrap_resample(int m, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> rows(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i)
    rows[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(m)));
  return rows;
}

std::vector<int> oob_rows(int m, const std::vector<int>& resample) {
  std::vector<uint8_t> in_bag(static_cast<size_t>(m), 0);
  for (int r : resample) in_bag[static_cast<size_t>(r)] = 1;
  std::vector<int> oob;
  for (int i = 0; i < m; ++i)
    if (!in_bag[static_cast<size_t>(i)]) oob.push_back(i);
  return oob;
}

void summarize_groups(Metric metric, const std::vector<std::string>& group_names,
                      const ReplicateRates& rates, const std::string& diff_a,
                      const std::string& diff_b, std::vector<MetricEstimate>* estimates,
                      std::vector<GroupDifference>* differences) {
  int R = static_cast<int>(rates.values.size());
  int ia = -1, ib = -1;
  for (size_t g = 0; g < group_names.size(); ++g) {
    if (group_names[g] == diff_a) ia = static_cast<int>(g);
    if (group_names[g] == diff_b) ib = static_cast<int>(g);
  }

  for (size_t g = 0; g < group_names.size(); ++g) {
    std::vector<std::optional<double>> vals(static_cast<size_t>(R));
    for (int r = 0; r < R; ++r) vals[static_cast<size_t>(r)] = rates.values[static_cast<size_t>(r)][g];
    ReplicateSummary s = summarize_replicates(vals);
    MetricEstimate e;
    e.metric = metric;
    e.group = group_names[g];
    e.mean = s.mean;
    e.ci_low = s.lo;
    e.ci_high = s.hi;
    e.n_replicates = R;
    e.n_defined = s.n_defined;
    estimates->push_back(e);
  }

  if (ia >= 0 && ib >= 0 && differences) {
    std::vector<std::optional<double>> deltas(static_cast<size_t>(R));
    for (int r = 0; r < R; ++r) {
      const auto& row = rates.values[static_cast<size_t>(r)];
      const auto& va = row[static_cast<size_t>(ia)];
      const auto& vb = row[static_cast<size_t>(ib)];
      if (va && vb) deltas[static_cast<size_t>(r)] = *va - *vb;
    }
    ReplicateSummary s = summarize_replicates(deltas);
    GroupDifference d;
    d.metric = metric;
    d.group_a = diff_a;
    d.group_b = diff_b;
    d.delta_mean = s.mean;
    d.delta_ci_low = s.lo;
    d.delta_ci_high = s.hi;
    d.n_replicates = R;
    d.n_defined = s.n_defined;
    differences->push_back(d);
  }
}

const MetricEstimate& BootstrapResult::estimate(Metric m, const std::string& group) const {
  for (const auto& e : estimates)
    if (e.metric == m && e.group == group) return e;
  throw DataError(kModule, "no estimate for " + to_string(m) + "/" + group);
}

const GroupDifference& BootstrapResult::difference(Metric m) const {
  for (const auto& d : differences)
    if (d.metric == m) return d;
  throw DataError(kModule, "no group difference for " + to_string(m));
}

BootstrapResult bootstrap_oob(const TrainFn& trainer, const Dataset& data,
                              const SensitiveContrast& contrast,
                              const std::vector<Metric>& metrics, int R, uint64_t seed) {
  if (R < 2) throw ConfigError(kModule, "bootstrap needs R >= 2");
  int m = data.rows();
  if (m == 0) throw DataError(kModule, "empty dataset");
  std::vector<int> y = data.labels();
  std::vector<int> z = contrast_indicator(data, contrast);

  const std::vector<std::string> group_names = {contrast.positive, contrast.negative, kAllGroups};
  struct ReplicateOut {
    // [group][metric]
    std::vector<std::vector<std::optional<double>>> rates;
    double oob_fraction = 0.0;
    bool group_seen[2] = {false, false};
  };
  std::vector<ReplicateOut> outs(static_cast<size_t>(R));

  parallel_for(R, [&](int r) {
    std::vector<int> resample = bootstrap_resample(m, derive_seed(seed, "resample", static_cast<uint64_t>(r)));
    std::vector<int> oob = oob_rows(m, resample);
    ReplicateOut& out = outs[static_cast<size_t>(r)];
    out.oob_fraction = static_cast<double>(oob.size()) / static_cast<double>(m);
    out.rates.assign(group_names.size(),
                     std::vector<std::optional<double>>(metrics.size(), std::nullopt));
    if (oob.empty()) return;

    ReplicatePredictor predictor = trainer(r, resample);
    std::vector<int> decisions = predictor(oob);
    if (decisions.size() != oob.size())
      throw DataError(kModule, "replicate predictor returned wrong length");

    for (int gi = 0; gi < 3; ++gi) {
      std::vector<int> yy, dd;
      for (size_t k = 0; k < oob.size(); ++k) {
        int row = oob[k];
        bool in_group = gi == 2 || (gi == 0 ? z[static_cast<size_t>(row)] == 1
                                            : z[static_cast<size_t>(row)] == 0);
        if (!in_group) continue;
        yy.push_back(y[static_cast<size_t>(row)]);
        dd.push_back(decisions[k]);
      }
      if (gi < 2 && !yy.empty()) out.group_seen[gi] = true;
      if (yy.empty()) continue;
      ConfusionCounts c = confusion(yy, dd);
      for (size_t mi = 0; mi < metrics.size(); ++mi)
        out.rates[static_cast<size_t>(gi)][mi] = rate(metrics[mi], c);
    }
  });

  bool pos_ever = false, neg_ever = false;
  for (const auto& out : outs) {
    pos_ever = pos_ever || out.group_seen[0];
    neg_ever = neg_ever || out.group_seen[1];
  }
  if (!pos_ever)
    throw DataError(kModule, "group " + contrast.positive + " absent from every out-of-bag set");
  if (!neg_ever)
    throw DataError(kModule, "group " + contrast.negative + " absent from every out-of-bag set");

  BootstrapResult result;
  result.n_replicates = R;
  double oob_sum = 0.0;
  for (const auto& out : outs) oob_sum += out.oob_fraction;
  result.mean_oob_fraction = oob_sum / static_cast<double>(R);

  for (size_t mi = 0; mi < metrics.size(); ++mi) {
    ReplicateRates rr;
    rr.values.assign(static_cast<size_t>(R),
                     std::vector<std::optional<double>>(group_names.size(), std::nullopt));
    for (int r = 0; r < R; ++r)
      for (size_t g = 0; g < group_names.size(); ++g)
        rr.values[static_cast<size_t>(r)][g] = outs[static_cast<size_t>(r)].rates[g][mi];
    summarize_groups(metrics[mi], group_names, rr, contrast.positive, contrast.negative,
                     &result.estimates, &result.differences);
  }
  return result;
}

BootstrapResult bootstrap_estimate(const LearnerSpec& spec, const Dataset& data,
                                   const SensitiveContrast& contrast,
                                   const std::vector<Metric>& metrics, int R, uint64_t seed) {
  TrainFn trainer = [&](int r, const std::vector<int>& train_rows) -> ReplicatePredictor {
    Dataset resampled = data.select_rows(train_rows);
    LearnerSpec rep_spec = spec;
    rep_spec.seed = derive_seed(seed, "train", static_cast<uint64_t>(r));
    TrainedModel model = train(rep_spec, resampled, TrainOptions{});
    DesignMatrix dm = build_design(data, model.options.design());
    std::vector<double> p_hat = predict_design(model, dm);
    double threshold = model.decision_threshold;
    return [p_hat = std::move(p_hat), threshold](const std::vector<int>& eval_rows) {
      std::vector<int> d(eval_rows.size());
      for (size_t i = 0; i < eval_rows.size(); ++i)
        d[i] = p_hat[static_cast<size_t>(eval_rows[i])] >= threshold ? 1 : 0;
      return d;
    };
  };
  return bootstrap_oob(trainer, data, contrast, metrics, R, seed);
}

}  // namespace fairaudit
