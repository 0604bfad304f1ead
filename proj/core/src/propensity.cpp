#include "fairaudit/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "fairaudit/errors.hpp"
#include "fairaudit/learners.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit {

namespace {

constexpr const char* kModule = "propensity";

// Coefficient magnitude (on [0,1]-scaled features) past which a fit is
// treated as separated: the gradient of a separable logistic problem vanishes
// as the scores saturate, so an iteration cap alone cannot flag it.
constexpr double kSeparationCoef = 15.0;

std::vector<double> feature_sds(const DesignMatrix& dm) {
  std::vector<double> sds(static_cast<size_t>(dm.p), 0.0);
  for (int j = 0; j < dm.p; ++j) {
    double mean = 0.0;
    for (int i = 0; i < dm.n; ++i) mean += dm.at(i, j);
    mean /= dm.n;
    double ss = 0.0;
    for (int i = 0; i < dm.n; ++i) {
      double d = dm.at(i, j) - mean;
      ss += d * d;
    }
    sds[static_cast<size_t>(j)] = dm.n > 1 ? std::sqrt(ss / (dm.n - 1)) : 0.0;
  }
  return sds;
}

DesignOptions baseline_design(const std::vector<std::string>& exclusions) {
  DesignOptions opts;
  opts.include_sensitive = false;
  opts.exclude_columns = exclusions;
  return opts;
}

}  // namespace

json PropensityModel::to_json() const {
  json coefs = json::object();
  for (size_t j = 0; j < features.size(); ++j) coefs[features[j].name] = coef[j];
  json j;
  j["contrast"] = contrast.to_json();
  j["coefficients"] = coefs;
  j["intercept"] = intercept;
  j["excluded"] = excluded;
  j["converged"] = converged;
  j["iterations"] = iterations;
  j["n_records"] = scores.size();
  return j;
}

PropensityModel fit_propensity(const Dataset& data, const SensitiveContrast& contrast,
                               const std::vector<std::string>& exclusions) {
  PropensityModel model;
  model.contrast = contrast;
  model.excluded = exclusions;
  model.z = contrast_indicator(data, contrast);

  int pos = 0;
  for (int v : model.z) pos += v;
  if (pos == 0 || pos == static_cast<int>(model.z.size()))
    throw DataError(kModule, "both contrast groups must be present to fit a propensity model");

  DesignMatrix dm = build_design(data, baseline_design(exclusions));
  std::vector<double> w(static_cast<size_t>(dm.n), 1.0);
  LogisticFit fit = fit_logistic_newton(dm.values, dm.n, dm.p, model.z, w, 0.0, 100, 1e-8);

  model.features = dm.features;
  model.coef.assign(fit.beta.begin(), fit.beta.end() - 1);
  model.intercept = fit.beta.back();
  model.converged = fit.converged;
  model.iterations = fit.iterations;

  double max_coef = 0.0;
  for (double c : model.coef) max_coef = std::max(max_coef, std::fabs(c));
  if (!fit.converged || max_coef > kSeparationCoef) {
    std::vector<double> sds = feature_sds(dm);
    std::vector<std::pair<double, std::string>> ranked;
    for (size_t j = 0; j < model.features.size(); ++j)
      ranked.emplace_back(std::fabs(model.coef[j]) * sds[j], model.features[j].name);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    std::string names;
    for (size_t k = 0; k < ranked.size() && k < 3; ++k) {
      if (k) names += ", ";
      names += ranked[k].second;
    }
    throw NumericError(kModule, "separation while regressing " + contrast.column +
                                    " on baseline features; dominant features: " + names);
  }

  model.scores.resize(static_cast<size_t>(dm.n));
  for (int i = 0; i < dm.n; ++i) {
    double t = model.intercept;
    for (int j = 0; j < dm.p; ++j) t += model.coef[static_cast<size_t>(j)] * dm.at(i, j);
    model.scores[static_cast<size_t>(i)] = sigmoid(t);
  }
  return model;
}

json SurrogateFlag::to_json() const {
  return json{{"feature", feature},
              {"single_accuracy", single_accuracy},
              {"coef_scaled", coef_scaled},
              {"reason", reason}};
}

std::vector<SurrogateFlag> detect_surrogates(const PropensityModel& model, const Dataset& data) {
  DesignMatrix dm = build_design(data, baseline_design(model.excluded));
  if (dm.features.size() != model.features.size())
    throw DataError(kModule, "dataset does not match the fitted propensity design");
  std::vector<double> sds = feature_sds(dm);

  std::vector<double> w(static_cast<size_t>(dm.n), 1.0);
  std::vector<SurrogateFlag> flags;
  std::set<std::string> flagged;

  // single-feature fits: near-perfect classification marks a surrogate
  for (int j = 0; j < dm.p; ++j) {
    std::vector<double> xj(static_cast<size_t>(dm.n));
    for (int i = 0; i < dm.n; ++i) xj[static_cast<size_t>(i)] = dm.at(i, j);
    LogisticFit fit = fit_logistic_newton(xj, dm.n, 1, model.z, w, 0.0, 30, 1e-8);
    int correct = 0;
    for (int i = 0; i < dm.n; ++i) {
      double t = fit.beta[0] * xj[static_cast<size_t>(i)] + fit.beta[1];
      int d = sigmoid(t) >= 0.5 ? 1 : 0;
      if (d == model.z[static_cast<size_t>(i)]) ++correct;
    }
    double acc = static_cast<double>(correct) / dm.n;
    if (acc >= 0.95) {
      SurrogateFlag f;
      f.feature = model.features[static_cast<size_t>(j)].name;
      f.single_accuracy = acc;
      f.coef_scaled = std::fabs(model.coef[static_cast<size_t>(j)]) * sds[static_cast<size_t>(j)];
      f.reason = "single_feature_accuracy";
      flags.push_back(f);
      flagged.insert(f.feature);
    }
  }
  std::sort(flags.begin(), flags.end(), [](const SurrogateFlag& a, const SurrogateFlag& b) {
    return a.single_accuracy > b.single_accuracy ||
           (a.single_accuracy == b.single_accuracy && a.feature < b.feature);
  });

  // top-5 standardized coefficients of the full model
  std::vector<std::pair<double, int>> ranked;
  for (int j = 0; j < dm.p; ++j)
    ranked.emplace_back(std::fabs(model.coef[static_cast<size_t>(j)]) * sds[static_cast<size_t>(j)], j);
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    return a.first > b.first ||
           (a.first == b.first &&
            model.features[static_cast<size_t>(a.second)].name <
                model.features[static_cast<size_t>(b.second)].name);
  });
  for (size_t k = 0; k < ranked.size() && k < 5; ++k) {
    const std::string& name = model.features[static_cast<size_t>(ranked[k].second)].name;
    if (flagged.count(name)) continue;
    SurrogateFlag f;
    f.feature = name;
    f.coef_scaled = ranked[k].first;
    f.reason = "top_coefficient";
    flags.push_back(f);
  }
  return flags;
}

std::vector<int> MatchedSample::matched_rows() const {
  std::vector<int> rows;
  rows.reserve(pairs.size() * 2);
  for (const auto& pr : pairs) {
    rows.push_back(pr.first);
    rows.push_back(pr.second);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

json MatchedSample::to_json() const {
  json pj = json::array();
  for (const auto& pr : pairs) pj.push_back({pr.first, pr.second});
  json j;
  j["pairs"] = pj;
  j["unmatched_treated"] = unmatched_treated;
  j["caliper"] = caliper;
  j["unmatched_fraction"] = unmatched_fraction;
  j["n_pairs"] = pairs.size();
  return j;
}

MatchedSample match_caliper(const PropensityModel& model, double caliper, uint64_t seed) {
  if (!(caliper > 0.0)) throw ConfigError(kModule, "caliper must be positive");
  int n = static_cast<int>(model.scores.size());
  std::vector<int> treated, control;
  for (int i = 0; i < n; ++i) {
    if (model.z[static_cast<size_t>(i)]) treated.push_back(i);
    else control.push_back(i);
  }
  if (treated.empty()) throw DataError(kModule, "no treated units to match");
  if (control.empty()) throw DataError(kModule, "no control units to match");

  auto tie_hash = [seed](int idx) { return derive_seed(seed, "tie", static_cast<uint64_t>(idx)); };

  // descending score; ties broken by the seed-derived hash so that matching
  // does not depend on record order
  std::sort(treated.begin(), treated.end(), [&](int a, int b) {
    double sa = model.scores[static_cast<size_t>(a)];
    double sb = model.scores[static_cast<size_t>(b)];
    if (sa != sb) return sa > sb;
    return tie_hash(a) < tie_hash(b);
  });

  std::set<std::tuple<double, uint64_t, int>> pool;
  for (int c : control) pool.insert({model.scores[static_cast<size_t>(c)], tie_hash(c), c});

  MatchedSample sample;
  sample.caliper = caliper;
  for (int t : treated) {
    double e = model.scores[static_cast<size_t>(t)];
    auto it = pool.lower_bound({e, 0, 0});
    const std::tuple<double, uint64_t, int>* best = nullptr;
    double best_gap = std::numeric_limits<double>::infinity();
    if (it != pool.end()) {
      double gap = std::fabs(std::get<0>(*it) - e);
      if (gap < best_gap) {
        best_gap = gap;
        best = &*it;
      }
    }
    if (it != pool.begin()) {
      auto prev = std::prev(it);
      double gap = std::fabs(std::get<0>(*prev) - e);
      // on an exact gap tie, prefer the lower tie hash
      if (gap < best_gap ||
          (best && gap == best_gap && std::get<1>(*prev) < std::get<1>(*best))) {
        best_gap = gap;
        best = &*prev;
      }
    }
    if (best && best_gap <= caliper) {
      sample.pairs.emplace_back(t, std::get<2>(*best));
      pool.erase(*best);
    } else {
      sample.unmatched_treated.push_back(t);
    }
  }
  sample.unmatched_fraction =
      static_cast<double>(sample.unmatched_treated.size()) / static_cast<double>(treated.size());
  return sample;
}

json FeatureBalance::to_json() const {
  json j;
  j["feature"] = feature;
  j["smd_before"] = degenerate ? json(nullptr) : json(smd_before);
  j["smd_after"] = smd_after ? json(*smd_after) : json(nullptr);
  j["degenerate"] = degenerate;
  return j;
}

json BalanceReport::to_json() const {
  json feats = json::array();
  for (const auto& f : features) feats.push_back(f.to_json());
  json flags = json::array();
  for (const auto& s : surrogates) flags.push_back(s.to_json());
  return json{{"features", feats}, {"surrogates", flags}};
}

namespace {

// SMD over the given rows; nullopt when pooled variance is zero and the
// means agree (reported as 0) vs degenerate (means differ).
struct SmdOut {
  double value = 0.0;
  bool degenerate = false;
};

SmdOut smd_on_rows(const DesignMatrix& dm, int j, const std::vector<int>& z,
                   const std::vector<int>& rows) {
  double n1 = 0, n0 = 0, m1 = 0, m0 = 0;
  for (int r : rows) {
    double v = dm.at(r, j);
    if (z[static_cast<size_t>(r)]) {
      m1 += v;
      n1 += 1;
    } else {
      m0 += v;
      n0 += 1;
    }
  }
  SmdOut out;
  if (n1 == 0 || n0 == 0) {
    out.degenerate = true;
    return out;
  }
  m1 /= n1;
  m0 /= n0;
  double s1 = 0, s0 = 0;
  for (int r : rows) {
    double v = dm.at(r, j);
    if (z[static_cast<size_t>(r)]) s1 += (v - m1) * (v - m1);
    else s0 += (v - m0) * (v - m0);
  }
  double v1 = n1 > 1 ? s1 / (n1 - 1) : 0.0;
  double v0 = n0 > 1 ? s0 / (n0 - 1) : 0.0;
  double pooled = std::sqrt((v1 + v0) / 2.0);
  if (pooled == 0.0) {
    if (m1 == m0) {
      out.value = 0.0;
    } else {
      out.degenerate = true;
    }
    return out;
  }
  out.value = (m1 - m0) / pooled;
  return out;
}

}  // namespace

BalanceReport balance_smd(const Dataset& data, const SensitiveContrast& contrast,
                          const MatchedSample* matched) {
  DesignMatrix dm = build_design(data, baseline_design({}));
  std::vector<int> z = contrast_indicator(data, contrast);

  std::vector<int> all_rows(static_cast<size_t>(dm.n));
  for (int i = 0; i < dm.n; ++i) all_rows[static_cast<size_t>(i)] = i;
  std::vector<int> matched_rows;
  if (matched) matched_rows = matched->matched_rows();

  BalanceReport report;
  for (int j = 0; j < dm.p; ++j) {
    FeatureBalance fb;
    fb.feature = dm.features[static_cast<size_t>(j)].name;
    SmdOut before = smd_on_rows(dm, j, z, all_rows);
    fb.smd_before = before.value;
    fb.degenerate = before.degenerate;
    if (matched) {
      SmdOut after = smd_on_rows(dm, j, z, matched_rows);
      if (!after.degenerate) fb.smd_after = after.value;
    }
    report.features.push_back(fb);
  }
  return report;
}

}  // namespace fairaudit
