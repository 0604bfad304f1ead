#include "fairaudit/probes.hpp"

#include <algorithm>
#include <set>

#include "fairaudit/errors.hpp"
#include "fairaudit/jsonio.hpp"
#include "fairaudit/propensity.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit {

namespace {
constexpr const char* kModule = "probes";
}

std::string to_string(ProbeTag tag) {
  switch (tag) {
    case ProbeTag::kW: return "W";
    case ProbeTag::kSwap: return "SWAP";
    case ProbeTag::kWo: return "WO";
    case ProbeTag::kPsm: return "PSM";
    case ProbeTag::kSs: return "SS";
    case ProbeTag::kSep: return "SEP";
    case ProbeTag::kStrat: return "STRAT";
  }
  throw ConfigError(kModule, "unknown probe tag");
}

const std::vector<std::string> kAsaGroups = {"ASA1_NE", "ASA1_E",  "ASA2_NE",
                                             "ASA2_E",  "ASA3_NE", "ASA3_E"};

ProbeCondition ProbeCondition::parse(const std::string& text) {
  ProbeCondition c;
  if (text == "W") c.tag = ProbeTag::kW;
  else if (text == "SWAP") c.tag = ProbeTag::kSwap;
  else if (text == "WO") c.tag = ProbeTag::kWo;
  else if (text == "PSM") c.tag = ProbeTag::kPsm;
  else if (text == "SS") c.tag = ProbeTag::kSs;
  else if (text == "SEP") c.tag = ProbeTag::kSep;
  else if (text.rfind("STRAT:", 0) == 0) {
    c.tag = ProbeTag::kStrat;
    c.stratum = text.substr(6);
    if (std::find(kAsaGroups.begin(), kAsaGroups.end(), c.stratum) == kAsaGroups.end())
      throw ConfigError(kModule, "unknown stratum in probe condition: " + c.stratum);
  } else {
    throw ConfigError(kModule, "unknown probe condition: " + text);
  }
  return c;
}

std::string ProbeCondition::label() const {
  if (tag == ProbeTag::kStrat) return "STRAT:" + stratum;
  return to_string(tag);
}

json ProbeResult::to_json() const {
  json est = json::array();
  for (const auto& e : estimates) est.push_back(e.to_json());
  json dif = json::array();
  for (const auto& d : differences) dif.push_back(d.to_json());
  json j;
  j["condition"] = condition.label();
  j["estimates"] = est;
  j["differences"] = dif;
  j["group_sizes"] = group_sizes;
  j["n_evaluated"] = n_evaluated;
  j["notes"] = notes;
  return j;
}

std::string asa_group(const std::string& asa_code, bool emergency) {
  std::string base;
  if (asa_code == "I") base = "ASA1";
  else if (asa_code == "II" || asa_code == "III") base = "ASA2";
  else if (asa_code == "IV" || asa_code == "V") base = "ASA3";
  else throw DataError(kModule, "unknown ASA code: " + asa_code);
  return base + (emergency ? "_E" : "_NE");
}

namespace {

bool emergency_flag(const std::string& code, int row) {
  if (code == "E" || code == "1" || code == "true") return true;
  if (code == "NE" || code == "0" || code == "false") return false;
  throw DataError(kModule,
                  "unknown emergency code '" + code + "' in row " + std::to_string(row));
}

}  // namespace

AsaPartition stratify_asa(const Dataset& data, const std::string& asa_column,
                          const std::string& emergency_column) {
  const Column& asa = data.column(asa_column);
  const Column& emg = data.column(emergency_column);
  if (asa.cat.empty() || emg.cat.empty())
    throw ConfigError(kModule, "ASA and emergency columns must be categorical");
  AsaPartition part;
  for (const auto& g : kAsaGroups) part.strata[g];  // exhaustive, possibly empty
  int m = data.rows();
  for (int r = 0; r < m; ++r) {
    std::string g = asa_group(asa.cat[static_cast<size_t>(r)],
                              emergency_flag(emg.cat[static_cast<size_t>(r)], r));
    part.strata[g].push_back(r);
  }
  return part;
}

std::vector<int> downsample_to_balance(const std::vector<int>& rows, const std::vector<int>& z,
                                       uint64_t seed) {
  std::vector<int> pos, neg;
  for (int r : rows) {
    if (z[static_cast<size_t>(r)]) pos.push_back(r);
    else neg.push_back(r);
  }
  if (pos.size() == neg.size()) return rows;
  std::vector<int>& majority = pos.size() > neg.size() ? pos : neg;
  size_t keep = std::min(pos.size(), neg.size());

  Rng rng(seed);
  std::vector<int> perm = rng.permutation(static_cast<int>(majority.size()));
  std::vector<uint8_t> kept(majority.size(), 0);
  for (size_t i = 0; i < keep; ++i) kept[static_cast<size_t>(perm[i])] = 1;
  std::vector<int> trimmed;
  trimmed.reserve(keep);
  for (size_t i = 0; i < majority.size(); ++i)
    if (kept[i]) trimmed.push_back(majority[i]);
  majority = std::move(trimmed);

  // stitch back in the original order of `rows`
  std::vector<int> out;
  out.reserve(pos.size() + neg.size());
  size_t pi = 0, ni = 0;
  for (int r : rows) {
    if (z[static_cast<size_t>(r)]) {
      if (pi < pos.size() && pos[pi] == r) {
        out.push_back(r);
        ++pi;
      }
    } else {
      if (ni < neg.size() && neg[ni] == r) {
        out.push_back(r);
        ++ni;
      }
    }
  }
  return out;
}

namespace {

struct ConditionPlan {
  ProbeCondition condition;
  std::vector<int> eval_rows;
  json notes = json::object();
};

enum ModelKind { kModelW = 0, kModelWo, kModelSs, kModelSepPos, kModelSepNeg, kModelCount };

struct ReplicateRateSlot {
  // [condition][group(pos,neg,ALL)][metric]
  std::vector<std::vector<std::vector<std::optional<double>>>> rates;
};

}  // namespace

std::vector<ProbeResult> run_probes(const std::vector<ProbeCondition>& conditions,
                                    const LearnerSpec& spec, const Dataset& train,
                                    const Dataset& test, const SensitiveContrast& contrast,
                                    const ProbeOptions& opts) {
  if (conditions.empty()) return {};
  if (opts.replicates < 2) throw ConfigError(kModule, "probes need at least 2 replicates");
  spec.validate();

  const int m_train = train.rows();
  const int m_test = test.rows();
  if (m_train == 0 || m_test == 0) throw DataError(kModule, "empty train or test partition");

  std::vector<int> z_train = contrast_indicator(train, contrast);
  std::vector<int> z_test = contrast_indicator(test, contrast);
  std::vector<int> y_test = test.labels();

  bool need[kModelCount] = {false, false, false, false, false};
  for (const auto& c : conditions) {
    switch (c.tag) {
      case ProbeTag::kW:
      case ProbeTag::kSwap:
      case ProbeTag::kPsm:
      case ProbeTag::kStrat: need[kModelW] = true; break;
      case ProbeTag::kWo: need[kModelWo] = true; break;
      case ProbeTag::kSs: need[kModelSs] = true; break;
      case ProbeTag::kSep:
        need[kModelSepPos] = true;
        need[kModelSepNeg] = true;
        break;
    }
  }
  bool need_swap_design = false;
  for (const auto& c : conditions) need_swap_design |= c.tag == ProbeTag::kSwap;

  // condition-specific evaluation rows and notes
  std::vector<ConditionPlan> plans;
  std::optional<AsaPartition> asa;
  std::optional<MatchedSample> matched;
  for (const auto& c : conditions) {
    ConditionPlan plan;
    plan.condition = c;
    switch (c.tag) {
      case ProbeTag::kPsm: {
        if (!matched) {
          PropensityModel pm = fit_propensity(test, contrast, opts.propensity_exclusions);
          matched = match_caliper(pm, opts.caliper, derive_seed(opts.seed, "match"));
          if (matched->pairs.empty())
            throw NumericError(kModule, "no matched pairs at caliper " + format_g6(opts.caliper));
        }
        plan.eval_rows = matched->matched_rows();
        plan.notes["unmatched_fraction"] = matched->unmatched_fraction;
        plan.notes["n_pairs"] = matched->pairs.size();
        plan.notes["caliper"] = matched->caliper;
        break;
      }
      case ProbeTag::kStrat: {
        if (opts.asa_column.empty() || opts.emergency_column.empty())
          throw ConfigError(kModule, "stratified probes need ASA and emergency columns");
        if (!asa) asa = stratify_asa(test, opts.asa_column, opts.emergency_column);
        plan.eval_rows = asa->strata.at(c.stratum);
        if (plan.eval_rows.empty())
          throw DataError(kModule, "stratum " + c.stratum + " is empty in the test partition");
        break;
      }
      case ProbeTag::kSs: {
        int pos = 0;
        for (int v : z_train) pos += v;
        if (pos * 2 == m_train) plan.notes["downsampling_noop"] = true;
        [[fallthrough]];
      }
      default: {
        plan.eval_rows.resize(static_cast<size_t>(m_test));
        for (int i = 0; i < m_test; ++i) plan.eval_rows[static_cast<size_t>(i)] = i;
        break;
      }
    }
    plans.push_back(std::move(plan));
  }

  // designs are shared across replicates
  TrainOptions with_z, without_z;
  without_z.include_sensitive = false;
  DesignMatrix design_test = build_design(test, with_z.design());
  DesignMatrix design_test_wo;
  if (need[kModelWo]) design_test_wo = build_design(test, without_z.design());
  DesignMatrix design_test_swap;
  if (need_swap_design) design_test_swap = build_design(swap_contrast(test, contrast), with_z.design());

  const int R = opts.replicates;
  std::vector<ReplicateRateSlot> slots(static_cast<size_t>(R));

  parallel_for(R, [&](int r) {
    std::vector<int> resample =
        bootstrap_resample(m_train, derive_seed(opts.seed, "resample", static_cast<uint64_t>(r)));
    Dataset boot = train.select_rows(resample);

    auto fit_model = [&](const char* tag, const Dataset& d,
                         const TrainOptions& topts) -> std::optional<TrainedModel> {
      LearnerSpec rep_spec = spec;
      rep_spec.seed = derive_seed(opts.seed, tag, static_cast<uint64_t>(r));
      try {
        return fairaudit::train(rep_spec, d, topts);
      } catch (const DataError&) {
        // degenerate resample (e.g. single-class); the replicate reports no rates
        return std::nullopt;
      }
    };

    std::optional<TrainedModel> model_w, model_wo, model_ss, model_sep_pos, model_sep_neg;
    if (need[kModelW]) model_w = fit_model("train", boot, with_z);
    if (need[kModelWo]) model_wo = fit_model("train_wo", boot, without_z);
    if (need[kModelSs]) {
      std::vector<int> balanced =
          downsample_to_balance(resample, z_train, derive_seed(opts.seed, "ss", static_cast<uint64_t>(r)));
      model_ss = fit_model("train_ss", train.select_rows(balanced), with_z);
    }
    if (need[kModelSepPos]) {
      std::vector<int> pos_rows, neg_rows;
      for (int row : resample) {
        if (z_train[static_cast<size_t>(row)]) pos_rows.push_back(row);
        else neg_rows.push_back(row);
      }
      if (!pos_rows.empty()) model_sep_pos = fit_model("train_sep_pos", train.select_rows(pos_rows), with_z);
      if (!neg_rows.empty()) model_sep_neg = fit_model("train_sep_neg", train.select_rows(neg_rows), with_z);
    }

    auto decisions_of = [&](const TrainedModel& model, const DesignMatrix& dm) {
      std::vector<double> p = predict_design(model, dm);
      std::vector<int> d(p.size());
      for (size_t i = 0; i < p.size(); ++i) d[i] = p[i] >= model.decision_threshold ? 1 : 0;
      return d;
    };

    std::optional<std::vector<int>> d_w, d_swap, d_wo, d_ss, d_sep;
    if (model_w) d_w = decisions_of(*model_w, design_test);
    if (model_w && need_swap_design) d_swap = decisions_of(*model_w, design_test_swap);
    if (model_wo) d_wo = decisions_of(*model_wo, design_test_wo);
    if (model_ss) d_ss = decisions_of(*model_ss, design_test);
    if (model_sep_pos && model_sep_neg) {
      std::vector<int> dp = decisions_of(*model_sep_pos, design_test);
      std::vector<int> dn = decisions_of(*model_sep_neg, design_test);
      d_sep = std::vector<int>(static_cast<size_t>(m_test));
      for (int i = 0; i < m_test; ++i)
        (*d_sep)[static_cast<size_t>(i)] =
            z_test[static_cast<size_t>(i)] ? dp[static_cast<size_t>(i)] : dn[static_cast<size_t>(i)];
    }

    ReplicateRateSlot& slot = slots[static_cast<size_t>(r)];
    slot.rates.assign(plans.size(),
                      std::vector<std::vector<std::optional<double>>>(
                          3, std::vector<std::optional<double>>(opts.metrics.size(), std::nullopt)));

    for (size_t ci = 0; ci < plans.size(); ++ci) {
      const ConditionPlan& plan = plans[ci];
      const std::vector<int>* d = nullptr;
      switch (plan.condition.tag) {
        case ProbeTag::kW:
        case ProbeTag::kPsm:
        case ProbeTag::kStrat: d = d_w ? &*d_w : nullptr; break;
        case ProbeTag::kSwap: d = d_swap ? &*d_swap : nullptr; break;
        case ProbeTag::kWo: d = d_wo ? &*d_wo : nullptr; break;
        case ProbeTag::kSs: d = d_ss ? &*d_ss : nullptr; break;
        case ProbeTag::kSep: d = d_sep ? &*d_sep : nullptr; break;
      }
      if (!d) continue;
      for (int gi = 0; gi < 3; ++gi) {
        std::vector<int> yy, dd;
        for (int row : plan.eval_rows) {
          bool in_group = gi == 2 || (gi == 0 ? z_test[static_cast<size_t>(row)] == 1
                                              : z_test[static_cast<size_t>(row)] == 0);
          if (!in_group) continue;
          yy.push_back(y_test[static_cast<size_t>(row)]);
          dd.push_back((*d)[static_cast<size_t>(row)]);
        }
        if (yy.empty()) continue;
        ConfusionCounts c = confusion(yy, dd);
        for (size_t mi = 0; mi < opts.metrics.size(); ++mi)
          slot.rates[ci][static_cast<size_t>(gi)][mi] = rate(opts.metrics[mi], c);
      }
    }
  });

  const std::vector<std::string> group_names = {contrast.positive, contrast.negative, kAllGroups};
  std::vector<ProbeResult> results;
  for (size_t ci = 0; ci < plans.size(); ++ci) {
    ProbeResult res;
    res.condition = plans[ci].condition;
    res.notes = plans[ci].notes;
    res.n_evaluated = static_cast<int>(plans[ci].eval_rows.size());
    int pos = 0;
    for (int row : plans[ci].eval_rows) pos += z_test[static_cast<size_t>(row)];
    res.group_sizes[contrast.positive] = pos;
    res.group_sizes[contrast.negative] = res.n_evaluated - pos;

    for (size_t mi = 0; mi < opts.metrics.size(); ++mi) {
      ReplicateRates rr;
      rr.values.assign(static_cast<size_t>(R),
                       std::vector<std::optional<double>>(group_names.size(), std::nullopt));
      for (int r = 0; r < R; ++r)
        for (size_t g = 0; g < 3; ++g)
          rr.values[static_cast<size_t>(r)][g] = slots[static_cast<size_t>(r)].rates[ci][g][mi];
      summarize_groups(opts.metrics[mi], group_names, rr, contrast.positive, contrast.negative,
                       &res.estimates, &res.differences);
    }
    results.push_back(std::move(res));
  }
  return results;
}

ProbeResult run_probe(const ProbeCondition& condition, const LearnerSpec& spec,
                      const Dataset& train, const Dataset& test,
                      const SensitiveContrast& contrast, const ProbeOptions& opts) {
  return run_probes({condition}, spec, train, test, contrast, opts).front();
}

json BiasPanelRow::to_json() const {
  json j;
  j["condition"] = condition;
  j["delta_ppr_mean"] = n_defined > 0 ? json(delta_mean) : json(nullptr);
  j["delta_ppr_ci_low"] = n_defined > 0 ? json(delta_ci_low) : json(nullptr);
  j["delta_ppr_ci_high"] = n_defined > 0 ? json(delta_ci_high) : json(nullptr);
  j["n_defined"] = n_defined;
  return j;
}

std::vector<BiasPanelRow> bias_panel(const std::vector<ProbeResult>& results) {
  std::vector<BiasPanelRow> rows;
  std::string group_a, group_b;
  for (const auto& res : results) {
    const GroupDifference* ppr = nullptr;
    for (const auto& d : res.differences)
      if (d.metric == Metric::kPpr) ppr = &d;
    if (!ppr)
      throw ConfigError(kModule,
                        "condition " + res.condition.label() + " carries no PPR difference");
    if (group_a.empty()) {
      group_a = ppr->group_a;
      group_b = ppr->group_b;
    } else if (group_a != ppr->group_a || group_b != ppr->group_b) {
      throw DataError(kModule, "mixed contrasts across probe results");
    }
    BiasPanelRow row;
    row.condition = res.condition.label();
    row.delta_mean = ppr->delta_mean;
    row.delta_ci_low = ppr->delta_ci_low;
    row.delta_ci_high = ppr->delta_ci_high;
    row.n_defined = ppr->n_defined;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace fairaudit
