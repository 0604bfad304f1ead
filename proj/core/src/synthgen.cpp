#include "fairaudit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "fairaudit/errors.hpp"
#include "fairaudit/jsonio.hpp"
#include "fairaudit/learners.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit {

namespace {

constexpr const char* kModule = "synthgen";

void check_probs(const std::vector<double>& probs, size_t want, const std::string& what) {
  if (probs.size() != want)
    throw ConfigError(kModule, what + ": need " + std::to_string(want) + " probabilities");
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw ConfigError(kModule, what + ": negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError(kModule, what + ": probabilities must sum to 1");
}

int draw_category(Rng& rng, const std::vector<double>& probs) {
  double u = rng.uniform();
  double acc = 0.0;
  for (size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n <= 0) throw ConfigError(kModule, "n must be positive");
  if (sensitive_codes.empty()) throw ConfigError(kModule, "sensitive codes must be non-empty");
  check_probs(sensitive_fractions, sensitive_codes.size(), "sensitive fractions");
  std::set<std::string> names{sensitive_name, outcome.name, kCleanLabelColumn};
  if (names.size() != 3)
    throw ConfigError(kModule, "sensitive and outcome column names collide");
  std::set<std::string> continuous_names;
  for (const auto& f : continuous) {
    if (!(f.sd > 0.0)) throw ConfigError(kModule, "feature " + f.name + ": sd must be positive");
    if (!(f.plausible_range.first < f.plausible_range.second))
      throw ConfigError(kModule, "feature " + f.name + ": invalid plausible range");
    if (!names.insert(f.name).second)
      throw ConfigError(kModule, "duplicate column name: " + f.name);
    continuous_names.insert(f.name);
    for (const auto& [code, _] : f.shift_by_code)
      if (std::find(sensitive_codes.begin(), sensitive_codes.end(), code) == sensitive_codes.end())
        throw ConfigError(kModule, "feature " + f.name + ": unknown sensitive code " + code);
  }
  for (const auto& f : categorical) {
    if (f.codes.empty()) throw ConfigError(kModule, "feature " + f.name + ": no categories");
    check_probs(f.probs, f.codes.size(), "feature " + f.name);
    for (const auto& [code, probs] : f.probs_by_code) {
      if (std::find(sensitive_codes.begin(), sensitive_codes.end(), code) == sensitive_codes.end())
        throw ConfigError(kModule, "feature " + f.name + ": unknown sensitive code " + code);
      check_probs(probs, f.codes.size(), "feature " + f.name + " for code " + code);
    }
    if (!names.insert(f.name).second)
      throw ConfigError(kModule, "duplicate column name: " + f.name);
  }
  if (surrogate) {
    if (!continuous_names.count(surrogate->base_feature))
      throw ConfigError(kModule, "surrogate base feature not found: " + surrogate->base_feature);
    if (!(surrogate->plausible_range.first < surrogate->plausible_range.second))
      throw ConfigError(kModule, "surrogate: invalid plausible range");
    if (!names.insert(surrogate->name).second)
      throw ConfigError(kModule, "duplicate column name: " + surrogate->name);
    continuous_names.insert(surrogate->name);
  }
  if (!(outcome.target_rate > 0.0 && outcome.target_rate < 1.0))
    throw ConfigError(kModule, "target outcome rate must lie in (0,1)");
  for (const auto& [fname, _] : outcome.coefficients)
    if (!continuous_names.count(fname))
      throw ConfigError(kModule, "outcome coefficient names unknown feature: " + fname);
  for (const auto& [code, _] : outcome.code_effects)
    if (std::find(sensitive_codes.begin(), sensitive_codes.end(), code) == sensitive_codes.end())
      throw ConfigError(kModule, "outcome code effect names unknown code: " + code);
}

json GeneratorConfig::to_json() const {
  json j;
  j["n"] = n;
  j["seed"] = seed;
  j["sensitive"] = json{{"name", sensitive_name},
                        {"codes", sensitive_codes},
                        {"fractions", sensitive_fractions}};
  json cont = json::array();
  for (const auto& f : continuous) {
    json fj;
    fj["name"] = f.name;
    fj["mean"] = f.mean;
    fj["sd"] = f.sd;
    fj["plausible_range"] = {f.plausible_range.first, f.plausible_range.second};
    fj["shift_by_code"] = f.shift_by_code;
    cont.push_back(fj);
  }
  j["continuous"] = cont;
  json cat = json::array();
  for (const auto& f : categorical) {
    json fj;
    fj["name"] = f.name;
    fj["codes"] = f.codes;
    fj["probs"] = f.probs;
    fj["probs_by_code"] = f.probs_by_code;
    fj["sensitive"] = f.mark_sensitive;
    cat.push_back(fj);
  }
  j["categorical"] = cat;
  if (surrogate) {
    json sj;
    sj["name"] = surrogate->name;
    sj["base_feature"] = surrogate->base_feature;
    sj["plausible_range"] = {surrogate->plausible_range.first, surrogate->plausible_range.second};
    sj["scale_by_code"] = surrogate->scale_by_code;
    sj["offset_by_code"] = surrogate->offset_by_code;
    j["surrogate"] = sj;
  } else {
    j["surrogate"] = nullptr;
  }
  j["outcome"] = json{{"name", outcome.name},
                      {"target_rate", outcome.target_rate},
                      {"coefficients", outcome.coefficients},
                      {"code_effects", outcome.code_effects}};
  return j;
}

GeneratorConfig GeneratorConfig::from_json(const json& j) {
  GeneratorConfig c;
  c.n = j.at("n").get<int>();
  c.seed = j.value("seed", 0ULL);
  const json& s = j.at("sensitive");
  c.sensitive_name = s.at("name").get<std::string>();
  c.sensitive_codes = s.at("codes").get<std::vector<std::string>>();
  c.sensitive_fractions = s.at("fractions").get<std::vector<double>>();
  for (const auto& fj : j.value("continuous", json::array())) {
    ContinuousFeatureConfig f;
    f.name = fj.at("name").get<std::string>();
    f.mean = fj.value("mean", 0.0);
    f.sd = fj.value("sd", 1.0);
    f.plausible_range = {fj.at("plausible_range")[0].get<double>(),
                         fj.at("plausible_range")[1].get<double>()};
    f.shift_by_code = fj.value("shift_by_code", std::map<std::string, double>{});
    c.continuous.push_back(std::move(f));
  }
  for (const auto& fj : j.value("categorical", json::array())) {
    CategoricalFeatureConfig f;
    f.name = fj.at("name").get<std::string>();
    f.codes = fj.at("codes").get<std::vector<std::string>>();
    f.probs = fj.at("probs").get<std::vector<double>>();
    f.probs_by_code = fj.value("probs_by_code", std::map<std::string, std::vector<double>>{});
    f.mark_sensitive = fj.value("sensitive", false);
    c.categorical.push_back(std::move(f));
  }
  if (j.contains("surrogate") && !j["surrogate"].is_null()) {
    const json& sj = j["surrogate"];
    SurrogateConfig sc;
    sc.name = sj.at("name").get<std::string>();
    sc.base_feature = sj.at("base_feature").get<std::string>();
    sc.plausible_range = {sj.at("plausible_range")[0].get<double>(),
                          sj.at("plausible_range")[1].get<double>()};
    sc.scale_by_code = sj.value("scale_by_code", std::map<std::string, double>{});
    sc.offset_by_code = sj.value("offset_by_code", std::map<std::string, double>{});
    c.surrogate = std::move(sc);
  }
  const json& oj = j.at("outcome");
  c.outcome.name = oj.value("name", std::string("outcome"));
  c.outcome.target_rate = oj.at("target_rate").get<double>();
  c.outcome.coefficients = oj.value("coefficients", std::map<std::string, double>{});
  c.outcome.code_effects = oj.value("code_effects", std::map<std::string, double>{});
  c.validate();
  return c;
}

void BiasInjection::validate() const {
  if (q < 0.0 || q > 1.0) throw ConfigError(kModule, "injection probability must lie in [0,1]");
  if (target_code.empty()) throw ConfigError(kModule, "injection needs a target group code");
  if (mechanism == Mechanism::kFeatureMissingness && feature.empty())
    throw ConfigError(kModule, "feature_missingness needs a feature name");
}

std::string to_string(BiasInjection::Mechanism m) {
  switch (m) {
    case BiasInjection::Mechanism::kLabelFlipPos: return "label_flip_pos";
    case BiasInjection::Mechanism::kLabelFlipNeg: return "label_flip_neg";
    case BiasInjection::Mechanism::kFeatureMissingness: return "feature_missingness";
  }
  throw ConfigError(kModule, "unknown injection mechanism");
}

BiasInjection::Mechanism injection_mechanism_from_string(const std::string& s) {
  if (s == "label_flip_pos") return BiasInjection::Mechanism::kLabelFlipPos;
  if (s == "label_flip_neg") return BiasInjection::Mechanism::kLabelFlipNeg;
  if (s == "feature_missingness") return BiasInjection::Mechanism::kFeatureMissingness;
  throw ConfigError(kModule, "unknown injection mechanism: " + s);
}

json BiasInjection::to_json() const {
  json j;
  j["mechanism"] = to_string(mechanism);
  j["target_code"] = target_code;
  j["q"] = q;
  j["feature"] = feature;
  return j;
}

BiasInjection BiasInjection::from_json(const json& j) {
  BiasInjection b;
  b.mechanism = injection_mechanism_from_string(j.at("mechanism").get<std::string>());
  b.target_code = j.at("target_code").get<std::string>();
  b.q = j.at("q").get<double>();
  b.feature = j.value("feature", std::string());
  b.validate();
  return b;
}

namespace {

FeatureSchema generator_schema(const GeneratorConfig& config) {
  FeatureSchema schema;
  {
    ColumnSpec spec;
    spec.name = config.sensitive_name;
    spec.kind = ColumnKind::kSensitive;
    spec.categories = config.sensitive_codes;
    schema.columns.push_back(spec);
  }
  for (const auto& f : config.continuous) {
    ColumnSpec spec;
    spec.name = f.name;
    spec.kind = ColumnKind::kContinuous;
    spec.plausible_range = f.plausible_range;
    schema.columns.push_back(spec);
  }
  if (config.surrogate) {
    ColumnSpec spec;
    spec.name = config.surrogate->name;
    spec.kind = ColumnKind::kContinuous;
    spec.plausible_range = config.surrogate->plausible_range;
    schema.columns.push_back(spec);
  }
  for (const auto& f : config.categorical) {
    ColumnSpec spec;
    spec.name = f.name;
    spec.kind = f.mark_sensitive ? ColumnKind::kSensitive : ColumnKind::kCategorical;
    spec.categories = f.codes;
    schema.columns.push_back(spec);
  }
  {
    ColumnSpec spec;
    spec.name = config.outcome.name;
    spec.kind = ColumnKind::kBinaryOutcome;
    schema.columns.push_back(spec);
  }
  {
    ColumnSpec spec;
    spec.name = kCleanLabelColumn;
    spec.kind = ColumnKind::kAudit;
    schema.columns.push_back(spec);
  }
  schema.validate();
  return schema;
}

std::vector<int> group_assignment(const GeneratorConfig& config) {
  // largest-remainder quotas, then a seeded permutation
  int n = config.n;
  size_t k = config.sensitive_codes.size();
  std::vector<int> counts(k, 0);
  std::vector<std::pair<double, size_t>> remainders;
  int assigned = 0;
  for (size_t g = 0; g < k; ++g) {
    double exact = config.sensitive_fractions[g] * n;
    counts[g] = static_cast<int>(std::floor(exact));
    assigned += counts[g];
    remainders.emplace_back(exact - std::floor(exact), g);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  for (int i = 0; i < n - assigned; ++i) ++counts[remainders[static_cast<size_t>(i) % k].second];

  std::vector<int> codes;
  codes.reserve(static_cast<size_t>(n));
  for (size_t g = 0; g < k; ++g)
    codes.insert(codes.end(), static_cast<size_t>(counts[g]), static_cast<int>(g));
  Rng rng(derive_seed(config.seed, "groups"));
  std::vector<int> perm = rng.permutation(n);
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = codes[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  return out;
}

}  // namespace

Dataset generate(const GeneratorConfig& config, const std::vector<BiasInjection>& injections) {
  config.validate();
  for (const auto& inj : injections) inj.validate();

  Dataset data;
  data.schema = generator_schema(config);
  data.provenance = "synthetic";
  data.columns.resize(data.schema.columns.size());
  int n = config.n;
  for (size_t c = 0; c < data.columns.size(); ++c) {
    const ColumnSpec& spec = data.schema.columns[c];
    Column& col = data.columns[c];
    col.missing.assign(static_cast<size_t>(n), 0);
    if (spec.kind == ColumnKind::kCategorical || spec.kind == ColumnKind::kSensitive)
      col.cat.resize(static_cast<size_t>(n));
    else
      col.num.resize(static_cast<size_t>(n));
  }

  std::vector<int> z = group_assignment(config);
  Column& zcol = data.column(config.sensitive_name);
  for (int i = 0; i < n; ++i)
    zcol.cat[static_cast<size_t>(i)] = config.sensitive_codes[static_cast<size_t>(z[static_cast<size_t>(i)])];

  // per-record feature draws in fixed column order
  std::vector<double> logit(static_cast<size_t>(n), 0.0);
  parallel_for(n, [&](int i) {
    Rng rng(derive_seed(config.seed, "record", static_cast<uint64_t>(i)));
    const std::string& code = config.sensitive_codes[static_cast<size_t>(z[static_cast<size_t>(i)])];
    double s = 0.0;

    for (const auto& f : config.continuous) {
      double mean = f.mean;
      auto it = f.shift_by_code.find(code);
      if (it != f.shift_by_code.end()) mean += it->second;
      double v = rng.normal(mean, f.sd);
      v = std::clamp(v, f.plausible_range.first, f.plausible_range.second);
      data.column(f.name).num[static_cast<size_t>(i)] = v;
      auto cit = config.outcome.coefficients.find(f.name);
      if (cit != config.outcome.coefficients.end()) {
        double scaled = (v - f.plausible_range.first) /
                        (f.plausible_range.second - f.plausible_range.first);
        s += cit->second * scaled;
      }
    }
    if (config.surrogate) {
      const SurrogateConfig& sc = *config.surrogate;
      double base = data.column(sc.base_feature).num[static_cast<size_t>(i)];
      double scale = 1.0, offset = 0.0;
      auto sit = sc.scale_by_code.find(code);
      if (sit != sc.scale_by_code.end()) scale = sit->second;
      auto oit = sc.offset_by_code.find(code);
      if (oit != sc.offset_by_code.end()) offset = oit->second;
      double v = std::clamp(scale * base + offset, sc.plausible_range.first,
                            sc.plausible_range.second);
      data.column(sc.name).num[static_cast<size_t>(i)] = v;
      auto cit = config.outcome.coefficients.find(sc.name);
      if (cit != config.outcome.coefficients.end()) {
        double scaled = (v - sc.plausible_range.first) /
                        (sc.plausible_range.second - sc.plausible_range.first);
        s += cit->second * scaled;
      }
    }
    for (const auto& f : config.categorical) {
      const std::vector<double>* probs = &f.probs;
      auto pit = f.probs_by_code.find(code);
      if (pit != f.probs_by_code.end()) probs = &pit->second;
      int k = draw_category(rng, *probs);
      data.column(f.name).cat[static_cast<size_t>(i)] = f.codes[static_cast<size_t>(k)];
    }
    auto eit = config.outcome.code_effects.find(code);
    if (eit != config.outcome.code_effects.end()) s += eit->second;
    logit[static_cast<size_t>(i)] = s;
  });

  // calibrate the intercept to the target rate
  auto mean_rate = [&](double c) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sigmoid(c + logit[static_cast<size_t>(i)]);
    return sum / n;
  };
  double lo = -40.0, hi = 40.0;
  double rate_lo = mean_rate(lo), rate_hi = mean_rate(hi);
  if (config.outcome.target_rate < rate_lo || config.outcome.target_rate > rate_hi) {
    double achieved = config.outcome.target_rate < rate_lo ? rate_lo : rate_hi;
    throw NumericError(kModule, "outcome rate target " + format_g6(config.outcome.target_rate) +
                                    " unreachable; nearest achievable rate is " +
                                    format_g6(achieved));
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mean_rate(mid) < config.outcome.target_rate) lo = mid;
    else hi = mid;
  }
  double intercept = 0.5 * (lo + hi);

  Column& ycol = data.column(config.outcome.name);
  Column& clean = data.column(kCleanLabelColumn);
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(config.seed, "outcome", static_cast<uint64_t>(i)));
    int y = rng.bernoulli(sigmoid(intercept + logit[static_cast<size_t>(i)])) ? 1 : 0;
    ycol.num[static_cast<size_t>(i)] = y;
    clean.num[static_cast<size_t>(i)] = y;
  }

  if (injections.empty()) return data;
  return apply_injections(data, config.sensitive_name, injections, config.seed);
}

Dataset apply_injections(const Dataset& data, const std::string& sensitive_name,
                         const std::vector<BiasInjection>& injections, uint64_t seed) {
  for (const auto& inj : injections) inj.validate();
  int si = data.schema.column_index(sensitive_name);
  if (si < 0 || data.schema.columns[static_cast<size_t>(si)].kind != ColumnKind::kSensitive)
    throw ConfigError(kModule, "injections target unknown sensitive column: " + sensitive_name);
  int oi = data.schema.outcome_index();

  Dataset out = data;
  const Column& zcol = out.columns[static_cast<size_t>(si)];
  Column& ycol = out.columns[static_cast<size_t>(oi)];
  int n = out.rows();

  for (size_t k = 0; k < injections.size(); ++k) {
    const BiasInjection& inj = injections[k];
    const auto& cats = data.schema.columns[static_cast<size_t>(si)].categories;
    if (std::find(cats.begin(), cats.end(), inj.target_code) == cats.end())
      throw ConfigError(kModule, "injection target code not in sensitive categories: " +
                                     inj.target_code);
    Column* feat = nullptr;
    if (inj.mechanism == BiasInjection::Mechanism::kFeatureMissingness) {
      int fi = out.schema.column_index(inj.feature);
      if (fi < 0) throw ConfigError(kModule, "injection names unknown feature: " + inj.feature);
      feat = &out.columns[static_cast<size_t>(fi)];
    }
    uint64_t inj_seed = derive_seed(seed, "inject", k);
    for (int i = 0; i < n; ++i) {
      if (zcol.cat[static_cast<size_t>(i)] != inj.target_code) continue;
      Rng rng(derive_seed(inj_seed, static_cast<uint64_t>(i)));
      switch (inj.mechanism) {
        case BiasInjection::Mechanism::kLabelFlipPos:
          if (ycol.num[static_cast<size_t>(i)] == 1.0 && rng.bernoulli(inj.q))
            ycol.num[static_cast<size_t>(i)] = 0.0;
          break;
        case BiasInjection::Mechanism::kLabelFlipNeg:
          if (ycol.num[static_cast<size_t>(i)] == 0.0 && rng.bernoulli(inj.q))
            ycol.num[static_cast<size_t>(i)] = 1.0;
          break;
        case BiasInjection::Mechanism::kFeatureMissingness:
          if (rng.bernoulli(inj.q)) {
            feat->missing[static_cast<size_t>(i)] = 1;
            if (!feat->num.empty())
              feat->num[static_cast<size_t>(i)] = std::numeric_limits<double>::quiet_NaN();
            else
              feat->cat[static_cast<size_t>(i)].clear();
          }
          break;
      }
    }
  }
  return out;
}

}  // namespace fairaudit
