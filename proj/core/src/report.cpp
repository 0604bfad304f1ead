#include "fairaudit/report.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <set>

#include "fairaudit/errors.hpp"
#include "fairaudit/propensity.hpp"
#include "fairaudit/rng.hpp"
#include "fairaudit/version.hpp"

namespace fairaudit {

namespace {
constexpr const char* kModule = "report";
constexpr const char* kConfigModule = "config";

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(kConfigModule, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError(kConfigModule, "unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

json UtilityConfig::to_json() const {
  json j;
  j["enabled"] = enabled;
  j["weights"] = weights.to_json();
  j["basic_columns"] = basic_columns;
  if (!dictionary_path.empty()) j["dictionary"] = dictionary_path;
  else if (dictionary_inline.is_object()) j["dictionary"] = dictionary_inline;
  j["min_split"] = min_split;
  j["min_leaf"] = min_leaf;
  j["alpha_rank"] = alpha_rank;
  j["acknowledge_uncalibrated"] = acknowledge_uncalibrated;
  return j;
}

UtilityConfig UtilityConfig::from_json(const json& j) {
  check_keys(j,
             {"enabled", "weights", "basic_columns", "dictionary", "min_split", "min_leaf",
              "alpha_rank", "acknowledge_uncalibrated"},
             "utility");
  UtilityConfig u;
  u.enabled = j.value("enabled", true);
  if (j.contains("weights")) u.weights = UtilityWeights::from_json(j.at("weights"));
  if (j.contains("basic_columns"))
    u.basic_columns = j.at("basic_columns").get<std::vector<std::string>>();
  if (j.contains("dictionary")) {
    if (j.at("dictionary").is_string()) u.dictionary_path = j.at("dictionary").get<std::string>();
    else if (j.at("dictionary").is_object()) u.dictionary_inline = j.at("dictionary");
    else throw ConfigError(kConfigModule, "utility dictionary must be a path or an object");
  }
  u.min_split = j.value("min_split", 50);
  u.min_leaf = j.value("min_leaf", 50);
  u.alpha_rank = j.value("alpha_rank", 5);
  u.acknowledge_uncalibrated = j.value("acknowledge_uncalibrated", false);
  return u;
}

AuditConfig AuditConfig::from_json(const json& j) {
  check_keys(j,
             {"seed", "output_dir", "data", "generator", "injections", "contrast", "learner",
              "probes", "metrics", "costs", "caliper", "replicates", "test_fraction",
              "propensity_exclusions", "asa_column", "emergency_column", "oob_baseline",
              "utility"},
             "config");
  AuditConfig c;
  c.raw = j;
  if (!j.contains("seed"))
    throw ConfigError(kConfigModule, "seed is mandatory; there is no wall-clock default");
  if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
    throw ConfigError(kConfigModule, "seed must be a non-negative integer");
  if (j.at("seed").is_number_integer() && j.at("seed").get<long long>() < 0)
    throw ConfigError(kConfigModule, "seed must be a non-negative integer");
  c.seed = j.at("seed").get<uint64_t>();

  c.output_dir = j.value("output_dir", std::string());

  if (j.contains("data")) {
    check_keys(j.at("data"), {"csv", "schema"}, "data");
    c.csv_path = j.at("data").value("csv", std::string());
    c.schema_path = j.at("data").value("schema", std::string());
  }
  if (j.contains("generator")) {
    const json& g = j.at("generator");
    if (g.is_string()) c.generator_path = g.get<std::string>();
    else c.generator_inline = GeneratorConfig::from_json(g);
  }
  if (j.contains("injections"))
    for (const auto& inj : j.at("injections")) c.injections.push_back(BiasInjection::from_json(inj));

  if (!j.contains("contrast"))
    throw ConfigError(kConfigModule, "config needs a sensitive contrast");
  c.contrast = SensitiveContrast::from_json(j.at("contrast"));

  if (j.contains("learner")) c.learner = LearnerSpec::from_json(j.at("learner"));
  if (j.contains("costs")) c.learner.costs = CostPair::from_json(j.at("costs"));

  if (j.contains("probes"))
    for (const auto& p : j.at("probes"))
      c.probes.push_back(ProbeCondition::parse(p.get<std::string>()));
  if (j.contains("metrics")) {
    c.metrics.clear();
    for (const auto& m : j.at("metrics")) c.metrics.push_back(metric_from_string(m.get<std::string>()));
  }
  c.caliper = j.value("caliper", 0.05);
  c.replicates = j.value("replicates", 150);
  c.test_fraction = j.value("test_fraction", 0.3);
  if (j.contains("propensity_exclusions"))
    c.propensity_exclusions = j.at("propensity_exclusions").get<std::vector<std::string>>();
  c.asa_column = j.value("asa_column", std::string());
  c.emergency_column = j.value("emergency_column", std::string());
  c.oob_baseline = j.value("oob_baseline", false);
  if (j.contains("utility")) c.utility = UtilityConfig::from_json(j.at("utility"));

  c.validate();
  return c;
}

AuditConfig AuditConfig::load(const std::string& path) {
  return from_json(load_json_file(path, kConfigModule));
}

void AuditConfig::validate() const {
  bool csv_mode = !csv_path.empty() || !schema_path.empty();
  if (csv_mode && generator_mode())
    throw ConfigError(kConfigModule, "config must name either a dataset or a generator, not both");
  if (!csv_mode && !generator_mode())
    throw ConfigError(kConfigModule, "config needs a data or generator section");
  if (csv_mode && (csv_path.empty() || schema_path.empty()))
    throw ConfigError(kConfigModule, "data section needs both csv and schema paths");
  if (!injections.empty() && !generator_mode())
    throw ConfigError(kConfigModule, "injections apply to generated cohorts only");
  for (const auto& inj : injections) inj.validate();
  if (generator_inline) generator_inline->validate();

  if (contrast.column.empty() || contrast.positive.empty() || contrast.negative.empty())
    throw ConfigError(kConfigModule, "contrast needs column, positive and negative codes");
  if (contrast.positive == contrast.negative)
    throw ConfigError(kConfigModule, "contrast codes must differ");

  learner.validate();
  if (metrics.empty()) throw ConfigError(kConfigModule, "metric list must not be empty");
  if (!(caliper > 0.0 && caliper <= 1.0))
    throw ConfigError(kConfigModule, "caliper must lie in (0, 1]");
  if (replicates < 2) throw ConfigError(kConfigModule, "replicates must be at least 2");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError(kConfigModule, "test_fraction must lie in (0, 1)");

  bool strat = false;
  for (const auto& p : probes) strat |= p.tag == ProbeTag::kStrat;
  if (strat && (asa_column.empty() || emergency_column.empty()))
    throw ConfigError(kConfigModule,
                      "stratified probes need asa_column and emergency_column");

  if (utility.enabled) {
    utility.weights.validate();
    if (utility.basic_columns.empty())
      throw ConfigError(kConfigModule, "utility section needs basic_columns");
    if (utility.min_split < 2 || utility.min_leaf < 1 || utility.alpha_rank < 1)
      throw ConfigError(kConfigModule, "utility tree minimums and alpha rank must be positive");
    if (learner.family != LearnerFamily::kLogistic && !utility.acknowledge_uncalibrated)
      throw ConfigError(kConfigModule,
                        "utility card treats scores as calibrated probabilities; non-logistic "
                        "families need acknowledge_uncalibrated: true");
  }
}

namespace {

void check_contrast_against_schema(const FeatureSchema& schema, const SensitiveContrast& c) {
  if (schema.column_index(c.column) < 0)
    throw ConfigError(kConfigModule, "contrast column not in schema: " + c.column);
  const ColumnSpec& spec = schema.column(c.column);
  if (spec.kind != ColumnKind::kSensitive)
    throw ConfigError(kConfigModule, "contrast column is not sensitive: " + c.column);
  for (const std::string& code : {c.positive, c.negative}) {
    if (std::find(spec.categories.begin(), spec.categories.end(), code) == spec.categories.end())
      throw ConfigError(kConfigModule,
                        "contrast code " + code + " not among categories of " + c.column);
  }
}

void check_contrast_against_generator(const GeneratorConfig& g, const SensitiveContrast& c) {
  const std::vector<std::string>* codes = nullptr;
  if (c.column == g.sensitive_name) {
    codes = &g.sensitive_codes;
  } else {
    for (const auto& cat : g.categorical)
      if (cat.name == c.column && cat.mark_sensitive) codes = &cat.codes;
  }
  if (!codes)
    throw ConfigError(kConfigModule,
                      "contrast column is not a sensitive generator column: " + c.column);
  for (const std::string& code : {c.positive, c.negative}) {
    if (std::find(codes->begin(), codes->end(), code) == codes->end())
      throw ConfigError(kConfigModule,
                        "contrast code " + code + " not among categories of " + c.column);
  }
}

LabelDictionary parse_dictionary(const json& src) {
  LabelDictionary dict;
  for (auto col = src.begin(); col != src.end(); ++col) {
    if (!col.value().is_object())
      throw ConfigError(kConfigModule, "dictionary entry for " + col.key() +
                                           " must map codes to labels");
    for (auto code = col.value().begin(); code != col.value().end(); ++code) {
      if (!code.value().is_string())
        throw ConfigError(kConfigModule, "dictionary label for " + col.key() + "=" +
                                             code.key() + " must be a string");
      dict[col.key()][code.key()] = code.value().get<std::string>();
    }
  }
  return dict;
}

LabelDictionary resolve_dictionary(const UtilityConfig& u, const FeatureSchema& schema) {
  if (!u.dictionary_path.empty())
    return parse_dictionary(load_json_file(u.dictionary_path, kConfigModule));
  if (u.dictionary_inline.is_object()) return parse_dictionary(u.dictionary_inline);
  // default: codes label themselves
  LabelDictionary dict;
  for (const auto& col : schema.columns) {
    if (col.kind != ColumnKind::kCategorical && col.kind != ColumnKind::kSensitive) continue;
    for (const auto& code : col.categories) dict[col.name][code] = code;
    dict[col.name][kMissingCategory] = kMissingCategory;
  }
  return dict;
}

}  // namespace

void AuditConfig::validate_references() const {
  validate();
  namespace fs = std::filesystem;
  if (!csv_path.empty()) {
    if (!fs::exists(csv_path))
      throw ConfigError(kConfigModule, "dataset file not found: " + csv_path);
    if (!fs::exists(schema_path))
      throw ConfigError(kConfigModule, "schema file not found: " + schema_path);
    FeatureSchema schema = FeatureSchema::from_json(load_json_file(schema_path, kConfigModule));
    schema.validate();
    check_contrast_against_schema(schema, contrast);
  } else if (!generator_path.empty()) {
    if (!fs::exists(generator_path))
      throw ConfigError(kConfigModule, "generator config not found: " + generator_path);
    GeneratorConfig g = GeneratorConfig::from_json(load_json_file(generator_path, kConfigModule));
    check_contrast_against_generator(g, contrast);
  } else if (generator_inline) {
    check_contrast_against_generator(*generator_inline, contrast);
  }
  if (utility.enabled && !utility.dictionary_path.empty() &&
      !std::filesystem::exists(utility.dictionary_path))
    throw ConfigError(kConfigModule, "dictionary file not found: " + utility.dictionary_path);
}

namespace {

struct StageTimer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  std::chrono::steady_clock::time_point start = t0;

  double lap() {
    auto t1 = std::chrono::steady_clock::now();
    double s = std::chrono::duration<double>(t1 - t0).count();
    t0 = t1;
    return s;
  }
  double total() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

Dataset load_input(const AuditConfig& cfg) {
  if (cfg.generator_mode()) {
    GeneratorConfig g = cfg.generator_inline
                            ? *cfg.generator_inline
                            : GeneratorConfig::from_json(
                                  load_json_file(cfg.generator_path, kConfigModule));
    return generate(g, cfg.injections);
  }
  FeatureSchema schema = FeatureSchema::from_json(load_json_file(cfg.schema_path, kConfigModule));
  return load_csv(cfg.csv_path, schema);
}

// ASA VI (organ donor) rows cannot enter any merged stratum, so a stratified
// audit drops them at ingestion and reports the count.
Dataset drop_asa_vi(const Dataset& data, const std::string& asa_column, int* dropped) {
  *dropped = 0;
  int idx = data.schema.column_index(asa_column);
  if (idx < 0) throw ConfigError(kConfigModule, "asa_column not in schema: " + asa_column);
  const Column& col = data.columns[static_cast<size_t>(idx)];
  if (col.cat.size() != static_cast<size_t>(data.rows())) return data;
  std::vector<int> keep;
  for (int r = 0; r < data.rows(); ++r) {
    if (col.cat[static_cast<size_t>(r)] == "VI") ++*dropped;
    else keep.push_back(r);
  }
  if (*dropped == 0) return data;
  return data.select_rows(keep);
}

struct IngestResult {
  Dataset train;
  Dataset test;
  json data_section;
  json preprocess_section;
};

IngestResult ingest_and_preprocess(const AuditConfig& cfg, bool strat_requested) {
  IngestResult out;
  Dataset data = load_input(cfg);
  int n_loaded = data.rows();
  int asa_vi_dropped = 0;
  if (strat_requested) data = drop_asa_vi(data, cfg.asa_column, &asa_vi_dropped);

  Dataset restricted = restrict_to_contrast(data, cfg.contrast);
  if (restricted.rows() < 2)
    throw DataError(kModule, "fewer than 2 rows match the contrast codes");
  std::vector<int> z = contrast_indicator(restricted, cfg.contrast);
  int n_pos = 0;
  for (int v : z) n_pos += v;

  SplitResult sp = split(restricted, cfg.test_fraction, cfg.seed);
  Preprocessor prep;
  prep.fit(sp.train);
  auto [train_p, rep_train] = prep.transform(sp.train);
  auto [test_p, rep_test] = prep.transform(sp.test);

  json data_j;
  data_j["provenance"] = restricted.provenance;
  data_j["n_rows"] = n_loaded;
  data_j["n_contrast_rows"] = restricted.rows();
  data_j["n_train"] = train_p.rows();
  data_j["n_test"] = test_p.rows();
  data_j["group_sizes"] = json{{cfg.contrast.positive, n_pos},
                               {cfg.contrast.negative, restricted.rows() - n_pos}};
  if (strat_requested) data_j["asa_vi_dropped"] = asa_vi_dropped;

  out.data_section = data_j;
  out.preprocess_section = json{{"train", rep_train.to_json()}, {"test", rep_test.to_json()}};
  out.train = std::move(train_p);
  out.test = std::move(test_p);
  return out;
}

json bootstrap_result_to_json(const BootstrapResult& br) {
  json est = json::array();
  for (const auto& e : br.estimates) est.push_back(e.to_json());
  json dif = json::array();
  for (const auto& d : br.differences) dif.push_back(d.to_json());
  return json{{"estimates", est},
              {"differences", dif},
              {"mean_oob_fraction", br.mean_oob_fraction},
              {"n_replicates", br.n_replicates}};
}

json config_echo(const AuditConfig& cfg) {
  json echo = cfg.raw;
  echo.erase("output_dir");  // output location never changes report content
  return echo;
}

json utility_section(const AuditConfig& cfg, const Dataset& train_part,
                     const Dataset& test_part) {
  LearnerSpec full_spec = cfg.learner;
  full_spec.seed = derive_seed(cfg.seed, "model");
  TrainedModel full = train(full_spec, train_part, TrainOptions{});
  LearnerSpec basic_spec = cfg.learner;
  basic_spec.seed = derive_seed(cfg.seed, "model_basic");
  TrainOptions basic_opts;
  basic_opts.restrict_columns = cfg.utility.basic_columns;
  TrainedModel basic = train(basic_spec, train_part, basic_opts);

  UtilityRecords rec =
      utility_table(full, basic, test_part, cfg.utility.weights, cfg.utility.basic_columns);
  UtilityTree tree =
      fit_utility_tree(rec, cfg.utility.min_split, cfg.utility.min_leaf, cfg.utility.alpha_rank);
  GuideDocument guide = render_guide(tree, resolve_dictionary(cfg.utility, test_part.schema));

  double sum_full = 0.0, sum_basic = 0.0;
  for (double v : rec.iu_full) sum_full += v;
  for (double v : rec.iu_basic) sum_basic += v;
  double n = static_cast<double>(rec.size());

  json j;
  j["weights"] = cfg.utility.weights.to_json();
  j["basic_columns"] = cfg.utility.basic_columns;
  j["summary"] = json{{"mean_iu_full", sum_full / n},
                      {"mean_iu_basic", sum_basic / n},
                      {"mean_iu_diff", (sum_full - sum_basic) / n},
                      {"n_records", rec.size()}};
  j["tree"] = tree.to_json();
  j["guide"] = guide.text;
  j["dot"] = guide.dot;
  return j;
}

}  // namespace

AuditReport run_audit(const AuditConfig& cfg) {
  cfg.validate();
  cfg.validate_references();
  StageTimer timer;
  json timing;

  bool strat_requested = false, psm_requested = false;
  for (const auto& p : cfg.probes) {
    strat_requested |= p.tag == ProbeTag::kStrat;
    psm_requested |= p.tag == ProbeTag::kPsm;
  }

  IngestResult ing = ingest_and_preprocess(cfg, strat_requested);
  timing["ingest"] = timer.lap();

  json doc;
  doc["tool"] = kToolName;
  doc["version"] = kToolVersion;
  doc["config"] = config_echo(cfg);
  doc["data"] = ing.data_section;
  doc["preprocess"] = ing.preprocess_section;

  uint64_t probe_seed = derive_seed(cfg.seed, "probes");
  if (!cfg.probes.empty()) {
    ProbeOptions popts;
    popts.metrics = cfg.metrics;
    popts.replicates = cfg.replicates;
    popts.seed = probe_seed;
    popts.caliper = cfg.caliper;
    popts.propensity_exclusions = cfg.propensity_exclusions;
    popts.asa_column = cfg.asa_column;
    popts.emergency_column = cfg.emergency_column;
    std::vector<ProbeResult> results =
        run_probes(cfg.probes, cfg.learner, ing.train, ing.test, cfg.contrast, popts);
    json probes_j = json::array();
    for (const auto& r : results) probes_j.push_back(r.to_json());
    doc["probes"] = probes_j;
    timing["probes"] = timer.lap();

    bool have_ppr =
        std::find(cfg.metrics.begin(), cfg.metrics.end(), Metric::kPpr) != cfg.metrics.end();
    if (have_ppr) {
      json panel_j = json::array();
      for (const auto& row : bias_panel(results)) panel_j.push_back(row.to_json());
      doc["bias_panel"] = panel_j;
    }

    // covariate balance on the evaluation partition (+ matched view when the
    // audit used matching); surrogate flags are advisory, so a propensity
    // model that fails to fit degrades to an unmatched balance table.
    json balance_j;
    try {
      PropensityModel pm = fit_propensity(ing.test, cfg.contrast, cfg.propensity_exclusions);
      std::optional<MatchedSample> matched;
      if (psm_requested)
        matched = match_caliper(pm, cfg.caliper, derive_seed(probe_seed, "match"));
      BalanceReport bal =
          balance_smd(ing.test, cfg.contrast, matched ? &*matched : nullptr);
      bal.surrogates = detect_surrogates(pm, ing.test);
      balance_j = bal.to_json();
      if (matched) balance_j["matching"] = matched->to_json();
    } catch (const NumericError& e) {
      if (psm_requested) throw;
      BalanceReport bal = balance_smd(ing.test, cfg.contrast, nullptr);
      balance_j = bal.to_json();
      balance_j["propensity_error"] = std::string(e.what());
    }
    doc["balance"] = balance_j;
    timing["balance"] = timer.lap();
  }

  if (cfg.utility.enabled) {
    doc["utility"] = utility_section(cfg, ing.train, ing.test);
    timing["utility"] = timer.lap();
  }

  if (cfg.oob_baseline) {
    BootstrapResult br = bootstrap_estimate(cfg.learner, ing.train, cfg.contrast, cfg.metrics,
                                            cfg.replicates, derive_seed(cfg.seed, "oob"));
    doc["oob_baseline"] = bootstrap_result_to_json(br);
    timing["oob_baseline"] = timer.lap();
  }

  doc = canonicalize(doc);
  timing["total"] = timer.total();
  doc["timing"] = timing;

  AuditReport report{doc};
  if (!cfg.output_dir.empty()) emit_outputs(report, cfg.output_dir);
  return report;
}

AuditReport run_card(const AuditConfig& cfg) {
  cfg.validate();
  cfg.validate_references();
  if (!cfg.utility.enabled)
    throw ConfigError(kConfigModule, "card runs need an enabled utility section");
  StageTimer timer;
  json timing;

  IngestResult ing = ingest_and_preprocess(cfg, false);
  timing["ingest"] = timer.lap();

  json doc;
  doc["tool"] = kToolName;
  doc["version"] = kToolVersion;
  doc["config"] = config_echo(cfg);
  doc["data"] = ing.data_section;
  doc["preprocess"] = ing.preprocess_section;
  doc["utility"] = utility_section(cfg, ing.train, ing.test);
  timing["utility"] = timer.lap();

  doc = canonicalize(doc);
  timing["total"] = timer.total();
  doc["timing"] = timing;

  AuditReport report{doc};
  if (!cfg.output_dir.empty()) emit_card_outputs(report, cfg.output_dir);
  return report;
}

namespace {

std::string md_num(const json& v) {
  if (v.is_null()) return "UNDEFINED";
  return format_g6(v.get<double>());
}

std::string md_ci(const json& lo, const json& hi) {
  if (lo.is_null() || hi.is_null()) return "—";
  return "[" + format_g6(lo.get<double>()) + ", " + format_g6(hi.get<double>()) + "]";
}

void render_probe_section(const json& doc, std::string* md) {
  *md += "## Probe results\n\n";
  for (const auto& probe : doc.at("probes")) {
    *md += "### " + probe.at("condition").get<std::string>() + "\n\n";
    *md += "- evaluated rows: " + std::to_string(probe.at("n_evaluated").get<int>());
    *md += "; group sizes: ";
    bool first = true;
    for (auto it = probe.at("group_sizes").begin(); it != probe.at("group_sizes").end(); ++it) {
      if (!first) *md += ", ";
      *md += it.key() + "=" + std::to_string(it.value().get<int>());
      first = false;
    }
    *md += "\n";
    const json& notes = probe.at("notes");
    for (auto it = notes.begin(); it != notes.end(); ++it)
      *md += "- " + it.key() + ": " + it.value().dump() + "\n";
    *md += "\n| metric | group | mean | 95% CI | defined |\n|---|---|---|---|---|\n";
    for (const auto& e : probe.at("estimates")) {
      *md += "| " + e.at("metric").get<std::string>() + " | " +
             e.at("group").get<std::string>() + " | " + md_num(e.at("mean")) + " | " +
             md_ci(e.at("ci_low"), e.at("ci_high")) + " | " +
             std::to_string(e.at("n_defined").get<int>()) + "/" +
             std::to_string(e.at("n_replicates").get<int>()) + " |\n";
    }
    const json& diffs = probe.at("differences");
    if (!diffs.empty()) {
      std::string a = diffs[0].at("group_a").get<std::string>();
      std::string b = diffs[0].at("group_b").get<std::string>();
      *md += "\n| metric | Δ (" + a + " − " + b + ") | 95% CI | defined |\n|---|---|---|---|\n";
      for (const auto& d : diffs) {
        *md += "| " + d.at("metric").get<std::string>() + " | " + md_num(d.at("delta_mean")) +
               " | " + md_ci(d.at("delta_ci_low"), d.at("delta_ci_high")) + " | " +
               std::to_string(d.at("n_defined").get<int>()) + "/" +
               std::to_string(d.at("n_replicates").get<int>()) + " |\n";
      }
    }
    *md += "\n";
  }
}

void render_preprocess_section(const json& doc, std::string* md) {
  *md += "## Preprocessing\n\n";
  for (const char* part : {"train", "test"}) {
    const json& rep = doc.at("preprocess").at(part);
    *md += std::string("### ") + part + "\n\n";
    *md += "| column | out-of-range nulled | imputed | remapped | imputation mean |\n";
    *md += "|---|---|---|---|---|\n";
    for (auto it = rep.at("columns").begin(); it != rep.at("columns").end(); ++it) {
      const json& c = it.value();
      *md += "| " + it.key() + " | " + std::to_string(c.at("out_of_range_nulled").get<int>()) +
             " | " + std::to_string(c.at("imputed").get<int>()) + " | " +
             std::to_string(c.at("remapped").get<int>()) + " | " +
             (c.at("imputation_mean").is_null() ? std::string("—")
                                                : format_g6(c.at("imputation_mean").get<double>())) +
             " |\n";
    }
    *md += "\n";
  }
}

}  // namespace

std::string render_markdown(const json& doc) {
  std::string md;
  md += "# " + doc.at("tool").get<std::string>() + " audit report\n\n";
  md += "- version: " + doc.at("version").get<std::string>() + "\n\n";

  md += "## Configuration\n\n```json\n" + doc.at("config").dump(2) + "\n```\n\n";

  const json& data = doc.at("data");
  md += "## Data\n\n";
  md += "- provenance: " + data.at("provenance").get<std::string>() + "\n";
  md += "- rows loaded: " + std::to_string(data.at("n_rows").get<int>()) + "\n";
  md += "- rows in contrast: " + std::to_string(data.at("n_contrast_rows").get<int>()) + "\n";
  md += "- train/test: " + std::to_string(data.at("n_train").get<int>()) + "/" +
        std::to_string(data.at("n_test").get<int>()) + "\n";
  md += "- group sizes: ";
  bool first = true;
  for (auto it = data.at("group_sizes").begin(); it != data.at("group_sizes").end(); ++it) {
    if (!first) md += ", ";
    md += it.key() + "=" + std::to_string(it.value().get<int>());
    first = false;
  }
  md += "\n";
  if (data.contains("asa_vi_dropped"))
    md += "- ASA VI rows dropped: " + std::to_string(data.at("asa_vi_dropped").get<int>()) + "\n";
  md += "\n";

  render_preprocess_section(doc, &md);

  if (doc.contains("probes")) render_probe_section(doc, &md);

  if (doc.contains("bias_panel")) {
    md += "## Bias panel (ΔPPR)\n\n| condition | Δ PPR | 95% CI | defined |\n|---|---|---|---|\n";
    for (const auto& row : doc.at("bias_panel")) {
      md += "| " + row.at("condition").get<std::string>() + " | " +
            md_num(row.at("delta_ppr_mean")) + " | " +
            md_ci(row.at("delta_ppr_ci_low"), row.at("delta_ppr_ci_high")) + " | " +
            std::to_string(row.at("n_defined").get<int>()) + " |\n";
    }
    md += "\n";
  }

  if (doc.contains("balance")) {
    const json& bal = doc.at("balance");
    md += "## Covariate balance\n\n| feature | SMD before | SMD after |\n|---|---|---|\n";
    for (const auto& f : bal.at("features")) {
      std::string before = f.at("degenerate").get<bool>() ? "degenerate"
                                                          : md_num(f.at("smd_before"));
      md += "| " + f.at("feature").get<std::string>() + " | " + before + " | " +
            (f.at("smd_after").is_null() ? "—" : format_g6(f.at("smd_after").get<double>())) +
            " |\n";
    }
    md += "\n";
    if (!bal.at("surrogates").empty()) {
      md += "### Surrogate flags\n\n";
      for (const auto& s : bal.at("surrogates")) {
        md += "- " + s.at("feature").get<std::string>() + " (" +
              s.at("reason").get<std::string>() +
              "; single-feature accuracy " + format_g6(s.at("single_accuracy").get<double>()) +
              ", |coef|·sd " + format_g6(s.at("coef_scaled").get<double>()) + ")\n";
      }
      md += "\n";
    }
    if (bal.contains("propensity_error"))
      md += "Propensity model unavailable: " + bal.at("propensity_error").get<std::string>() +
            "\n\n";
  }

  if (doc.contains("utility")) {
    const json& u = doc.at("utility");
    md += "## Utility guide\n\n";
    md += "- weights: w1=" + format_g6(u.at("weights").at("w1").get<double>()) +
          ", w2=" + format_g6(u.at("weights").at("w2").get<double>()) + "\n";
    const json& s = u.at("summary");
    md += "- mean IU (full model): " + format_g6(s.at("mean_iu_full").get<double>()) + "\n";
    md += "- mean IU (basic model): " + format_g6(s.at("mean_iu_basic").get<double>()) + "\n";
    md += "- mean utility gain: " + format_g6(s.at("mean_iu_diff").get<double>()) + "\n";
    const json& t = u.at("tree");
    md += "- pruning alpha: " + format_g6(t.at("alpha").get<double>()) + " (path length " +
          std::to_string(t.at("alpha_path").size()) + ")";
    if (t.at("alpha_rank_truncated").get<bool>()) md += " — rank exceeded the path";
    md += "\n\n";
    md += "```\n" + u.at("guide").get<std::string>() + "```\n\n";
  }

  if (doc.contains("oob_baseline")) {
    const json& b = doc.at("oob_baseline");
    md += "## Out-of-bag baseline\n\n";
    md += "- mean OOB fraction: " + format_g6(b.at("mean_oob_fraction").get<double>()) + "\n";
    md += "\n| metric | group | mean | 95% CI | defined |\n|---|---|---|---|---|\n";
    for (const auto& e : b.at("estimates")) {
      md += "| " + e.at("metric").get<std::string>() + " | " + e.at("group").get<std::string>() +
            " | " + md_num(e.at("mean")) + " | " + md_ci(e.at("ci_low"), e.at("ci_high")) +
            " | " + std::to_string(e.at("n_defined").get<int>()) + "/" +
            std::to_string(e.at("n_replicates").get<int>()) + " |\n";
    }
    md += "\n";
  }

  if (doc.contains("timing")) {
    md += "## Timing\n\n| stage | seconds |\n|---|---|\n";
    for (auto it = doc.at("timing").begin(); it != doc.at("timing").end(); ++it)
      md += "| " + it.key() + " | " + format_g6(it.value().get<double>()) + " |\n";
    md += "\n";
  }
  return md;
}

std::string render_metrics_csv(const json& doc) {
  std::string csv = "condition,metric,group,mean,ci_low,ci_high,n_replicates,n_defined\n";
  if (!doc.contains("probes")) return csv;
  for (const auto& probe : doc.at("probes")) {
    for (const auto& e : probe.at("estimates")) {
      if (e.at("n_defined").get<int>() <= 0) continue;
      csv += probe.at("condition").get<std::string>() + "," +
             e.at("metric").get<std::string>() + "," + e.at("group").get<std::string>() + "," +
             format_g6(e.at("mean").get<double>()) + "," +
             format_g6(e.at("ci_low").get<double>()) + "," +
             format_g6(e.at("ci_high").get<double>()) + "," +
             std::to_string(e.at("n_replicates").get<int>()) + "," +
             std::to_string(e.at("n_defined").get<int>()) + "\n";
    }
  }
  return csv;
}

std::string render_bias_panel_csv(const json& doc) {
  std::string csv = "condition,delta_ppr_mean,delta_ppr_ci_low,delta_ppr_ci_high,n_defined\n";
  if (!doc.contains("bias_panel")) return csv;
  for (const auto& row : doc.at("bias_panel")) {
    auto cell = [](const json& v) { return v.is_null() ? std::string() : format_g6(v.get<double>()); };
    csv += row.at("condition").get<std::string>() + "," + cell(row.at("delta_ppr_mean")) + "," +
           cell(row.at("delta_ppr_ci_low")) + "," + cell(row.at("delta_ppr_ci_high")) + "," +
           std::to_string(row.at("n_defined").get<int>()) + "\n";
  }
  return csv;
}

std::string render_balance_csv(const json& doc) {
  std::string csv = "feature,smd_before,smd_after,degenerate\n";
  if (!doc.contains("balance")) return csv;
  for (const auto& f : doc.at("balance").at("features")) {
    auto cell = [](const json& v) { return v.is_null() ? std::string() : format_g6(v.get<double>()); };
    csv += f.at("feature").get<std::string>() + "," + cell(f.at("smd_before")) + "," +
           cell(f.at("smd_after")) + "," + (f.at("degenerate").get<bool>() ? "1" : "0") + "\n";
  }
  return csv;
}

void emit_outputs(const AuditReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "plots", ec);
  if (ec) throw DataError(kModule, "cannot create output directory: " + dir);

  const json& doc = report.document;
  write_text_file((fs::path(dir) / "report.json").string(), doc.dump(2) + "\n", kModule);
  write_text_file((fs::path(dir) / "report.md").string(), render_markdown(doc), kModule);
  write_text_file((fs::path(dir) / "plots" / "metrics.csv").string(), render_metrics_csv(doc),
                  kModule);
  if (doc.contains("bias_panel"))
    write_text_file((fs::path(dir) / "plots" / "bias_panel.csv").string(),
                    render_bias_panel_csv(doc), kModule);
  if (doc.contains("balance"))
    write_text_file((fs::path(dir) / "plots" / "balance.csv").string(), render_balance_csv(doc),
                    kModule);
  if (doc.contains("utility"))
    write_text_file((fs::path(dir) / "tree.dot").string(),
                    doc.at("utility").at("dot").get<std::string>(), kModule);
}

void emit_card_outputs(const AuditReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir), ec);
  if (ec) throw DataError(kModule, "cannot create output directory: " + dir);

  const json& doc = report.document;
  write_text_file((fs::path(dir) / "card.json").string(), doc.dump(2) + "\n", kModule);
  write_text_file((fs::path(dir) / "guide.txt").string(),
                  doc.at("utility").at("guide").get<std::string>(), kModule);
  write_text_file((fs::path(dir) / "tree.dot").string(),
                  doc.at("utility").at("dot").get<std::string>(), kModule);
}

}  // namespace fairaudit
