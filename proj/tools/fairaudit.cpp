#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/jsonio.hpp"
#include "fairaudit/report.hpp"
#include "fairaudit/version.hpp"

namespace {

using fairaudit::json;

void emit_error(const std::string& kind, const std::string& module, const std::string& message) {
  json rec;
  rec["error"] = json{{"kind", kind}, {"module", module}, {"message", message}};
  std::cerr << rec.dump() << "\n";
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const fairaudit::ConfigError& e) {
    emit_error("config", e.module(), e.what());
    return 2;
  } catch (const fairaudit::DataError& e) {
    emit_error("data", e.module(), e.what());
    return 3;
  } catch (const fairaudit::NumericError& e) {
    emit_error("numeric", e.module(), e.what());
    return 4;
  } catch (const std::exception& e) {
    emit_error("internal", "cli", e.what());
    return 4;
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

struct Overrides {
  std::string output_dir;
  std::string csv_path;
  std::string schema_path;
  std::string probes;
  std::string metrics;
  std::string family;
  int64_t seed = -1;
  int replicates = -1;
  double caliper = -1.0;
  double test_fraction = -1.0;

  void add_flags(CLI::App* cmd, bool with_probes) {
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--output-dir", output_dir, "Override the output directory");
    cmd->add_option("--csv", csv_path, "Override the dataset CSV path");
    cmd->add_option("--schema", schema_path, "Override the schema path");
    cmd->add_option("--replicates", replicates, "Override the bootstrap replicate count");
    cmd->add_option("--caliper", caliper, "Override the matching caliper");
    cmd->add_option("--test-fraction", test_fraction, "Override the test fraction");
    cmd->add_option("--family", family, "Override the learner family");
    if (with_probes) {
      cmd->add_option("--probes", probes, "Override the probe list (comma-separated)");
      cmd->add_option("--metrics", metrics, "Override the metric list (comma-separated)");
    }
  }

  void apply(json* cfg) const {
    if (seed >= 0) (*cfg)["seed"] = static_cast<uint64_t>(seed);
    if (!output_dir.empty()) (*cfg)["output_dir"] = output_dir;
    if (!csv_path.empty()) (*cfg)["data"]["csv"] = csv_path;
    if (!schema_path.empty()) (*cfg)["data"]["schema"] = schema_path;
    if (replicates >= 0) (*cfg)["replicates"] = replicates;
    if (caliper >= 0.0) (*cfg)["caliper"] = caliper;
    if (test_fraction >= 0.0) (*cfg)["test_fraction"] = test_fraction;
    if (!family.empty()) (*cfg)["learner"]["family"] = family;
    if (!probes.empty()) (*cfg)["probes"] = split_commas(probes);
    if (!metrics.empty()) (*cfg)["metrics"] = split_commas(metrics);
  }
};

fairaudit::AuditConfig load_config(const std::string& path, const Overrides& over) {
  json cfg_json = fairaudit::load_json_file(path, "config");
  over.apply(&cfg_json);
  return fairaudit::AuditConfig::from_json(cfg_json);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(fairaudit::kToolName) +
               " — subgroup fairness audits for binary clinical risk models"};
  app.set_version_flag("--version", fairaudit::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  Overrides over;

  CLI::App* validate = app.add_subcommand("validate", "Check a config and its referenced files");
  validate->add_option("-c,--config", config_path, "Audit config JSON")->required();

  CLI::App* generate =
      app.add_subcommand("generate", "Draw a synthetic cohort and write CSV + schema");
  std::string gen_config, out_csv, out_schema;
  int64_t gen_seed = -1;
  int gen_n = -1;
  generate->add_option("-c,--config", gen_config, "Generator config JSON")->required();
  generate->add_option("--out-csv", out_csv, "Output CSV path")->required();
  generate->add_option("--out-schema", out_schema, "Output schema JSON path")->required();
  generate->add_option("--seed", gen_seed, "Override the generator seed");
  generate->add_option("--n", gen_n, "Override the cohort size");

  CLI::App* audit = app.add_subcommand("audit", "Run the full audit and emit the report");
  audit->add_option("-c,--config", config_path, "Audit config JSON")->required();
  over.add_flags(audit, true);

  CLI::App* card = app.add_subcommand("card", "Fit and render the utility guide only");
  card->add_option("-c,--config", config_path, "Audit config JSON")->required();
  over.add_flags(card, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (validate->parsed()) {
    return guarded([&] {
      fairaudit::AuditConfig cfg = load_config(config_path, over);
      cfg.validate_references();
      std::cout << json{{"status", "ok"}, {"config", config_path}}.dump() << "\n";
    });
  }

  if (generate->parsed()) {
    return guarded([&] {
      json gcfg_json = fairaudit::load_json_file(gen_config, "config");
      if (gen_seed >= 0) gcfg_json["seed"] = static_cast<uint64_t>(gen_seed);
      if (gen_n >= 0) gcfg_json["n"] = gen_n;
      fairaudit::GeneratorConfig gcfg = fairaudit::GeneratorConfig::from_json(gcfg_json);
      fairaudit::Dataset data = fairaudit::generate(gcfg);
      fairaudit::write_csv(data, out_csv);
      fairaudit::write_text_file(out_schema, data.schema.to_json().dump(2) + "\n", "cli");
      std::cout << json{{"status", "ok"}, {"csv", out_csv}, {"schema", out_schema},
                        {"n", data.rows()}}
                       .dump()
                << "\n";
    });
  }

  if (audit->parsed()) {
    return guarded([&] {
      fairaudit::AuditConfig cfg = load_config(config_path, over);
      fairaudit::AuditReport report = fairaudit::run_audit(cfg);
      json status{{"status", "ok"}};
      if (!cfg.output_dir.empty()) status["output_dir"] = cfg.output_dir;
      std::cout << status.dump() << "\n";
    });
  }

  return guarded([&] {
    fairaudit::AuditConfig cfg = load_config(config_path, over);
    fairaudit::AuditReport report = fairaudit::run_card(cfg);
    json status{{"status", "ok"}};
    if (!cfg.output_dir.empty()) status["output_dir"] = cfg.output_dir;
    std::cout << status.dump() << "\n";
  });
}
