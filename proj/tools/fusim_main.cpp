#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fusim/experiment.hpp"

using namespace fusim;
using nlohmann::json;

namespace {

// Apply a dotted "key.path=value" override onto the raw config JSON.
// Values parse as JSON when possible, else as strings.
void apply_override(json& root, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key.path=value, got: " + kv);
  std::string path = kv.substr(0, eq);
  std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &root;
  std::istringstream is(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(is, key, '.')) keys.push_back(key);
  if (keys.empty()) throw ConfigError("--set has empty key path");
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) node = &((*node)[keys[i]]);
  (*node)[keys.back()] = value;
}

ExperimentConfig load_config(const std::string& config_path,
                             const std::vector<std::string>& overrides,
                             const std::string& output_dir_flag) {
  std::ifstream f(config_path);
  if (!f) throw ConfigError("cannot open config file: " + config_path);
  std::stringstream ss;
  ss << f.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const std::string& kv : overrides) apply_override(j, kv);
  if (const char* env = std::getenv("FUSIM_OUTPUT_DIR"); env && *env)
    j["output_dir"] = env;
  if (!output_dir_flag.empty()) j["output_dir"] = output_dir_flag;
  return ExperimentConfig::from_json_string(j.dump());
}

void print_files(const std::vector<std::string>& files) {
  for (const std::string& f : files) std::printf("wrote %s\n", f.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusim - fusion-aware near-sensor filtering simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string output_dir;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "experiment config JSON")
      ->required()
      ->envname("FUSIM_CONFIG");
  app.add_option("--output-dir", output_dir,
                 "override output directory (also FUSIM_OUTPUT_DIR)");
  app.add_option("--set", overrides,
                 "override a config key, e.g. --set dataset.n_frames=1000");

  auto* c_validate = app.add_subcommand("validate-config", "parse and validate the config");
  auto* c_train = app.add_subcommand("train-all", "run training steps 1-3 for every seed");
  auto* c_trade = app.add_subcommand("tradeoff", "data-efficiency / quality-loss curves");
  auto* c_energy = app.add_subcommand("energy", "end-to-end energy scenario sweep");
  auto* c_compact = app.add_subcommand("compact", "edge model compactization curve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg = load_config(config_path, overrides, output_dir);

    if (c_validate->parsed()) {
      std::printf("config ok\nconfig_hash %s\noutput_dir %s\nseeds %zu\n",
                  cfg.hash().c_str(), cfg.output_dir.c_str(), cfg.seeds.size());
      return 0;
    }
    if (c_train->parsed()) {
      RunManifest man = cmd_train_all(cfg);
      for (const StageInfo& s : man.stages)
        std::printf("stage %-14s %s (%.1fs)\n", s.name.c_str(),
                    s.skipped ? "skipped" : "done", s.seconds);
      std::printf("manifest %s/manifest.json\nmanifest_hash %s\n",
                  cfg.output_dir.c_str(), man.manifest_hash().c_str());
      return 0;
    }
    if (c_trade->parsed()) {
      TradeoffReport rep = cmd_tradeoff(cfg);
      print_files(rep.files);
      for (const auto& row : rep.summary)
        if (std::abs(row.target_efficiency - 0.30) < 1e-9)
          std::printf("mean quality loss at 30%% data efficiency: "
                      "fusion-aware %.5f, unimodal %.5f\n",
                      row.mean_ql_fusion_aware, row.mean_ql_unimodal);
      return 0;
    }
    if (c_energy->parsed()) {
      EnergyReport rep = cmd_energy(cfg);
      print_files(rep.files);
      for (const ScenarioRow& r : rep.rows)
        std::printf("p=%.3f %-16s savings %6.2fx\n", r.prevalence,
                    pipeline_name(r.breakdown.pipeline), r.breakdown.savings_ratio);
      return 0;
    }
    if (c_compact->parsed()) {
      CompactReport rep = cmd_compact(cfg);
      print_files(rep.files);
      for (const CompactRow& r : rep.rows)
        std::printf("ratio %.2f params %zu: F1 with=%.4f base=%.4f\n", r.size_ratio,
                    r.params, r.f1_with_mean, r.f1_baseline_mean);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
  return 0;
}
