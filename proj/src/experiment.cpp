#include "fusim/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace fusim {

using nlohmann::json;

const char* const kArtifactVersion = "0.1.0";

namespace {

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

json modality_map_to_json(const GenConfig& gen, const std::vector<double>& v) {
  json out = json::object();
  for (std::size_t m = 0; m < gen.modalities.size(); ++m)
    out[gen.modalities[m].name] = v[m];
  return out;
}

std::vector<double> modality_map_from_json(const GenConfig& gen, const json& j,
                                           const char* what) {
  std::vector<double> out;
  for (const auto& mod : gen.modalities) {
    if (!j.contains(mod.name))
      throw ConfigError(std::string(what) + " is missing modality '" + mod.name + "'");
    out.push_back(j.at(mod.name).get<double>());
  }
  return out;
}

TrainConfig train_from_json(const json& j, const TrainConfig& defaults) {
  TrainConfig tc = defaults;
  tc.epochs = j.value("epochs", tc.epochs);
  tc.batch_size = j.value("batch_size", tc.batch_size);
  tc.learning_rate = j.value("learning_rate", tc.learning_rate);
  tc.lr_decay_gamma = j.value("lr_decay_gamma", tc.lr_decay_gamma);
  tc.adam_beta1 = j.value("adam_beta1", tc.adam_beta1);
  tc.adam_beta2 = j.value("adam_beta2", tc.adam_beta2);
  tc.adam_epsilon = j.value("adam_epsilon", tc.adam_epsilon);
  tc.validation_fraction = j.value("validation_fraction", tc.validation_fraction);
  return tc;
}

json train_to_json(const TrainConfig& tc) {
  json j;
  j["epochs"] = tc.epochs;
  j["batch_size"] = tc.batch_size;
  j["learning_rate"] = tc.learning_rate;
  j["lr_decay_gamma"] = tc.lr_decay_gamma;
  j["adam_beta1"] = tc.adam_beta1;
  j["adam_beta2"] = tc.adam_beta2;
  j["adam_epsilon"] = tc.adam_epsilon;
  j["validation_fraction"] = tc.validation_fraction;
  return j;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw DataError("cannot open for write: " + p.string());
  return f;
}

}  // namespace

void ExperimentConfig::validate() const {
  gen.validate();
  if (seeds.empty()) throw ConfigError("seed list must be nonempty");
  server_spec().validate();
  for (int m = 0; m < gen.n_modalities(); ++m) near_spec(m).validate();
  if (!(send_threshold > 0 && send_threshold < 1))
    throw ConfigError("send_threshold must be in (0, 1)");
  if (!send_thresholds_override.empty()) {
    if (send_thresholds_override.size() != gen.modalities.size())
      throw ConfigError("send_thresholds must list every modality");
    for (double t : send_thresholds_override)
      if (!(t > 0 && t < 1))
        throw ConfigError("send_thresholds values must be in (0, 1)");
  }
  for (double r : size_ratios)
    if (!(r > 0 && r <= 1)) throw ConfigError("size_ratios must be in (0, 1]");
  if (edge_runs_per_seed < 1)
    throw ConfigError("edge_runs_per_seed must be >= 1");
  if (reference_server_energy_j <= 0)
    throw ConfigError("reference_server_energy_j must be > 0");
  train_server.base.validate();
  train_near.base.validate();
  train_edge.base.validate();
  for (const TierTrain* t : {&train_server, &train_near, &train_edge})
    if (!(t->modality_dropout >= 0 && t->modality_dropout < 1))
      throw ConfigError("modality_dropout must be in [0, 1)");
  fos_policy.validate(gen.n_modalities());
  if (tau_grid.empty()) throw ConfigError("tau_grid must be nonempty");
  for (double t : tau_grid)
    if (!(t >= 0 && t <= 1)) throw ConfigError("tau_grid values must be in [0, 1]");
  EnergyConfig ec = energy;
  ec.bytes_per_frame = gen.bytes_per_modality();
  ec.foi_prevalence = gen.foi_prevalence;
  ec.validate();
  for (double p : prevalences)
    if (!(p > 0 && p < 1)) throw ConfigError("prevalences must be in (0, 1)");
  if (prevalences.empty()) throw ConfigError("prevalences must be nonempty");
  if (energy_stream_frames < 1)
    throw ConfigError("energy_stream_frames must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
}

FusionSpec ExperimentConfig::server_spec() const {
  FusionSpec s;
  for (const auto& mod : gen.modalities) {
    MlpSpec e;
    e.layer_widths = {mod.feature_width, extractor_hidden, embedding_width};
    s.extractors.push_back(e);
  }
  MlpSpec h;
  h.layer_widths.push_back(embedding_width * gen.n_modalities());
  for (int w : head_hidden) h.layer_widths.push_back(w);
  h.layer_widths.push_back(gen.n_labels);
  s.head = h;
  s.decision_threshold = decision_threshold;
  return s;
}

MlpSpec ExperimentConfig::near_spec(int modality) const {
  MlpSpec s;
  s.layer_widths.push_back(gen.modalities.at(modality).feature_width);
  for (int w : near_hidden) s.layer_widths.push_back(w);
  s.layer_widths.push_back(1);
  return s;
}

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["version"] = 1;
  j["output_dir"] = output_dir;
  j["seeds"] = seeds;

  json d;
  d["n_frames"] = gen.n_frames;
  d["n_labels"] = gen.n_labels;
  d["foi_prevalence"] = gen.foi_prevalence;
  d["redundancy"] = gen.redundancy;
  d["corruption_rate"] = gen.corruption_rate;
  d["noise_sigma"] = gen.noise_sigma;
  d["train_fraction"] = gen.train_fraction;
  json mods = json::array();
  for (const auto& m : gen.modalities) {
    json jm;
    jm["name"] = m.name;
    jm["feature_width"] = m.feature_width;
    jm["bytes_per_frame"] = m.bytes_per_frame;
    mods.push_back(jm);
  }
  d["modalities"] = mods;
  j["dataset"] = d;

  json sm;
  sm["extractor_hidden"] = extractor_hidden;
  sm["embedding_width"] = embedding_width;
  sm["head_hidden"] = head_hidden;
  sm["decision_threshold"] = decision_threshold;
  j["server_model"] = sm;

  json nm;
  nm["hidden"] = near_hidden;
  nm["send_threshold"] = send_threshold;
  if (!send_thresholds_override.empty()) {
    json st = json::object();
    for (std::size_t m = 0; m < gen.modalities.size(); ++m)
      st[gen.modalities[m].name] = send_thresholds_override[m];
    nm["send_thresholds"] = st;
  }
  j["near_sensor"] = nm;

  json e;
  e["size_ratios"] = size_ratios;
  e["train_runs_per_seed"] = edge_runs_per_seed;
  e["filtered_score"] =
      filtered_score == FilteredScorePolicy::raw_score ? "raw_score" : "zero";
  e["reference_server_energy_j"] = reference_server_energy_j;
  j["edge"] = e;

  json tr;
  tr["server"] = train_to_json(train_server.base);
  tr["server"]["modality_dropout"] = train_server.modality_dropout;
  tr["near_sensor"] = train_to_json(train_near.base);
  tr["edge"] = train_to_json(train_edge.base);
  tr["grid_search"] = grid_search;
  j["training"] = tr;

  json fp;
  fp["mode"] = fos_policy.mode == FosMode::table_verbatim ? "table_verbatim"
                                                          : "droppability_rule";
  json prio = json::array();
  for (int id : fos_policy.keep_priority) prio.push_back(gen.modalities.at(id).name);
  fp["keep_priority"] = prio;
  j["fos_policy"] = fp;

  j["tau_grid"] = tau_grid;

  json en;
  en["e_sense_j"] = modality_map_to_json(gen, energy.e_sense);
  en["e_nearsensor_infer_j"] = modality_map_to_json(gen, energy.e_nearsensor_infer);
  en["e_compress_j"] = modality_map_to_json(gen, energy.e_compress);
  en["compression_ratio"] = energy.compression_ratio;
  en["e_tx_per_byte_j"] = energy.e_tx_per_byte;
  en["e_server_infer_j"] = energy.e_server_infer;
  en["prevalences"] = prevalences;
  en["stream_frames"] = energy_stream_frames;
  j["energy"] = en;

  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (j.value("version", 0) != 1)
    throw ConfigError("unsupported config version (want 1)");

  ExperimentConfig c;
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    c.gen.n_frames = d.value("n_frames", c.gen.n_frames);
    c.gen.n_labels = d.value("n_labels", c.gen.n_labels);
    c.gen.foi_prevalence = d.value("foi_prevalence", c.gen.foi_prevalence);
    c.gen.redundancy = d.value("redundancy", c.gen.redundancy);
    c.gen.corruption_rate = d.value("corruption_rate", c.gen.corruption_rate);
    c.gen.noise_sigma = d.value("noise_sigma", c.gen.noise_sigma);
    c.gen.train_fraction = d.value("train_fraction", c.gen.train_fraction);
    if (d.contains("modalities")) {
      c.gen.modalities.clear();
      for (const json& jm : d.at("modalities")) {
        ModalityInfo m;
        m.name = jm.at("name").get<std::string>();
        m.feature_width = jm.at("feature_width").get<int>();
        m.bytes_per_frame = jm.at("bytes_per_frame").get<long long>();
        c.gen.modalities.push_back(m);
      }
    }
  }

  if (j.contains("server_model")) {
    const json& s = j.at("server_model");
    c.extractor_hidden = s.value("extractor_hidden", c.extractor_hidden);
    c.embedding_width = s.value("embedding_width", c.embedding_width);
    if (s.contains("head_hidden"))
      c.head_hidden = s.at("head_hidden").get<std::vector<int>>();
    c.decision_threshold = s.value("decision_threshold", c.decision_threshold);
  }

  if (j.contains("near_sensor")) {
    const json& n = j.at("near_sensor");
    if (n.contains("hidden")) c.near_hidden = n.at("hidden").get<std::vector<int>>();
    c.send_threshold = n.value("send_threshold", c.send_threshold);
    if (n.contains("send_thresholds"))
      c.send_thresholds_override =
          modality_map_from_json(c.gen, n.at("send_thresholds"), "send_thresholds");
  }

  if (j.contains("edge")) {
    const json& e = j.at("edge");
    if (e.contains("size_ratios"))
      c.size_ratios = e.at("size_ratios").get<std::vector<double>>();
    c.edge_runs_per_seed = e.value("train_runs_per_seed", c.edge_runs_per_seed);
    std::string fs = e.value("filtered_score", "raw_score");
    if (fs == "raw_score")
      c.filtered_score = FilteredScorePolicy::raw_score;
    else if (fs == "zero")
      c.filtered_score = FilteredScorePolicy::zero;
    else
      throw ConfigError("edge.filtered_score must be raw_score or zero");
    c.reference_server_energy_j =
        e.value("reference_server_energy_j", c.reference_server_energy_j);
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    if (t.contains("server")) {
      c.train_server.base = train_from_json(t.at("server"), c.train_server.base);
      c.train_server.modality_dropout =
          t.at("server").value("modality_dropout", c.train_server.modality_dropout);
    }
    if (t.contains("near_sensor"))
      c.train_near.base = train_from_json(t.at("near_sensor"), c.train_near.base);
    if (t.contains("edge"))
      c.train_edge.base = train_from_json(t.at("edge"), c.train_edge.base);
    c.grid_search = t.value("grid_search", c.grid_search);
  }

  if (j.contains("fos_policy")) {
    const json& f = j.at("fos_policy");
    std::string mode = f.value("mode", "droppability_rule");
    if (mode == "droppability_rule")
      c.fos_policy.mode = FosMode::droppability_rule;
    else if (mode == "table_verbatim")
      c.fos_policy.mode = FosMode::table_verbatim;
    else
      throw ConfigError("fos_policy.mode must be droppability_rule or table_verbatim");
    if (f.contains("keep_priority")) {
      c.fos_policy.keep_priority.clear();
      for (const json& name : f.at("keep_priority")) {
        std::string n = name.get<std::string>();
        int id = -1;
        for (std::size_t m = 0; m < c.gen.modalities.size(); ++m)
          if (c.gen.modalities[m].name == n) id = static_cast<int>(m);
        if (id < 0) throw ConfigError("keep_priority names unknown modality: " + n);
        c.fos_policy.keep_priority.push_back(id);
      }
    } else {
      c.fos_policy.keep_priority =
          FosPolicy::defaults(c.gen.n_modalities()).keep_priority;
    }
  } else {
    c.fos_policy = FosPolicy::defaults(c.gen.n_modalities());
  }

  if (j.contains("tau_grid")) {
    const json& g = j.at("tau_grid");
    c.tau_grid.clear();
    if (g.is_array()) {
      for (const json& v : g) c.tau_grid.push_back(v.get<double>());
    } else {
      double start = g.value("start", 0.0);
      double stop = g.value("stop", 1.0);
      int points = g.value("points", 21);
      if (points < 2) throw ConfigError("tau_grid.points must be >= 2");
      for (int i = 0; i < points; ++i)
        c.tau_grid.push_back(start + (stop - start) * i / (points - 1));
    }
  } else {
    for (int i = 0; i < 21; ++i) c.tau_grid.push_back(i / 20.0);
  }

  // Energy defaults: reference constants for an Edge-TPU near-sensor node,
  // Wi-Fi-class uplink and a GPU server.
  c.energy.e_sense.assign(c.gen.modalities.size(), 1.5e-4);
  c.energy.e_nearsensor_infer.assign(c.gen.modalities.size(), 2e-5);
  c.energy.e_compress.assign(c.gen.modalities.size(), 1e-3);
  c.energy.compression_ratio = 0.5;
  c.energy.e_tx_per_byte = 1e-5;
  c.energy.e_server_infer = 4e-3;
  if (j.contains("energy")) {
    const json& e = j.at("energy");
    if (e.contains("e_sense_j"))
      c.energy.e_sense = modality_map_from_json(c.gen, e.at("e_sense_j"), "e_sense_j");
    if (e.contains("e_nearsensor_infer_j"))
      c.energy.e_nearsensor_infer =
          modality_map_from_json(c.gen, e.at("e_nearsensor_infer_j"),
                                 "e_nearsensor_infer_j");
    if (e.contains("e_compress_j"))
      c.energy.e_compress =
          modality_map_from_json(c.gen, e.at("e_compress_j"), "e_compress_j");
    c.energy.compression_ratio =
        e.value("compression_ratio", c.energy.compression_ratio);
    c.energy.e_tx_per_byte = e.value("e_tx_per_byte_j", c.energy.e_tx_per_byte);
    c.energy.e_server_infer = e.value("e_server_infer_j", c.energy.e_server_infer);
    if (e.contains("prevalences"))
      c.prevalences = e.at("prevalences").get<std::vector<double>>();
    c.energy_stream_frames = e.value("stream_frames", c.energy_stream_frames);
  }
  c.energy.bytes_per_frame = c.gen.bytes_per_modality();
  c.energy.foi_prevalence = c.gen.foi_prevalence;

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json_string(ss.str());
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  auto f = open_out(path);
  f << to_json_string() << "\n";
}

std::string ExperimentConfig::hash() const {
  json j = json::parse(to_json_string());
  j.erase("output_dir");
  return hash_hex(j.dump());
}

TrainedSystem train_system(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TrainedSystem sys;
  sys.seed = seed;

  GenConfig gen = cfg.gen;
  gen.seed = derive_seed(seed, "dataset");
  sys.dataset = generate(gen);

  FusionTrainOptions opt;
  opt.modality_dropout = cfg.train_server.modality_dropout;
  TrainConfig tc = cfg.train_server.base;
  tc.seed = derive_seed(seed, "server");
  if (cfg.grid_search) {
    // Small hyperparameter grid, winner by validation loss.
    std::vector<FusionExample> data;
    for (const Frame& f : sys.dataset.train) {
      FusionExample ex;
      ex.inputs = f.features;
      ex.targets.assign(f.labels.begin(), f.labels.end());
      data.push_back(std::move(ex));
    }
    double best_val = std::numeric_limits<double>::infinity();
    for (int batch : {8, 16, 32}) {
      for (double lr : {1e-3, 1e-4}) {
        TrainConfig t = tc;
        t.batch_size = batch;
        t.learning_rate = lr;
        FusionTrainResult r = train_fusion(cfg.server_spec(), data, t, opt);
        if (r.log.best_val_loss < best_val) {
          best_val = r.log.best_val_loss;
          sys.server = std::move(r.model);
        }
      }
    }
  } else {
    sys.server = train_server_fusion(sys.dataset, cfg.server_spec(), tc, opt);
  }

  sys.fos = build_fos_dataset(sys.server, sys.dataset, cfg.fos_policy);

  for (int m = 0; m < cfg.gen.n_modalities(); ++m) {
    double tau = cfg.send_thresholds_override.empty()
                     ? cfg.send_threshold
                     : cfg.send_thresholds_override[m];
    TrainConfig tn = cfg.train_near.base;
    tn.seed = derive_seed(seed, "near/" + cfg.gen.modalities[m].name);
    NearSensorModel fosm =
        train_near_sensor(sys.fos, sys.dataset, m, cfg.near_spec(m), tn);
    fosm.send_threshold = tau;
    sys.fos_filters.push_back(std::move(fosm));

    TrainConfig tb = cfg.train_near.base;
    tb.seed = derive_seed(seed, "foi/" + cfg.gen.modalities[m].name);
    NearSensorModel foim = train_foi_filter(sys.dataset, m, cfg.near_spec(m), tb);
    foim.send_threshold = tau;
    sys.foi_filters.push_back(std::move(foim));
  }
  return sys;
}

namespace {

namespace fs = std::filesystem;

struct SeedPaths {
  fs::path dir;
  fs::path dataset, fos, server_manifest;
  std::vector<fs::path> near_manifests, foi_manifests;

  static SeedPaths make(const fs::path& out, std::uint64_t seed,
                        const ExperimentConfig& cfg) {
    SeedPaths p;
    p.dir = out / "seeds" / std::to_string(seed);
    p.dataset = p.dir / "dataset.txt";
    p.fos = p.dir / "fos.txt";
    p.server_manifest = p.dir / "server.fusion.json";
    for (const auto& m : cfg.gen.modalities) {
      p.near_manifests.push_back(p.dir / ("near_" + m.name + ".near.json"));
      p.foi_manifests.push_back(p.dir / ("foi_" + m.name + ".near.json"));
    }
    return p;
  }

  bool complete() const {
    if (!fs::exists(dataset) || !fs::exists(fos) || !fs::exists(server_manifest))
      return false;
    for (const auto& f : near_manifests)
      if (!fs::exists(f)) return false;
    for (const auto& f : foi_manifests)
      if (!fs::exists(f)) return false;
    return true;
  }
};

std::string rel_to(const fs::path& base, const fs::path& p) {
  return fs::relative(p, base).generic_string();
}

// Guards against mixing two experiments in one output directory.
void check_or_write_hash_marker(const fs::path& out, const std::string& hash) {
  fs::path marker = out / "config_hash.txt";
  if (fs::exists(marker)) {
    std::ifstream f(marker);
    std::string existing;
    f >> existing;
    if (existing != hash)
      throw ConfigError("output dir " + out.string() +
                        " belongs to a different config (hash " + existing +
                        " != " + hash + "); use a fresh directory");
  } else {
    auto f = open_out(marker);
    f << hash << "\n";
  }
}

json manifest_to_json(const RunManifest& m, bool include_volatile) {
  json j;
  j["artifact_version"] = m.artifact_version;
  j["config_hash"] = m.config_hash;
  j["dataset_file"] = m.dataset_file;
  j["server_model"] = m.server_model;
  j["fos_file"] = m.fos_file;
  j["near_sensor_models"] = m.near_sensor_models;
  j["baseline_models"] = m.baseline_models;
  j["edge_models"] = m.edge_models;
  json sd = json::object();
  for (const auto& [seed, dir] : m.seed_dirs) sd[std::to_string(seed)] = dir;
  j["seed_systems"] = sd;
  json stages = json::array();
  for (const auto& s : m.stages) {
    json js;
    js["name"] = s.name;
    js["outputs"] = s.outputs;
    if (include_volatile) {
      js["seconds"] = s.seconds;
      js["skipped"] = s.skipped;
    }
    stages.push_back(js);
  }
  j["stages"] = stages;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.artifact_version = j.value("artifact_version", "");
  m.config_hash = j.value("config_hash", "");
  m.dataset_file = j.value("dataset_file", "");
  m.server_model = j.value("server_model", "");
  m.fos_file = j.value("fos_file", "");
  m.near_sensor_models = j.value("near_sensor_models", std::vector<std::string>{});
  m.baseline_models = j.value("baseline_models", std::vector<std::string>{});
  m.edge_models = j.value("edge_models", std::vector<std::string>{});
  if (j.contains("seed_systems"))
    for (const auto& [k, v] : j.at("seed_systems").items())
      m.seed_dirs[std::stoull(k)] = v.get<std::string>();
  if (j.contains("stages")) {
    for (const json& js : j.at("stages")) {
      StageInfo s;
      s.name = js.value("name", "");
      s.seconds = js.value("seconds", 0.0);
      s.skipped = js.value("skipped", false);
      s.outputs = js.value("outputs", std::vector<std::string>{});
      m.stages.push_back(std::move(s));
    }
  }
  return m;
}

void write_csv_line(std::ofstream& f, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) f << ',';
    f << cells[i];
  }
  f << '\n';
}

}  // namespace

std::string RunManifest::manifest_hash() const {
  return hash_hex(manifest_to_json(*this, false).dump());
}

RunManifest cmd_train_all(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::path out(cfg.output_dir);
  fs::create_directories(out);
  std::string config_hash = cfg.hash();
  check_or_write_hash_marker(out, config_hash);

  fs::path manifest_path = out / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream f(manifest_path);
    json j;
    f >> j;
    RunManifest existing = manifest_from_json(j);
    if (existing.config_hash == config_hash) {
      bool all_present = true;
      for (const std::string& rel :
           {existing.dataset_file, existing.server_model, existing.fos_file})
        all_present = all_present && fs::exists(out / rel);
      for (const auto* vec : {&existing.near_sensor_models,
                              &existing.baseline_models, &existing.edge_models})
        for (const std::string& rel : *vec)
          all_present = all_present && fs::exists(out / rel);
      if (all_present) {
        for (auto& s : existing.stages) s.skipped = true;
        return existing;
      }
    }
  }

  RunManifest man;
  man.artifact_version = kArtifactVersion;
  man.config_hash = config_hash;

  for (std::uint64_t seed : cfg.seeds) {
    SeedPaths paths = SeedPaths::make(out, seed, cfg);
    man.seed_dirs[seed] = rel_to(out, paths.dir);
    StageInfo stage;
    stage.name = "system/" + std::to_string(seed);
    StageTimer timer;
    if (paths.complete()) {
      stage.skipped = true;
    } else {
      fs::create_directories(paths.dir);
      TrainedSystem sys = train_system(cfg, seed);
      save_dataset(sys.dataset, paths.dataset);
      save_fos(sys.fos, paths.fos);
      save_fusion(sys.server, paths.dir, "server");
      for (int m = 0; m < cfg.gen.n_modalities(); ++m) {
        save_near_sensor(sys.fos_filters[m], paths.dir,
                         "near_" + cfg.gen.modalities[m].name);
        save_near_sensor(sys.foi_filters[m], paths.dir,
                         "foi_" + cfg.gen.modalities[m].name);
      }
    }
    stage.seconds = timer.seconds();
    stage.outputs.push_back(rel_to(out, paths.dataset));
    stage.outputs.push_back(rel_to(out, paths.server_manifest));
    stage.outputs.push_back(rel_to(out, paths.fos));
    for (const auto& f : paths.near_manifests)
      stage.outputs.push_back(rel_to(out, f));
    for (const auto& f : paths.foi_manifests)
      stage.outputs.push_back(rel_to(out, f));
    man.stages.push_back(std::move(stage));
  }

  // Edge-compact pair for the primary seed at the first configured ratio.
  std::uint64_t primary = cfg.seeds.front();
  SeedPaths primary_paths = SeedPaths::make(out, primary, cfg);
  fs::path edge_with = primary_paths.dir / "edge_with_scores.edge.json";
  fs::path edge_base = primary_paths.dir / "edge_baseline.edge.json";
  {
    StageInfo stage;
    stage.name = "edge/" + std::to_string(primary);
    StageTimer timer;
    if (fs::exists(edge_with) && fs::exists(edge_base)) {
      stage.skipped = true;
    } else {
      TrainedSystem sys = load_system(cfg, primary);
      EdgeSpecPair pair = make_edge_spec_pair(cfg.server_spec(), cfg.size_ratios.front());
      TrainConfig te = cfg.train_edge.base;
      te.seed = derive_seed(primary, "edge/0");
      FusionTrainOptions eopt;
      eopt.modality_dropout = cfg.train_edge.modality_dropout;
      EdgeFusionModel with =
          train_edge_fusion(sys.dataset, sys.fos_filters, pair.with_scores, te, true,
                            pair.actual_ratio_with, cfg.filtered_score, eopt);
      EdgeFusionModel base =
          train_edge_fusion(sys.dataset, sys.fos_filters, pair.baseline, te, false,
                            pair.actual_ratio_baseline, cfg.filtered_score, eopt);
      save_edge_fusion(with, primary_paths.dir, "edge_with_scores");
      save_edge_fusion(base, primary_paths.dir, "edge_baseline");
    }
    stage.seconds = timer.seconds();
    stage.outputs.push_back(rel_to(out, edge_with));
    stage.outputs.push_back(rel_to(out, edge_base));
    man.stages.push_back(std::move(stage));
  }

  man.dataset_file = rel_to(out, primary_paths.dataset);
  man.server_model = rel_to(out, primary_paths.server_manifest);
  man.fos_file = rel_to(out, primary_paths.fos);
  for (const auto& f : primary_paths.near_manifests)
    man.near_sensor_models.push_back(rel_to(out, f));
  for (const auto& f : primary_paths.foi_manifests)
    man.baseline_models.push_back(rel_to(out, f));
  man.edge_models.push_back(rel_to(out, edge_with));
  man.edge_models.push_back(rel_to(out, edge_base));

  // Every referenced file must exist before the manifest is written.
  for (const auto& stage : man.stages)
    for (const std::string& rel : stage.outputs)
      if (!fs::exists(out / rel))
        throw DataError("manifest references missing file: " + rel);

  auto f = open_out(manifest_path);
  f << manifest_to_json(man, true).dump(2) << "\n";
  return man;
}

TrainedSystem load_system(const ExperimentConfig& cfg, std::uint64_t seed) {
  fs::path out(cfg.output_dir);
  SeedPaths paths = SeedPaths::make(out, seed, cfg);
  if (!paths.complete())
    throw UsageError("no trained system for seed " + std::to_string(seed) +
                     " under " + out.string() + "; run train-all first");
  TrainedSystem sys;
  sys.seed = seed;
  sys.dataset = load_dataset(paths.dataset);
  sys.fos = load_fos(paths.fos);
  sys.server = load_fusion(paths.server_manifest);
  for (std::size_t m = 0; m < cfg.gen.modalities.size(); ++m) {
    sys.fos_filters.push_back(load_near_sensor(paths.near_manifests[m]));
    sys.foi_filters.push_back(load_near_sensor(paths.foi_manifests[m]));
  }
  return sys;
}

double mean_interpolated_ql(
    const std::map<std::uint64_t, std::vector<TradeoffRow>>& curves,
    double target_efficiency) {
  if (curves.empty()) throw UsageError("no curves to summarize");
  double sum = 0;
  for (const auto& [seed, rows] : curves)
    sum += interpolate_quality_loss(rows, target_efficiency);
  return sum / static_cast<double>(curves.size());
}

TradeoffReport cmd_tradeoff(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::path out(cfg.output_dir);
  std::string config_hash = cfg.hash();

  TradeoffReport rep;
  std::vector<long long> bytes = cfg.gen.bytes_per_modality();
  for (std::uint64_t seed : cfg.seeds) {
    TrainedSystem sys = load_system(cfg, seed);
    rep.fusion_aware[seed] = build_tradeoff_curve(
        sys.server, sys.fos_filters, sys.dataset.test, cfg.tau_grid, bytes);
    rep.unimodal[seed] = build_tradeoff_curve(
        sys.server, sys.foi_filters, sys.dataset.test, cfg.tau_grid, bytes);
  }

  for (int i = 1; i <= 19; ++i) {
    TradeoffReport::SummaryRow row;
    row.target_efficiency = i * 0.05;
    row.mean_ql_fusion_aware =
        mean_interpolated_ql(rep.fusion_aware, row.target_efficiency);
    row.mean_ql_unimodal = mean_interpolated_ql(rep.unimodal, row.target_efficiency);
    rep.summary.push_back(row);
  }

  auto write_curve = [&](const char* name,
                         const std::map<std::uint64_t, std::vector<TradeoffRow>>& curves) {
    fs::path path = out / name;
    auto f = open_out(path);
    std::string header = "seed,tau,data_efficiency,quality_loss";
    for (const auto& m : cfg.gen.modalities) header += ",sent_" + m.name;
    header += ",f1_full,f1_filtered,config_hash";
    f << header << "\n";
    for (const auto& [seed, rows] : curves) {
      for (const TradeoffRow& r : rows) {
        std::vector<std::string> cells{std::to_string(seed), fmt_double(r.tau),
                                       fmt_double(r.data_efficiency),
                                       fmt_double(r.quality_loss)};
        for (double s : r.sent_fraction) cells.push_back(fmt_double(s));
        cells.push_back(fmt_double(r.f1_full));
        cells.push_back(fmt_double(r.f1_filtered));
        cells.push_back(config_hash);
        write_csv_line(f, cells);
      }
    }
    rep.files.push_back(path.string());
  };
  write_curve("tradeoff_fusion_aware.csv", rep.fusion_aware);
  write_curve("tradeoff_unimodal.csv", rep.unimodal);

  {
    fs::path path = out / "tradeoff_summary.csv";
    auto f = open_out(path);
    f << "target_efficiency,mean_ql_fusion_aware,mean_ql_unimodal,config_hash\n";
    for (const auto& row : rep.summary)
      write_csv_line(f, {fmt_double(row.target_efficiency),
                         fmt_double(row.mean_ql_fusion_aware),
                         fmt_double(row.mean_ql_unimodal), config_hash});
    rep.files.push_back(path.string());
  }
  return rep;
}

EnergyReport cmd_energy(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::path out(cfg.output_dir);
  std::string config_hash = cfg.hash();

  TrainedSystem sys = load_system(cfg, cfg.seeds.front());
  FilterBank bank;
  bank.fos_filters = sys.fos_filters;
  bank.foi_filters = sys.foi_filters;

  EnergyConfig ec = cfg.energy;
  ec.bytes_per_frame = cfg.gen.bytes_per_modality();
  GenConfig gen_template = cfg.gen;
  gen_template.seed = derive_seed(cfg.seeds.front(), "dataset");

  EnergyReport rep;
  rep.rows = scenario_sweep(ec, cfg.prevalences, bank, gen_template,
                            cfg.energy_stream_frames);

  {
    fs::path path = out / "energy_report.txt";
    auto f = open_out(path);
    f << "# fusim energy report v1 config_hash=" << config_hash << "\n";
    for (const ScenarioRow& r : rep.rows) {
      const EnergyBreakdown& b = r.breakdown;
      f << "p=" << fmt_double(r.prevalence) << " pipeline="
        << pipeline_name(b.pipeline);
      for (const auto& [k, v] : b.component_map()) f << ' ' << k << '=' << fmt_double(v);
      f << " total=" << fmt_double(b.total)
        << " normalized_total=" << fmt_double(b.normalized_total)
        << " savings_ratio=" << fmt_double(b.savings_ratio)
        << " config_hash=" << config_hash << "\n";
    }
    rep.files.push_back(path.string());
  }
  {
    fs::path path = out / "energy.csv";
    auto f = open_out(path);
    f << "prevalence,pipeline,sensing,near_compute,compression,communication,"
         "server_compute,total,normalized_total,savings_ratio,config_hash\n";
    for (const ScenarioRow& r : rep.rows) {
      const EnergyBreakdown& b = r.breakdown;
      write_csv_line(f, {fmt_double(r.prevalence), pipeline_name(b.pipeline),
                         fmt_double(b.sensing), fmt_double(b.near_compute),
                         fmt_double(b.compression), fmt_double(b.communication),
                         fmt_double(b.server_compute), fmt_double(b.total),
                         fmt_double(b.normalized_total), fmt_double(b.savings_ratio),
                         config_hash});
    }
    rep.files.push_back(path.string());
  }
  return rep;
}

CompactReport cmd_compact(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.seeds.size() < 2)
    throw UsageError("compact experiment needs >= 2 seeds for spread");
  fs::path out(cfg.output_dir);
  std::string config_hash = cfg.hash();

  CompactReport rep;
  rep.server_params = cfg.server_spec().param_count();
  std::vector<std::uint8_t> keep_all(cfg.gen.n_modalities(), 1);

  for (std::uint64_t seed : cfg.seeds) {
    TrainedSystem sys = load_system(cfg, seed);
    std::vector<std::vector<std::uint8_t>> full_preds;
    for (const Frame& f : sys.dataset.test)
      full_preds.push_back(predict(sys.server, f.features, keep_all).decision);
    double f1_server = macro_f1(full_preds, label_matrix(sys.dataset.test));

    for (double ratio : cfg.size_ratios) {
      EdgeSpecPair pair = make_edge_spec_pair(cfg.server_spec(), ratio);
      for (int k = 0; k < cfg.edge_runs_per_seed; ++k) {
        TrainConfig te = cfg.train_edge.base;
        te.seed = derive_seed(seed, "edge/" + std::to_string(k));
        FusionTrainOptions eopt;
        eopt.modality_dropout = cfg.train_edge.modality_dropout;
        EdgeFusionModel with = train_edge_fusion(
            sys.dataset, sys.fos_filters, pair.with_scores, te, true,
            pair.actual_ratio_with, cfg.filtered_score, eopt);
        EdgeFusionModel base = train_edge_fusion(
            sys.dataset, sys.fos_filters, pair.baseline, te, false,
            pair.actual_ratio_baseline, cfg.filtered_score, eopt);
        CompactSample sample;
        sample.nominal_ratio = ratio;
        sample.seed = seed;
        sample.f1_with = evaluate_edge_f1(with, sys.fos_filters, sys.dataset.test);
        sample.f1_baseline =
            evaluate_edge_f1(base, sys.fos_filters, sys.dataset.test);
        sample.f1_server = f1_server;
        sample.params_with = with.param_count();
        sample.params_baseline = base.param_count();
        rep.samples.push_back(sample);
      }
    }
  }

  rep.rows = quality_loss_curve(rep.samples, rep.server_params);
  EnergyPerParamMap map =
      EnergyPerParamMap::calibrate(rep.server_params, cfg.reference_server_energy_j);

  fs::path path = out / "compact_curve.csv";
  auto f = open_out(path);
  f << "size_ratio,params,energy_joules,f1_with_scores,f1_baseline,"
       "quality_loss_with,quality_loss_baseline,seed_count,config_hash\n";
  // Largest models first, as the curve is read left to right.
  std::vector<CompactRow> ordered = rep.rows;
  std::sort(ordered.begin(), ordered.end(),
            [](const CompactRow& a, const CompactRow& b) {
              return a.size_ratio > b.size_ratio;
            });
  for (const CompactRow& r : ordered)
    write_csv_line(f, {fmt_double(r.size_ratio), std::to_string(r.params),
                       fmt_double(params_to_energy(r.params, map)),
                       fmt_double(r.f1_with_mean), fmt_double(r.f1_baseline_mean),
                       fmt_double(r.quality_loss_with),
                       fmt_double(r.quality_loss_baseline),
                       std::to_string(r.seed_count), config_hash});
  rep.files.push_back(path.string());
  return rep;
}

}  // namespace fusim
