#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fusim/datagen.hpp"
#include "fusim/edgecompact.hpp"
#include "fusim/energy.hpp"
#include "fusim/fos.hpp"
#include "fusim/fusion.hpp"
#include "fusim/metrics.hpp"
#include "fusim/nearsensor.hpp"

namespace fusim {

/// Per-tier training settings (the shared TrainConfig fields plus the
/// server-side modality dropout rate). Seeds are filled in per run from the
/// experiment seed list, never from here.
struct TierTrain {
  TrainConfig base;
  double modality_dropout = 0.0;
};

/// Everything one experiment needs, loadable from a single versioned JSON
/// file. Flag/env overrides patch the JSON before parsing.
struct ExperimentConfig {
  GenConfig gen;

  // Server fusion architecture.
  int extractor_hidden = 48;
  int embedding_width = 24;
  std::vector<int> head_hidden{24};
  double decision_threshold = 0.5;

  // Near-sensor architecture.
  std::vector<int> near_hidden{16};
  double send_threshold = 0.5;
  // Optional per-modality thresholds; empty means uniform send_threshold.
  std::vector<double> send_thresholds_override;

  // Edge compact experiment.
  std::vector<double> size_ratios{0.25, 0.10};
  int edge_runs_per_seed = 4;
  FilteredScorePolicy filtered_score = FilteredScorePolicy::raw_score;
  double reference_server_energy_j = 1.0;

  TierTrain train_server;
  TierTrain train_near;
  TierTrain train_edge;
  bool grid_search = false;

  FosPolicy fos_policy;
  std::vector<double> tau_grid;

  EnergyConfig energy;  // bytes_per_frame filled from gen modalities
  std::vector<double> prevalences{0.01, 0.05, 0.10};
  long long energy_stream_frames = 20000;

  std::vector<std::uint64_t> seeds{11, 111, 211, 311, 411};
  std::string output_dir = "out";

  void validate() const;
  FusionSpec server_spec() const;
  MlpSpec near_spec(int modality) const;

  // Stable identity of the experiment: hash of the canonical JSON with
  // output_dir removed (the same experiment written to two directories must
  // produce byte-identical reports).
  std::string hash() const;

  std::string to_json_string() const;
  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// One fully trained system for one seed.
struct TrainedSystem {
  std::uint64_t seed = 0;
  Dataset dataset;
  FusionModel server;
  std::vector<FosRecord> fos;
  std::vector<NearSensorModel> fos_filters;
  std::vector<NearSensorModel> foi_filters;
};

TrainedSystem train_system(const ExperimentConfig& cfg, std::uint64_t seed);

struct StageInfo {
  std::string name;
  double seconds = 0;
  bool skipped = false;
  std::vector<std::string> outputs;  // relative to output dir
};

struct RunManifest {
  std::string artifact_version;
  std::string config_hash;
  std::string dataset_file;
  std::string server_model;
  std::string fos_file;
  std::vector<std::string> near_sensor_models;
  std::vector<std::string> baseline_models;
  std::vector<std::string> edge_models;
  std::map<std::uint64_t, std::string> seed_dirs;
  std::vector<StageInfo> stages;

  // Hash over the stable fields (everything except timings/skip flags).
  std::string manifest_hash() const;
};

/// Steps 1-3 for every seed in the config, persisted under
/// <output_dir>/seeds/<seed>/. Stages whose outputs already exist under the
/// same config hash are skipped. The manifest's top-level entries point at
/// the primary (first) seed's artifacts.
RunManifest cmd_train_all(const ExperimentConfig& cfg);

TrainedSystem load_system(const ExperimentConfig& cfg, std::uint64_t seed);

struct TradeoffReport {
  // rows[seed] for each filter kind, every seed on the shared tau grid.
  std::map<std::uint64_t, std::vector<TradeoffRow>> fusion_aware;
  std::map<std::uint64_t, std::vector<TradeoffRow>> unimodal;
  // mean interpolated quality loss per target efficiency
  struct SummaryRow {
    double target_efficiency = 0;
    double mean_ql_fusion_aware = 0;
    double mean_ql_unimodal = 0;
  };
  std::vector<SummaryRow> summary;
  std::vector<std::string> files;
};

/// Requires cmd_train_all artifacts; fails with a pointer to train-all
/// otherwise.
TradeoffReport cmd_tradeoff(const ExperimentConfig& cfg);

struct EnergyReport {
  std::vector<ScenarioRow> rows;
  std::vector<std::string> files;
};

EnergyReport cmd_energy(const ExperimentConfig& cfg);

struct CompactReport {
  std::vector<CompactSample> samples;
  std::vector<CompactRow> rows;
  std::size_t server_params = 0;
  std::vector<std::string> files;
};

CompactReport cmd_compact(const ExperimentConfig& cfg);

/// Mean interpolated quality loss over the per-seed curves at one target
/// data-efficiency (the statistic the tradeoff summary reports).
double mean_interpolated_ql(
    const std::map<std::uint64_t, std::vector<TradeoffRow>>& curves,
    double target_efficiency);

extern const char* const kArtifactVersion;

}  // namespace fusim
