#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fusim/fos.hpp"
#include "fusim/nearsensor.hpp"

namespace fusim {

/// What an edge model's score slot carries for a modality the near-sensor
/// filter dropped: the raw score (available for free at the edge) or zero.
enum class FilteredScorePolicy { raw_score, zero };

/// Compact fusion model for the edge. When uses_scores is set, the head input
/// carries one extra slot per modality, fed with that modality's near-sensor
/// score (subject to score_policy); the parameter-matched baseline variant
/// has no slots and a widened head instead.
struct EdgeFusionModel {
  FusionModel fusion;
  bool uses_scores = false;
  double size_ratio = 0;  // actual params / server params
  FilteredScorePolicy score_policy = FilteredScorePolicy::raw_score;

  std::size_t param_count() const { return fusion.param_count(); }
};

struct EdgeSpecPair {
  FusionSpec with_scores;
  FusionSpec baseline;
  double actual_ratio_with = 0;
  double actual_ratio_baseline = 0;
};

/// Shrink the server architecture to a nominal parameter ratio: hidden widths
/// scale by sqrt(ratio); the head's first hidden width is then searched to
/// land near the ratio (with-scores) and to parameter-match the baseline
/// within 1% (else configuration error).
EdgeSpecPair make_edge_spec_pair(const FusionSpec& server_spec,
                                 double size_ratio);

/// Per-frame inputs as the edge sees them after filtering: dropped modalities
/// zero-filled, near-sensor scores attached.
struct EdgeInputs {
  std::vector<std::vector<double>> features;
  std::vector<double> scores;
};

EdgeInputs edge_inputs_for_frame(const Frame& frame,
                                 const FilterDecision& decision,
                                 bool uses_scores,
                                 FilteredScorePolicy policy);

/// Training step 3: fit the compact model on filtered train-split inputs
/// against the original multi-label targets. The near-sensor models are read
/// only (their parameters are not touched).
EdgeFusionModel train_edge_fusion(const Dataset& ds,
                                  const std::vector<NearSensorModel>& near_models,
                                  const FusionSpec& spec, const TrainConfig& cfg,
                                  bool uses_scores,
                                  double size_ratio,
                                  FilteredScorePolicy policy = FilteredScorePolicy::raw_score,
                                  const FusionTrainOptions& opt = {});

Prediction edge_predict(const EdgeFusionModel& m, const Frame& frame,
                        const FilterDecision& decision);

/// Macro-F1 of an edge model over frames, consuming filtered inputs from the
/// given filters at their stored thresholds.
double evaluate_edge_f1(const EdgeFusionModel& m,
                        const std::vector<NearSensorModel>& near_models,
                        std::span<const Frame> frames);

/// One trained pair evaluated on one seed.
struct CompactSample {
  double nominal_ratio = 0;
  std::uint64_t seed = 0;
  double f1_with = 0;
  double f1_baseline = 0;
  double f1_server = 0;
  std::size_t params_with = 0;
  std::size_t params_baseline = 0;
};

struct CompactRow {
  double size_ratio = 0;          // mean actual ratio (with-scores variant)
  std::size_t params = 0;         // with-scores parameter count
  double f1_with_mean = 0, f1_with_sd = 0;
  double f1_baseline_mean = 0, f1_baseline_sd = 0;
  double quality_loss_with = 0;      // mean over seeds
  double quality_loss_baseline = 0;  // mean over seeds
  double quality_loss_with_sd = 0;
  double quality_loss_baseline_sd = 0;
  int seed_count = 0;
};

/// Aggregate per-seed samples into one row per nominal ratio; needs >= 2
/// seeds per ratio (spread undefined otherwise).
std::vector<CompactRow> quality_loss_curve(std::span<const CompactSample> samples,
                                           std::size_t server_params);

/// Linear model-size -> energy map of the compact-model report.
struct EnergyPerParamMap {
  double joules_per_parameter = 0;
  double reference_server_energy = 0;

  static EnergyPerParamMap calibrate(std::size_t server_params,
                                     double reference_server_energy);
  void validate() const;
};

double params_to_energy(std::size_t count, const EnergyPerParamMap& map);

void save_edge_fusion(const EdgeFusionModel& m, const std::filesystem::path& dir,
                      const std::string& stem);
EdgeFusionModel load_edge_fusion(const std::filesystem::path& manifest_path);

}  // namespace fusim
