#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fusim/fos.hpp"

namespace fusim {

/// One binary keep/drop filter co-located with one sensor. At run time it
/// sees only its own modality's features.
struct NearSensorModel {
  int modality = 0;
  MlpModel model;  // output width 1
  double send_threshold = 0.5;
};

struct FilterDecision {
  std::vector<std::uint8_t> send;
  std::vector<double> score;
};

/// Training step 2b: fit modality m's filter on (features_m -> send_label_m)
/// from the FoS records. Records are matched to train frames by frame_id;
/// a missing record is a data error.
NearSensorModel train_near_sensor(const std::vector<FosRecord>& records,
                                  const Dataset& ds, int modality,
                                  const MlpSpec& spec, const TrainConfig& cfg);

/// Uni-modal baseline: identical architecture and training, but the label is
/// the frame's FoI bit (send everything whenever anything is interesting).
NearSensorModel train_foi_filter(const Dataset& ds, int modality,
                                 const MlpSpec& spec, const TrainConfig& cfg);

/// Per-modality thresholding at each model's own send_threshold. Modality m's
/// decision reads features[m] only.
FilterDecision decide(const std::vector<NearSensorModel>& models,
                      const std::vector<std::vector<double>>& features);

/// Same, with one shared threshold overriding the stored ones (sweeps).
FilterDecision decide_at(const std::vector<NearSensorModel>& models,
                         const std::vector<std::vector<double>>& features,
                         double tau);

std::vector<FilterDecision> decide_frames(const std::vector<NearSensorModel>& models,
                                          std::span<const Frame> frames);
std::vector<FilterDecision> decide_frames_at(const std::vector<NearSensorModel>& models,
                                             std::span<const Frame> frames,
                                             double tau);

struct SweepRow {
  double tau = 0;
  std::vector<double> send_rate;  // per modality
};

/// Aggregate send rates over a frame set for each threshold in the grid.
std::vector<SweepRow> sweep_thresholds(const std::vector<NearSensorModel>& models,
                                       std::span<const Frame> frames,
                                       std::span<const double> grid);

void save_near_sensor(const NearSensorModel& m, const std::filesystem::path& dir,
                      const std::string& stem);
NearSensorModel load_near_sensor(const std::filesystem::path& manifest_path);

}  // namespace fusim
