#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fusim/nearsensor.hpp"

namespace fusim {

enum class Pipeline { conventional, compression, unimodal_filter, fusionsense };

const char* pipeline_name(Pipeline p);
Pipeline pipeline_from_name(const std::string& name);

/// Per-operation energy constants (joules). Values are calibration constants
/// for an Edge-TPU-class near-sensor accelerator, a Wi-Fi-class uplink and a
/// GPU server; they are configuration, not measurements.
struct EnergyConfig {
  std::vector<long long> bytes_per_frame;   // per modality
  std::vector<double> e_sense;              // J/frame per modality
  std::vector<double> e_nearsensor_infer;   // J/frame per modality
  std::vector<double> e_compress;           // J/frame per modality
  double compression_ratio = 0.5;           // in (0, 1]
  double e_tx_per_byte = 8e-6;              // J/byte
  double e_server_infer = 2e-3;             // J/invocation
  double foi_prevalence = 0.10;

  void validate() const;
  int n_modalities() const { return static_cast<int>(bytes_per_frame.size()); }
};

struct EnergyBreakdown {
  Pipeline pipeline = Pipeline::conventional;
  double sensing = 0;
  double near_compute = 0;
  double compression = 0;
  double communication = 0;
  double server_compute = 0;
  double total = 0;
  double normalized_total = 0;  // total / conventional total
  double savings_ratio = 0;     // conventional total / total

  std::map<std::string, double> component_map() const;
};

/// Per-frame accounting over a stream:
///   conventional     — sense all, transmit all bytes, server infers each frame.
///   compression      — sense, compress, transmit bytes x ratio, server infers
///                      each frame.
///   unimodal_filter / fusionsense — sense all, near-sensor inference per
///                      modality each frame, transmit only sent modalities,
///                      server infers only when >= 1 modality arrives. The two
///                      differ solely in the decisions fed in.
/// Filter pipelines require decisions (one per frame); others ignore them.
EnergyBreakdown account_pipeline(Pipeline pipeline,
                                 const std::vector<FilterDecision>* decisions,
                                 const EnergyConfig& config, long long n_frames);

struct FilterBank {
  std::vector<NearSensorModel> fos_filters;  // fusionsense decisions
  std::vector<NearSensorModel> foi_filters;  // unimodal baseline decisions
};

struct ScenarioRow {
  double prevalence = 0;
  EnergyBreakdown breakdown;
};

/// Regenerate a test stream at each prevalence (seeded from the generator
/// config), run both filter banks, and account all four pipelines.
std::vector<ScenarioRow> scenario_sweep(const EnergyConfig& config,
                                        std::span<const double> prevalences,
                                        const FilterBank& filters,
                                        const GenConfig& gen_template,
                                        long long n_frames);

}  // namespace fusim
