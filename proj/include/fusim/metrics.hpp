#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fusim/fusion.hpp"
#include "fusim/nearsensor.hpp"

namespace fusim {

/// Unweighted mean over labels of per-label F1. Convention for degenerate
/// columns: TP+FP+FN = 0 counts as 1.0 (vacuously correct), TP = 0 with any
/// FP or FN counts as 0.0.
double macro_f1(const std::vector<std::vector<std::uint8_t>>& predictions,
                const std::vector<std::vector<std::uint8_t>>& labels);

/// One operating point of the data-reduction/quality tradeoff.
struct TradeoffRow {
  double tau = 0;
  double data_efficiency = 0;  // fraction of total bytes filtered out
  double quality_loss = 0;     // (F1_full - F1_filtered) / F1_full
  std::vector<double> sent_fraction;
  double f1_full = 0;
  double f1_filtered = 0;
  long long bytes_sent = 0;
  long long bytes_total = 0;
};

/// Evaluate the server on zero-filled inputs per the filter decisions.
/// Server inference is gated on at least one modality arriving: a frame with
/// nothing sent is decided all-negative without a server pass, matching the
/// pipeline dataflow the energy model accounts for. Byte accounting is exact
/// integer arithmetic. Pass f1_full < 0 to have it computed from the
/// unmasked inputs here.
TradeoffRow evaluate_filtered(const FusionModel& server,
                              std::span<const Frame> frames,
                              const std::vector<FilterDecision>& decisions,
                              const std::vector<long long>& bytes_per_modality,
                              double f1_full = -1.0, double tau = 0.0);

/// One row per grid threshold; the grid is applied to every modality jointly.
/// Works for fusion-aware filters and the uni-modal baseline alike (they only
/// differ in how the models were trained).
std::vector<TradeoffRow> build_tradeoff_curve(
    const FusionModel& server, const std::vector<NearSensorModel>& filters,
    std::span<const Frame> frames, std::span<const double> tau_grid,
    const std::vector<long long>& bytes_per_modality);

/// Piecewise-linear interpolation of quality_loss at a target data_efficiency
/// along the curve (rows ordered by tau). Clamps outside the achieved range.
double interpolate_quality_loss(std::span<const TradeoffRow> rows,
                                double data_efficiency);

std::vector<std::vector<std::uint8_t>> label_matrix(std::span<const Frame> frames);

}  // namespace fusim
