#include "fusim/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace fusim {

double macro_f1(const std::vector<std::vector<std::uint8_t>>& predictions,
                const std::vector<std::vector<std::uint8_t>>& labels) {
  if (predictions.size() != labels.size())
    throw ShapeError("macro_f1: row count mismatch");
  if (predictions.empty()) throw ShapeError("macro_f1: empty matrices");
  std::size_t n_labels = labels[0].size();
  if (n_labels == 0) throw ShapeError("macro_f1: zero label columns");
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i].size() != n_labels || labels[i].size() != n_labels)
      throw ShapeError("macro_f1: ragged rows");

  double sum = 0;
  for (std::size_t l = 0; l < n_labels; ++l) {
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      bool p = predictions[i][l] != 0;
      bool y = labels[i][l] != 0;
      if (p && y) ++tp;
      else if (p && !y) ++fp;
      else if (!p && y) ++fn;
    }
    double f1;
    if (tp + fp + fn == 0)
      f1 = 1.0;  // vacuous class
    else if (tp == 0)
      f1 = 0.0;
    else
      f1 = 2.0 * static_cast<double>(tp) /
           static_cast<double>(2 * tp + fp + fn);
    sum += f1;
  }
  return sum / static_cast<double>(n_labels);
}

std::vector<std::vector<std::uint8_t>> label_matrix(std::span<const Frame> frames) {
  std::vector<std::vector<std::uint8_t>> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back(f.labels);
  return out;
}

TradeoffRow evaluate_filtered(const FusionModel& server,
                              std::span<const Frame> frames,
                              const std::vector<FilterDecision>& decisions,
                              const std::vector<long long>& bytes_per_modality,
                              double f1_full, double tau) {
  if (frames.empty()) throw UsageError("evaluate_filtered: empty frame set");
  if (decisions.size() != frames.size())
    throw DataError("evaluate_filtered: decision missing for some frames");
  std::size_t n_mod = bytes_per_modality.size();
  if (n_mod != static_cast<std::size_t>(server.spec.n_modalities()))
    throw ShapeError("evaluate_filtered: byte map modality count mismatch");

  auto truth = label_matrix(frames);
  if (f1_full < 0) {
    std::vector<std::vector<std::uint8_t>> full_preds;
    full_preds.reserve(frames.size());
    std::vector<std::uint8_t> keep_all(n_mod, 1);
    for (const Frame& f : frames)
      full_preds.push_back(predict(server, f.features, keep_all).decision);
    f1_full = macro_f1(full_preds, truth);
  }
  if (f1_full <= 0)
    throw DataError("evaluate_filtered: full-input macro-F1 is zero; "
                    "quality loss is undefined");

  TradeoffRow row;
  row.tau = tau;
  row.f1_full = f1_full;
  row.sent_fraction.assign(n_mod, 0.0);
  long long per_frame_total = 0;
  for (long long b : bytes_per_modality) per_frame_total += b;
  row.bytes_total = per_frame_total * static_cast<long long>(frames.size());

  std::vector<std::vector<std::uint8_t>> preds;
  preds.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FilterDecision& d = decisions[i];
    if (d.send.size() != n_mod)
      throw DataError("evaluate_filtered: decision width mismatch at frame " +
                      std::to_string(frames[i].frame_id));
    bool any_sent = false;
    for (std::size_t m = 0; m < n_mod; ++m)
      if (d.send[m]) {
        any_sent = true;
        row.bytes_sent += bytes_per_modality[m];
        row.sent_fraction[m] += 1.0;
      }
    // Server inference is gated on at least one modality arriving; a frame
    // with nothing sent is decided all-negative without reaching the server.
    if (any_sent)
      preds.push_back(predict(server, frames[i].features, d.send).decision);
    else
      preds.emplace_back(server.spec.n_labels(), 0);
  }
  for (double& s : row.sent_fraction) s /= static_cast<double>(frames.size());
  row.f1_filtered = macro_f1(preds, truth);
  row.data_efficiency =
      1.0 - static_cast<double>(row.bytes_sent) / static_cast<double>(row.bytes_total);
  row.quality_loss = (row.f1_full - row.f1_filtered) / row.f1_full;
  return row;
}

std::vector<TradeoffRow> build_tradeoff_curve(
    const FusionModel& server, const std::vector<NearSensorModel>& filters,
    std::span<const Frame> frames, std::span<const double> tau_grid,
    const std::vector<long long>& bytes_per_modality) {
  if (tau_grid.empty()) throw UsageError("build_tradeoff_curve: empty tau grid");
  std::vector<double> grid(tau_grid.begin(), tau_grid.end());
  std::sort(grid.begin(), grid.end());

  // F1 on full inputs once, reused for every row.
  std::vector<std::uint8_t> keep_all(server.spec.n_modalities(), 1);
  std::vector<std::vector<std::uint8_t>> full_preds;
  for (const Frame& f : frames)
    full_preds.push_back(predict(server, f.features, keep_all).decision);
  double f1_full = macro_f1(full_preds, label_matrix(frames));

  std::vector<TradeoffRow> rows;
  rows.reserve(grid.size());
  for (double tau : grid) {
    auto decisions = decide_frames_at(filters, frames, tau);
    rows.push_back(
        evaluate_filtered(server, frames, decisions, bytes_per_modality, f1_full, tau));
  }
  return rows;
}

double interpolate_quality_loss(std::span<const TradeoffRow> rows,
                                double data_efficiency) {
  if (rows.empty()) throw UsageError("interpolate_quality_loss: no rows");
  // Efficiency is non-decreasing in tau; walk the polyline in tau order.
  std::vector<const TradeoffRow*> sorted;
  for (const auto& r : rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const TradeoffRow* a, const TradeoffRow* b) { return a->tau < b->tau; });
  if (data_efficiency <= sorted.front()->data_efficiency)
    return sorted.front()->quality_loss;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const TradeoffRow* lo = sorted[i - 1];
    const TradeoffRow* hi = sorted[i];
    if (data_efficiency <= hi->data_efficiency) {
      double span = hi->data_efficiency - lo->data_efficiency;
      if (span <= 0) return hi->quality_loss;
      double t = (data_efficiency - lo->data_efficiency) / span;
      return lo->quality_loss + t * (hi->quality_loss - lo->quality_loss);
    }
  }
  return sorted.back()->quality_loss;
}

}  // namespace fusim
