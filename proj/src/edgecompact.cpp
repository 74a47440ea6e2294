#include "fusim/edgecompact.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

#include "fusim/metrics.hpp"

namespace fusim {

using nlohmann::json;

namespace {

int scaled_width(int w, double s) {
  return std::max(1, static_cast<int>(std::llround(w * s)));
}

// Rebuild a head spec with the given first hidden width (0 keeps the head a
// single linear layer).
MlpSpec head_with_hidden(const MlpSpec& shape, int input, int h1) {
  MlpSpec out;
  out.layer_widths.push_back(input);
  if (h1 > 0) {
    out.layer_widths.push_back(h1);
    for (std::size_t i = 2; i + 1 < shape.layer_widths.size(); ++i)
      out.layer_widths.push_back(shape.layer_widths[i]);
  }
  out.layer_widths.push_back(shape.layer_widths.back());
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

EdgeSpecPair make_edge_spec_pair(const FusionSpec& server_spec, double size_ratio) {
  server_spec.validate();
  if (!(size_ratio > 0 && size_ratio <= 1))
    throw ConfigError("size_ratio must be in (0, 1]");
  if (server_spec.head.layer_widths.size() < 3)
    throw ConfigError("server head needs a hidden layer to shrink and match");

  double s = std::sqrt(size_ratio);
  std::size_t server_params = server_spec.param_count();
  double target = size_ratio * static_cast<double>(server_params);
  int n_mod = server_spec.n_modalities();

  std::vector<MlpSpec> ext;
  for (const MlpSpec& e : server_spec.extractors) {
    MlpSpec scaled;
    scaled.layer_widths.push_back(e.layer_widths.front());
    for (std::size_t i = 1; i + 1 < e.layer_widths.size(); ++i)
      scaled.layer_widths.push_back(scaled_width(e.layer_widths[i], s));
    scaled.layer_widths.push_back(scaled_width(e.layer_widths.back(), s));
    ext.push_back(scaled);
  }
  int emb_sum = 0;
  for (const auto& e : ext) emb_sum += e.output_width();

  int h1_nominal = scaled_width(server_spec.head.layer_widths[1], s);

  auto build = [&](int h1, bool with_scores) {
    FusionSpec spec;
    spec.extractors = ext;
    spec.score_slots = with_scores ? n_mod : 0;
    spec.decision_threshold = server_spec.decision_threshold;
    spec.head = head_with_hidden(server_spec.head,
                                 emb_sum + spec.score_slots, h1);
    return spec;
  };

  // Joint search: with-scores width aims at the target ratio, the baseline
  // width closes the parameter gap to within 1%.
  EdgeSpecPair best;
  double best_ratio_err = std::numeric_limits<double>::infinity();
  bool found = false;
  int lo = std::max(1, h1_nominal - 4);
  int hi = h1_nominal + 4;
  for (int hw = lo; hw <= hi; ++hw) {
    FusionSpec with = build(hw, true);
    double pw = static_cast<double>(with.param_count());
    for (int hb = 1; hb <= hi + 16; ++hb) {
      FusionSpec base = build(hb, false);
      double pb = static_cast<double>(base.param_count());
      double gap = std::abs(pw - pb) / std::max(pw, pb);
      if (gap > 0.01) continue;
      double ratio_err = std::abs(pw - target);
      if (ratio_err < best_ratio_err) {
        best_ratio_err = ratio_err;
        best.with_scores = with;
        best.baseline = base;
        best.actual_ratio_with = pw / static_cast<double>(server_params);
        best.actual_ratio_baseline = pb / static_cast<double>(server_params);
        found = true;
      }
    }
  }
  if (!found)
    throw ConfigError("no parameter-matched edge pair within 1% at ratio " +
                      fmt_double(size_ratio));
  return best;
}

EdgeInputs edge_inputs_for_frame(const Frame& frame,
                                 const FilterDecision& decision,
                                 bool uses_scores,
                                 FilteredScorePolicy policy) {
  EdgeInputs in;
  in.features.resize(frame.features.size());
  for (std::size_t m = 0; m < frame.features.size(); ++m)
    in.features[m] = decision.send[m]
                         ? frame.features[m]
                         : std::vector<double>(frame.features[m].size(), 0.0);
  if (uses_scores) {
    in.scores.resize(frame.features.size());
    for (std::size_t m = 0; m < frame.features.size(); ++m) {
      if (decision.send[m] || policy == FilteredScorePolicy::raw_score)
        in.scores[m] = decision.score[m];
      else
        in.scores[m] = 0.0;
    }
  }
  return in;
}

EdgeFusionModel train_edge_fusion(const Dataset& ds,
                                  const std::vector<NearSensorModel>& near_models,
                                  const FusionSpec& spec, const TrainConfig& cfg,
                                  bool uses_scores,
                                  double size_ratio,
                                  FilteredScorePolicy policy,
                                  const FusionTrainOptions& opt) {
  if (near_models.size() != static_cast<std::size_t>(ds.config.n_modalities()))
    throw ConfigError("train_edge_fusion: one near-sensor model per modality");
  if (uses_scores && spec.score_slots != ds.config.n_modalities())
    throw ConfigError("train_edge_fusion: spec lacks score slots");
  if (!uses_scores && spec.score_slots != 0)
    throw ConfigError("train_edge_fusion: baseline spec must not have score slots");

  std::vector<FusionExample> data;
  data.reserve(ds.train.size());
  for (const Frame& f : ds.train) {
    FilterDecision d = decide(near_models, f.features);
    EdgeInputs in = edge_inputs_for_frame(f, d, uses_scores, policy);
    FusionExample ex;
    ex.inputs = std::move(in.features);
    ex.scores = std::move(in.scores);
    ex.targets.assign(f.labels.begin(), f.labels.end());
    data.push_back(std::move(ex));
  }
  EdgeFusionModel m;
  m.fusion = train_fusion(spec, data, cfg, opt).model;
  m.uses_scores = uses_scores;
  m.size_ratio = size_ratio;
  m.score_policy = policy;

  // Compact models squeeze probabilities toward the base rate, so a fixed 0.5
  // cut can silence whole labels. Calibrate the scalar decision threshold on
  // the same validation split train_fusion held out.
  std::vector<std::size_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, "valsplit"));
  split_rng.shuffle(order);
  std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(order.size()) *
                                             cfg.validation_fraction)));
  std::vector<const Frame*> val;
  for (std::size_t i = order.size() - n_val; i < order.size(); ++i)
    val.push_back(&ds.train[order[i]]);

  double best_tau = m.fusion.spec.decision_threshold;
  double best_f1 = -1.0;
  std::vector<std::vector<std::uint8_t>> truth;
  std::vector<std::vector<double>> scores;
  for (const Frame* f : val) {
    truth.push_back(f->labels);
    FilterDecision d = decide(near_models, f->features);
    scores.push_back(edge_predict(m, *f, d).scores);
  }
  for (double tau : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
    std::vector<std::vector<std::uint8_t>> preds;
    preds.reserve(scores.size());
    for (const auto& s : scores) {
      std::vector<std::uint8_t> row(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) row[i] = s[i] >= tau ? 1 : 0;
      preds.push_back(std::move(row));
    }
    double f1 = macro_f1(preds, truth);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_tau = tau;
    }
  }
  m.fusion.spec.decision_threshold = best_tau;
  return m;
}

Prediction edge_predict(const EdgeFusionModel& m, const Frame& frame,
                        const FilterDecision& decision) {
  EdgeInputs in =
      edge_inputs_for_frame(frame, decision, m.uses_scores, m.score_policy);
  std::vector<std::uint8_t> keep_all(in.features.size(), 1);
  return predict(m.fusion, in.features, keep_all, in.scores);
}

double evaluate_edge_f1(const EdgeFusionModel& m,
                        const std::vector<NearSensorModel>& near_models,
                        std::span<const Frame> frames) {
  std::vector<std::vector<std::uint8_t>> preds;
  preds.reserve(frames.size());
  for (const Frame& f : frames) {
    FilterDecision d = decide(near_models, f.features);
    preds.push_back(edge_predict(m, f, d).decision);
  }
  return macro_f1(preds, label_matrix(frames));
}

std::vector<CompactRow> quality_loss_curve(std::span<const CompactSample> samples,
                                           std::size_t server_params) {
  if (samples.empty()) throw UsageError("quality_loss_curve: no samples");
  std::map<double, std::vector<const CompactSample*>> by_ratio;
  for (const CompactSample& s : samples) by_ratio[s.nominal_ratio].push_back(&s);

  std::vector<CompactRow> rows;
  for (auto& [ratio, group] : by_ratio) {
    if (group.size() < 2)
      throw UsageError("quality_loss_curve: need >= 2 seeds per ratio "
                       "(spread undefined)");
    CompactRow row;
    row.size_ratio = ratio;
    row.seed_count = static_cast<int>(group.size());
    row.params = group.front()->params_with;
    std::vector<double> fw, fb, qw, qb;
    for (const CompactSample* s : group) {
      fw.push_back(s->f1_with);
      fb.push_back(s->f1_baseline);
      if (s->f1_server <= 0)
        throw DataError("quality_loss_curve: server F1 must be positive");
      qw.push_back((s->f1_server - s->f1_with) / s->f1_server);
      qb.push_back((s->f1_server - s->f1_baseline) / s->f1_server);
    }
    row.f1_with_mean = mean_of(fw);
    row.f1_with_sd = sd_of(fw);
    row.f1_baseline_mean = mean_of(fb);
    row.f1_baseline_sd = sd_of(fb);
    row.quality_loss_with = mean_of(qw);
    row.quality_loss_with_sd = sd_of(qw);
    row.quality_loss_baseline = mean_of(qb);
    row.quality_loss_baseline_sd = sd_of(qb);
    rows.push_back(row);
  }
  (void)server_params;
  return rows;
}

EnergyPerParamMap EnergyPerParamMap::calibrate(std::size_t server_params,
                                               double reference_server_energy) {
  if (server_params == 0) throw ConfigError("cannot calibrate on 0 parameters");
  if (reference_server_energy <= 0)
    throw ConfigError("reference_server_energy must be > 0");
  EnergyPerParamMap m;
  m.reference_server_energy = reference_server_energy;
  m.joules_per_parameter =
      reference_server_energy / static_cast<double>(server_params);
  return m;
}

void EnergyPerParamMap::validate() const {
  if (joules_per_parameter <= 0)
    throw ConfigError("joules_per_parameter must be > 0");
}

double params_to_energy(std::size_t count, const EnergyPerParamMap& map) {
  map.validate();
  return static_cast<double>(count) * map.joules_per_parameter;
}

void save_edge_fusion(const EdgeFusionModel& m, const std::filesystem::path& dir,
                      const std::string& stem) {
  save_fusion(m.fusion, dir, stem);
  json extra;
  extra["format"] = "fsedge";
  extra["version"] = 1;
  extra["uses_scores"] = m.uses_scores;
  extra["size_ratio"] = m.size_ratio;
  extra["score_policy"] =
      m.score_policy == FilteredScorePolicy::raw_score ? "raw_score" : "zero";
  extra["fusion"] = stem + ".fusion.json";
  std::ofstream f(dir / (stem + ".edge.json"));
  if (!f) throw DataError("cannot write edge manifest in " + dir.string());
  f << extra.dump(2) << "\n";
}

EdgeFusionModel load_edge_fusion(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw DataError("cannot open edge manifest: " + manifest_path.string());
  json extra;
  try {
    f >> extra;
  } catch (const json::exception& e) {
    throw DataError("bad edge manifest " + manifest_path.string() + ": " + e.what());
  }
  if (extra.value("format", "") != "fsedge" || extra.value("version", 0) != 1)
    throw DataError("unsupported edge manifest: " + manifest_path.string());
  EdgeFusionModel m;
  m.fusion = load_fusion(manifest_path.parent_path() /
                         extra.at("fusion").get<std::string>());
  m.uses_scores = extra.at("uses_scores").get<bool>();
  m.size_ratio = extra.at("size_ratio").get<double>();
  m.score_policy = extra.at("score_policy").get<std::string>() == "zero"
                       ? FilteredScorePolicy::zero
                       : FilteredScorePolicy::raw_score;
  return m;
}

}  // namespace fusim
