#include "fusim/nearsensor.hpp"

#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace fusim {

using nlohmann::json;

namespace {

NearSensorModel train_filter(const Dataset& ds, int modality, const MlpSpec& spec,
                             const TrainConfig& cfg,
                             const std::vector<double>& labels) {
  if (modality < 0 || modality >= ds.config.n_modalities())
    throw ConfigError("modality index out of range");
  if (spec.output_width() != 1)
    throw ConfigError("near-sensor models have output width 1");
  if (spec.input_width() != ds.config.modalities[modality].feature_width)
    throw ConfigError("near-sensor spec input width != modality feature width");

  std::vector<TrainExample> data;
  data.reserve(ds.train.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    data.push_back({ds.train[i].features[modality], {labels[i]}});

  MlpModel init = init_model(spec, derive_seed(cfg.seed, "near/" + std::to_string(modality)));
  NearSensorModel ns;
  ns.modality = modality;
  ns.model = train(init, data, cfg).model;
  return ns;
}

}  // namespace

NearSensorModel train_near_sensor(const std::vector<FosRecord>& records,
                                  const Dataset& ds, int modality,
                                  const MlpSpec& spec, const TrainConfig& cfg) {
  std::unordered_map<long long, const FosRecord*> by_id;
  by_id.reserve(records.size());
  for (const FosRecord& r : records) by_id[r.frame_id] = &r;
  std::vector<double> labels;
  labels.reserve(ds.train.size());
  for (const Frame& f : ds.train) {
    auto it = by_id.find(f.frame_id);
    if (it == by_id.end())
      throw DataError("missing fos record for frame " + std::to_string(f.frame_id));
    const FosRecord& r = *it->second;
    if (modality < 0 || modality >= static_cast<int>(r.send_label.size()))
      throw DataError("fos record modality width too small");
    labels.push_back(static_cast<double>(r.send_label[modality]));
  }
  return train_filter(ds, modality, spec, cfg, labels);
}

NearSensorModel train_foi_filter(const Dataset& ds, int modality,
                                 const MlpSpec& spec, const TrainConfig& cfg) {
  std::vector<double> labels;
  labels.reserve(ds.train.size());
  for (const Frame& f : ds.train) labels.push_back(static_cast<double>(f.foi));
  return train_filter(ds, modality, spec, cfg, labels);
}

FilterDecision decide(const std::vector<NearSensorModel>& models,
                      const std::vector<std::vector<double>>& features) {
  if (models.size() != features.size())
    throw ShapeError("decide: one model per modality required");
  FilterDecision d;
  d.send.resize(models.size());
  d.score.resize(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    d.score[m] = forward(models[m].model, features[m])[0];
    d.send[m] = d.score[m] >= models[m].send_threshold ? 1 : 0;
  }
  return d;
}

FilterDecision decide_at(const std::vector<NearSensorModel>& models,
                         const std::vector<std::vector<double>>& features,
                         double tau) {
  FilterDecision d = decide(models, features);
  for (std::size_t m = 0; m < models.size(); ++m)
    d.send[m] = d.score[m] >= tau ? 1 : 0;
  return d;
}

std::vector<FilterDecision> decide_frames(const std::vector<NearSensorModel>& models,
                                          std::span<const Frame> frames) {
  std::vector<FilterDecision> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back(decide(models, f.features));
  return out;
}

std::vector<FilterDecision> decide_frames_at(const std::vector<NearSensorModel>& models,
                                             std::span<const Frame> frames,
                                             double tau) {
  std::vector<FilterDecision> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back(decide_at(models, f.features, tau));
  return out;
}

std::vector<SweepRow> sweep_thresholds(const std::vector<NearSensorModel>& models,
                                       std::span<const Frame> frames,
                                       std::span<const double> grid) {
  if (grid.empty()) throw UsageError("sweep_thresholds: empty threshold grid");
  if (frames.empty()) throw UsageError("sweep_thresholds: empty frame set");
  for (double tau : grid)
    if (!(tau >= 0 && tau <= 1))
      throw UsageError("sweep_thresholds: grid values must be in [0, 1]");
  // Score each frame once; thresholds reuse the scores.
  std::vector<std::vector<double>> scores(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i)
    scores[i] = decide(models, frames[i].features).score;
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double tau : grid) {
    SweepRow row;
    row.tau = tau;
    row.send_rate.assign(models.size(), 0.0);
    for (const auto& s : scores)
      for (std::size_t m = 0; m < models.size(); ++m)
        if (s[m] >= tau) row.send_rate[m] += 1.0;
    for (double& r : row.send_rate) r /= static_cast<double>(frames.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_near_sensor(const NearSensorModel& m, const std::filesystem::path& dir,
                      const std::string& stem) {
  std::filesystem::create_directories(dir);
  save_mlp(m.model, dir / (stem + ".mlp"));
  json manifest;
  manifest["format"] = "fsnear";
  manifest["version"] = 1;
  manifest["modality"] = m.modality;
  manifest["send_threshold"] = m.send_threshold;
  manifest["model"] = stem + ".mlp";
  std::ofstream f(dir / (stem + ".near.json"));
  if (!f) throw DataError("cannot write near-sensor manifest in " + dir.string());
  f << manifest.dump(2) << "\n";
}

NearSensorModel load_near_sensor(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw DataError("cannot open near-sensor manifest: " + manifest_path.string());
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    throw DataError("bad near-sensor manifest " + manifest_path.string() + ": " +
                    e.what());
  }
  if (manifest.value("format", "") != "fsnear" || manifest.value("version", 0) != 1)
    throw DataError("unsupported near-sensor manifest: " + manifest_path.string());
  NearSensorModel m;
  m.modality = manifest.at("modality").get<int>();
  m.send_threshold = manifest.at("send_threshold").get<double>();
  m.model = load_mlp(manifest_path.parent_path() /
                     manifest.at("model").get<std::string>());
  return m;
}

}  // namespace fusim
