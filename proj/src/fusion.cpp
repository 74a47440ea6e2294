#include "fusim/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace fusim {

using nlohmann::json;

void FusionSpec::validate() const {
  if (extractors.empty()) throw ConfigError("FusionSpec needs >= 1 extractor");
  for (const auto& e : extractors) e.validate();
  head.validate();
  if (score_slots < 0) throw ConfigError("score_slots must be >= 0");
  if (head.input_width() != embedding_sum() + score_slots)
    throw ConfigError("fusion head input width " +
                      std::to_string(head.input_width()) +
                      " != embedding sum " + std::to_string(embedding_sum()) +
                      " + score slots " + std::to_string(score_slots));
  if (!(decision_threshold > 0 && decision_threshold < 1))
    throw ConfigError("decision_threshold must be in (0, 1)");
}

int FusionSpec::embedding_sum() const {
  int sum = 0;
  for (const auto& e : extractors) sum += e.output_width();
  return sum;
}

std::size_t FusionSpec::param_count() const {
  std::size_t n = head.param_count();
  for (const auto& e : extractors) n += e.param_count();
  return n;
}

std::size_t FusionModel::param_count() const {
  std::size_t n = head.param_count();
  for (const auto& e : extractors) n += e.param_count();
  return n;
}

FusionModel init_fusion(const FusionSpec& spec, std::uint64_t seed) {
  spec.validate();
  FusionModel m;
  m.spec = spec;
  for (std::size_t i = 0; i < spec.extractors.size(); ++i)
    m.extractors.push_back(
        init_model(spec.extractors[i], derive_seed(seed, "ext/" + std::to_string(i))));
  m.head = init_model(spec.head, derive_seed(seed, "head"));
  return m;
}

namespace {

struct FusionCache {
  std::vector<ForwardCache> ext;
  ForwardCache head;
};

FusionCache fusion_forward(const FusionModel& m,
                           const std::vector<std::vector<double>>& inputs,
                           std::span<const double> scores) {
  int n_mod = m.spec.n_modalities();
  if (static_cast<int>(inputs.size()) != n_mod)
    throw ShapeError("fusion forward: modality count mismatch");
  if (static_cast<int>(scores.size()) != m.spec.score_slots)
    throw ShapeError("fusion forward: score slot count mismatch");
  FusionCache c;
  c.ext.reserve(inputs.size());
  std::vector<double> head_in;
  head_in.reserve(static_cast<std::size_t>(m.spec.head.input_width()));
  for (int i = 0; i < n_mod; ++i) {
    c.ext.push_back(forward_cached(m.extractors[i], inputs[i]));
    const auto& emb = c.ext.back().acts.back();
    head_in.insert(head_in.end(), emb.begin(), emb.end());
  }
  head_in.insert(head_in.end(), scores.begin(), scores.end());
  c.head = forward_cached(m.head, head_in);
  return c;
}

struct FusionAdam {
  std::vector<AdamState> ext;
  AdamState head;
};

}  // namespace

FusionTrainResult train_fusion(const FusionSpec& spec,
                               const std::vector<FusionExample>& data,
                               const TrainConfig& cfg,
                               const FusionTrainOptions& opt) {
  spec.validate();
  cfg.validate();
  if (!(opt.modality_dropout >= 0 && opt.modality_dropout < 1))
    throw ConfigError("modality_dropout must be in [0, 1)");
  if (data.empty()) throw ConfigError("train_fusion: empty dataset");
  for (const auto& ex : data) {
    if (static_cast<int>(ex.inputs.size()) != spec.n_modalities())
      throw ConfigError("train_fusion: modality count mismatch in example");
    for (int m = 0; m < spec.n_modalities(); ++m)
      if (static_cast<int>(ex.inputs[m].size()) != spec.extractors[m].input_width())
        throw ConfigError("train_fusion: input width mismatch in example");
    if (static_cast<int>(ex.scores.size()) != spec.score_slots)
      throw ConfigError("train_fusion: score slot mismatch in example");
    if (static_cast<int>(ex.targets.size()) != spec.n_labels())
      throw ConfigError("train_fusion: target width mismatch in example");
  }

  FusionModel model = init_fusion(spec, derive_seed(cfg.seed, "init"));
  FusionAdam st;
  st.head = make_adam_state(model.head);
  for (const auto& e : model.extractors) st.ext.push_back(make_adam_state(e));

  std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, "valsplit"));
  split_rng.shuffle(order);
  std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(n) *
                                             cfg.validation_fraction)));
  if (n_val >= n)
    throw ConfigError("train_fusion: dataset too small for validation split");
  std::vector<std::size_t> tr(order.begin(), order.end() - n_val);
  std::vector<std::size_t> val(order.begin() + (n - n_val), order.end());

  auto example_loss = [&](const FusionExample& ex) {
    FusionCache c = fusion_forward(model, ex.inputs, ex.scores);
    return bce_loss(c.head.acts.back(), ex.targets);
  };

  FusionTrainResult res;
  res.log.best_val_loss = std::numeric_limits<double>::infinity();
  int n_mod = spec.n_modalities();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr_at(epoch);
    Rng sh(derive_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
    sh.shuffle(tr);
    Rng drop_rng(derive_seed(cfg.seed, "moddrop/" + std::to_string(epoch)));
    double train_loss_sum = 0;
    for (std::size_t start = 0; start < tr.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop =
          std::min(tr.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Gradients head_acc;
      std::vector<Gradients> ext_acc(n_mod);
      FusionExample dropped;
      for (std::size_t k = start; k < stop; ++k) {
        const FusionExample* exp = &data[tr[k]];
        if (opt.modality_dropout > 0 && drop_rng.bernoulli(opt.modality_dropout)) {
          dropped = *exp;
          std::size_t victim = drop_rng.index(dropped.inputs.size());
          std::fill(dropped.inputs[victim].begin(), dropped.inputs[victim].end(), 0.0);
          exp = &dropped;
        }
        const FusionExample& ex = *exp;
        FusionCache c = fusion_forward(model, ex.inputs, ex.scores);
        train_loss_sum += bce_loss(c.head.acts.back(), ex.targets);
        Gradients hg = backward_bce(model.head, c.head, ex.targets);
        // Slice the head's input gradient back into per-modality embedding
        // gradients; score-slot gradients are dropped (one-directional).
        std::size_t off = 0;
        for (int m = 0; m < n_mod; ++m) {
          std::size_t w = static_cast<std::size_t>(spec.extractors[m].output_width());
          std::span<const double> demb(hg.dinput.data() + off, w);
          accumulate(ext_acc[m], backward(model.extractors[m], c.ext[m], demb));
          off += w;
        }
        accumulate(head_acc, hg);
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      scale(head_acc, inv);
      adam_step(model.head, st.head, head_acc, lr, cfg);
      for (int m = 0; m < n_mod; ++m) {
        scale(ext_acc[m], inv);
        adam_step(model.extractors[m], st.ext[m], ext_acc[m], lr, cfg);
      }
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = train_loss_sum / static_cast<double>(tr.size());
    double vsum = 0;
    for (std::size_t i : val) vsum += example_loss(data[i]);
    stats.val_loss = vsum / static_cast<double>(val.size());
    res.log.epochs.push_back(stats);
    if (stats.val_loss < res.log.best_val_loss) {
      res.log.best_val_loss = stats.val_loss;
      res.log.best_epoch = epoch;
      res.model = model;
    }
  }
  return res;
}

FusionModel train_server_fusion(const Dataset& ds, const FusionSpec& spec,
                                const TrainConfig& cfg,
                                const FusionTrainOptions& opt) {
  if (spec.score_slots != 0)
    throw ConfigError("server fusion model takes no score slots");
  if (spec.n_modalities() != ds.config.n_modalities())
    throw ConfigError("server fusion spec modality count != dataset");
  if (spec.n_labels() != ds.config.n_labels)
    throw ConfigError("server fusion label width != dataset n_labels");
  std::vector<FusionExample> data;
  data.reserve(ds.train.size());
  for (const Frame& f : ds.train) {
    FusionExample ex;
    ex.inputs = f.features;
    ex.targets.assign(f.labels.begin(), f.labels.end());
    data.push_back(std::move(ex));
  }
  return train_fusion(spec, data, cfg, opt).model;
}

Prediction predict(const FusionModel& m,
                   const std::vector<std::vector<double>>& features,
                   const std::vector<std::uint8_t>& keep_mask,
                   std::span<const double> score_inputs) {
  int n_mod = m.spec.n_modalities();
  if (static_cast<int>(features.size()) != n_mod)
    throw ShapeError("predict: modality count mismatch");
  if (static_cast<int>(keep_mask.size()) != n_mod)
    throw ShapeError("predict: mask width mismatch");
  std::vector<std::vector<double>> masked(features.size());
  for (int i = 0; i < n_mod; ++i) {
    if (static_cast<int>(features[i].size()) != m.spec.extractors[i].input_width())
      throw ShapeError("predict: feature width mismatch for modality " +
                       std::to_string(i));
    masked[i] = keep_mask[i]
                    ? features[i]
                    : std::vector<double>(features[i].size(), 0.0);
  }
  FusionCache c = fusion_forward(m, masked, score_inputs);
  Prediction p;
  p.scores = c.head.acts.back();
  p.decision.resize(p.scores.size());
  for (std::size_t i = 0; i < p.scores.size(); ++i)
    p.decision[i] = p.scores[i] >= m.spec.decision_threshold ? 1 : 0;
  return p;
}

bool decision_equal(std::span<const std::uint8_t> a,
                    std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw ShapeError("decision_equal: width mismatch");
  return std::equal(a.begin(), a.end(), b.begin());
}

void save_fusion(const FusionModel& m, const std::filesystem::path& dir,
                 const std::string& stem) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "fsfusion";
  manifest["version"] = 1;
  manifest["decision_threshold"] = m.spec.decision_threshold;
  manifest["score_slots"] = m.spec.score_slots;
  std::vector<std::string> ext_files;
  for (std::size_t i = 0; i < m.extractors.size(); ++i) {
    std::string name = stem + ".ext" + std::to_string(i) + ".mlp";
    save_mlp(m.extractors[i], dir / name);
    ext_files.push_back(name);
  }
  manifest["extractors"] = ext_files;
  std::string head_name = stem + ".head.mlp";
  save_mlp(m.head, dir / head_name);
  manifest["head"] = head_name;
  std::ofstream f(dir / (stem + ".fusion.json"));
  if (!f) throw DataError("cannot write fusion manifest in " + dir.string());
  f << manifest.dump(2) << "\n";
}

FusionModel load_fusion(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw DataError("cannot open fusion manifest: " + manifest_path.string());
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    throw DataError("bad fusion manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "fsfusion" || manifest.value("version", 0) != 1)
    throw DataError("unsupported fusion manifest: " + manifest_path.string());
  FusionModel m;
  auto dir = manifest_path.parent_path();
  for (const auto& name : manifest.at("extractors")) {
    m.extractors.push_back(load_mlp(dir / name.get<std::string>()));
    m.spec.extractors.push_back(m.extractors.back().spec);
  }
  m.head = load_mlp(dir / manifest.at("head").get<std::string>());
  m.spec.head = m.head.spec;
  m.spec.decision_threshold = manifest.at("decision_threshold").get<double>();
  m.spec.score_slots = manifest.value("score_slots", 0);
  m.spec.validate();
  return m;
}

}  // namespace fusim
