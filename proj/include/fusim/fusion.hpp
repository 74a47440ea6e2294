#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fusim/datagen.hpp"
#include "fusim/mlp.hpp"

namespace fusim {

/// Late-fusion topology: one extractor MLP per modality, embeddings
/// concatenated into a shared head. `score_slots` extra head inputs carry
/// per-modality auxiliary scores (0 for the server model, n_modalities for
/// the compact edge variant).
struct FusionSpec {
  std::vector<MlpSpec> extractors;
  MlpSpec head;
  double decision_threshold = 0.5;
  int score_slots = 0;

  void validate() const;
  int n_modalities() const { return static_cast<int>(extractors.size()); }
  int embedding_sum() const;
  int n_labels() const { return head.output_width(); }
  std::size_t param_count() const;
};

struct FusionModel {
  FusionSpec spec;
  std::vector<MlpModel> extractors;
  MlpModel head;

  std::size_t param_count() const;
};

/// Extractors seeded from derive(seed, "ext/<m>"), head from derive(seed, "head").
FusionModel init_fusion(const FusionSpec& spec, std::uint64_t seed);

/// One training example for the generic fusion loop: per-modality inputs
/// (already zero-filled where a modality is absent), optional score-slot
/// values, and the multi-label targets.
struct FusionExample {
  std::vector<std::vector<double>> inputs;
  std::vector<double> scores;
  std::vector<double> targets;
};

struct FusionTrainResult {
  FusionModel model;
  TrainLog log;
};

/// Composite-training knobs beyond the shared TrainConfig.
/// `modality_dropout` zeroes one uniformly-chosen modality's input on a
/// training visit with the given probability (targets unchanged, validation
/// always clean). The zero-fill ablation of the FoS step interrogates the
/// model's response to zeroed modalities, so the model has to have seen them:
/// without this exposure the zero vector is off-distribution for the
/// extractors and the ablation reads back noise.
struct FusionTrainOptions {
  double modality_dropout = 0.0;
};

/// End-to-end BCE training of extractors + head (joint Adam, per-epoch LR
/// decay, seeded shuffles, best-validation snapshot). Same contract as
/// nncore train(), lifted to the composite model.
FusionTrainResult train_fusion(const FusionSpec& spec,
                               const std::vector<FusionExample>& data,
                               const TrainConfig& cfg,
                               const FusionTrainOptions& opt = {});

/// Training step 1: supervised multi-label training on the train split,
/// full (unmasked) inputs apart from the dropout augmentation.
FusionModel train_server_fusion(const Dataset& ds, const FusionSpec& spec,
                                const TrainConfig& cfg,
                                const FusionTrainOptions& opt = {});

struct Prediction {
  std::vector<double> scores;
  std::vector<std::uint8_t> decision;
};

/// Masked forward: modalities with keep_mask 0 are replaced by zero vectors
/// of the right width before their extractor runs. decision_i is
/// [score_i >= decision_threshold].
Prediction predict(const FusionModel& m,
                   const std::vector<std::vector<double>>& features,
                   const std::vector<std::uint8_t>& keep_mask,
                   std::span<const double> score_inputs = {});

bool decision_equal(std::span<const std::uint8_t> a,
                    std::span<const std::uint8_t> b);

/// Serialized as a manifest (JSON) naming the component .mlp files, stored
/// alongside them: <stem>.fusion.json, <stem>.ext<i>.mlp, <stem>.head.mlp.
void save_fusion(const FusionModel& m, const std::filesystem::path& dir,
                 const std::string& stem);
FusionModel load_fusion(const std::filesystem::path& manifest_path);

}  // namespace fusim
