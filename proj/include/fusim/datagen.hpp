#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fusim/common.hpp"

namespace fusim {

struct ModalityInfo {
  std::string name;
  int feature_width = 16;
  long long bytes_per_frame = 0;
};

/// Knobs for the synthetic correlated multimodal stream. `redundancy` is the
/// probability that a frame of interest embeds its label signal in every
/// modality instead of exactly one; `corruption_rate` replaces a modality's
/// features with pure noise for a frame.
struct GenConfig {
  long long n_frames = 4000;
  std::vector<ModalityInfo> modalities{{"rgb", 16, 3072}, {"depth", 16, 1024}};
  int n_labels = 6;
  double foi_prevalence = 0.10;
  double redundancy = 0.7;
  double corruption_rate = 0.05;
  double noise_sigma = 0.8;
  double train_fraction = 0.80;
  std::uint64_t seed = 1;
  // Frame-level randomness override; 0 derives it from `seed`. Label
  // templates always come from `seed`, so models trained on one stream
  // transfer to a reseeded stream of the same world (energy scenarios).
  std::uint64_t stream_seed = 0;

  void validate() const;
  int n_modalities() const { return static_cast<int>(modalities.size()); }
  std::vector<long long> bytes_per_modality() const;
};

/// One time-step. `signal_in` is generator metadata (which modalities carry
/// the label templates after corruption); it is not part of the export schema.
struct Frame {
  long long frame_id = 0;
  std::vector<std::vector<double>> features;
  std::vector<std::uint8_t> labels;
  std::uint8_t foi = 0;
  std::vector<std::uint8_t> corrupted;
  std::vector<std::uint8_t> signal_in;
};

struct Dataset {
  std::vector<Frame> train;
  std::vector<Frame> test;
  GenConfig config;
  // Per-(modality, label) signal templates; metadata for oracle checks.
  std::vector<std::vector<std::vector<double>>> templates;
};

/// Seeded template vectors shared by every frame of a dataset.
std::vector<std::vector<std::vector<double>>> make_templates(const GenConfig& cfg);

/// Generate an unsplit frame stream (used for energy scenario streams).
std::vector<Frame> generate_frames(const GenConfig& cfg);

/// Generate and split by train_fraction (train = leading frames).
Dataset generate(const GenConfig& cfg);

double empirical_foi_rate(std::span<const Frame> frames);

/// Line-delimited text export: a header with the config, then one line per
/// frame: id, split, foi, label bits, corrupted bits, per-modality features.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace fusim
