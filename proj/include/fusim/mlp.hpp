#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fusim/common.hpp"

namespace fusim {

/// Layer widths plus activation choices for a feed-forward network.
/// Hidden layers are ReLU, the output layer is sigmoid; scores are clamped
/// to [1e-12, 1 - 1e-12] so they stay strictly inside (0, 1).
struct MlpSpec {
  std::vector<int> layer_widths;

  enum class HiddenActivation { relu };
  enum class OutputActivation { sigmoid };
  HiddenActivation hidden_activation = HiddenActivation::relu;
  OutputActivation output_activation = OutputActivation::sigmoid;

  void validate() const;  // throws ConfigError
  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }

  // Sum over layers of (w_i * w_{i+1} + w_{i+1}).
  std::size_t param_count() const;
};

/// Parameter container. weights[l] is row-major (out x in): the weight from
/// input i to output o of layer l sits at weights[l][o * in + i].
struct MlpModel {
  MlpSpec spec;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::uint64_t rng_seed = 0;

  // Counts the actual stored parameters (spec.param_count() must agree).
  std::size_t param_count() const;
};

/// Seed-deterministic init: weights uniform in +-sqrt(6 / (fan_in + fan_out)),
/// biases zero. Equal (spec, seed) gives bitwise-equal parameters.
MlpModel init_model(const MlpSpec& spec, std::uint64_t seed);

std::vector<double> forward(const MlpModel& m, std::span<const double> input);

/// Post-activation values per layer; acts[0] is the input, acts.back() the
/// output scores. Enough to run backward (ReLU mask is act > 0).
struct ForwardCache {
  std::vector<std::vector<double>> acts;
};

ForwardCache forward_cached(const MlpModel& m, std::span<const double> input);

/// Mean over labels of -[y ln s + (1-y) ln(1-s)].
double bce_loss(std::span<const double> scores, std::span<const double> labels);

struct Gradients {
  std::vector<std::vector<double>> dw;
  std::vector<std::vector<double>> db;
  std::vector<double> dinput;
};

/// Backprop of bce_loss(forward(x), targets) w.r.t. all parameters and the
/// input. The sigmoid/BCE pair is folded into (s - y) / n for stability.
Gradients backward_bce(const MlpModel& m, const ForwardCache& c,
                       std::span<const double> targets);

/// Backprop from an arbitrary gradient w.r.t. the output activations
/// (composition hook for the fusion models).
Gradients backward(const MlpModel& m, const ForwardCache& c,
                   std::span<const double> dloss_dout);

void accumulate(Gradients& acc, const Gradients& g);
void scale(Gradients& g, double f);

struct TrainConfig {
  int epochs = 60;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double lr_decay_gamma = 0.95;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double validation_fraction = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
  // Effective rate at a given epoch: learning_rate * gamma^epoch.
  double lr_at(int epoch) const;
};

struct TrainExample {
  std::vector<double> input;
  std::vector<double> target;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_loss = 0;
};

struct TrainResult {
  MlpModel model;
  TrainLog log;
};

/// Adam with per-epoch exponential LR decay over mini-batches. The dataset is
/// split once (seeded) into train/validation; the snapshot with the lowest
/// validation loss is returned. Fully deterministic given (model, data, cfg).
TrainResult train(const MlpModel& init, const std::vector<TrainExample>& data,
                  const TrainConfig& cfg);

/// Per-layer Adam accumulators, exposed so composite models (fusion head +
/// extractors) can run their own training loops on the same update rule.
struct AdamState {
  std::vector<std::vector<double>> mw, vw, mb, vb;
  long step = 0;
};

AdamState make_adam_state(const MlpModel& m);
void adam_step(MlpModel& m, AdamState& st, const Gradients& g, double lr,
               const TrainConfig& cfg);

/// Versioned text format: header (magic, widths, seed, activations) followed
/// by one line per parameter array in hex-float, row-major. Exact round-trip.
void save_mlp(const MlpModel& m, const std::filesystem::path& path);
MlpModel load_mlp(const std::filesystem::path& path);

}  // namespace fusim
