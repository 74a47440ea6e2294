#include "fusim/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace fusim {

namespace {

constexpr double kScoreEps = 1e-12;

double sigmoid(double z) {
  double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(s, kScoreEps, 1.0 - kScoreEps);
}

void check_input_width(const MlpModel& m, std::size_t got) {
  if (static_cast<int>(got) != m.spec.input_width())
    throw ShapeError("input width " + std::to_string(got) + " does not match spec width " +
                     std::to_string(m.spec.input_width()));
}

}  // namespace

void MlpSpec::validate() const {
  if (layer_widths.size() < 2)
    throw ConfigError("MlpSpec needs at least two layer widths");
  for (int w : layer_widths)
    if (w <= 0) throw ConfigError("MlpSpec layer widths must be positive");
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
    std::size_t in = static_cast<std::size_t>(layer_widths[l]);
    std::size_t out = static_cast<std::size_t>(layer_widths[l + 1]);
    n += in * out + out;
  }
  return n;
}

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

MlpModel init_model(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  MlpModel m;
  m.spec = spec;
  m.rng_seed = seed;
  Rng rng(derive_seed(seed, "init"));
  std::size_t layers = spec.layer_widths.size() - 1;
  m.weights.resize(layers);
  m.biases.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    std::size_t in = static_cast<std::size_t>(spec.layer_widths[l]);
    std::size_t out = static_cast<std::size_t>(spec.layer_widths[l + 1]);
    double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    m.weights[l].resize(in * out);
    for (double& w : m.weights[l]) w = rng.uniform(-limit, limit);
    m.biases[l].assign(out, 0.0);
  }
  return m;
}

ForwardCache forward_cached(const MlpModel& m, std::span<const double> input) {
  check_input_width(m, input.size());
  ForwardCache c;
  c.acts.resize(m.weights.size() + 1);
  c.acts[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    std::size_t in = static_cast<std::size_t>(m.spec.layer_widths[l]);
    std::size_t out = static_cast<std::size_t>(m.spec.layer_widths[l + 1]);
    const std::vector<double>& a = c.acts[l];
    std::vector<double>& next = c.acts[l + 1];
    next.resize(out);
    const double* w = m.weights[l].data();
    bool last = l + 1 == m.weights.size();
    for (std::size_t o = 0; o < out; ++o) {
      double z = m.biases[l][o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) z += row[i] * a[i];
      next[o] = last ? sigmoid(z) : (z > 0 ? z : 0.0);
    }
  }
  return c;
}

std::vector<double> forward(const MlpModel& m, std::span<const double> input) {
  return forward_cached(m, input).acts.back();
}

double bce_loss(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("bce_loss: score width " + std::to_string(scores.size()) +
                     " vs label width " + std::to_string(labels.size()));
  if (scores.empty()) throw ShapeError("bce_loss: empty vectors");
  double sum = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double s = scores[i];
    double y = labels[i];
    sum += -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
  }
  return sum / static_cast<double>(scores.size());
}

namespace {

Gradients backprop_impl(const MlpModel& m, const ForwardCache& c,
                        std::vector<double> delta) {
  // delta on entry is dLoss/dz for the output layer.
  Gradients g;
  std::size_t layers = m.weights.size();
  g.dw.resize(layers);
  g.db.resize(layers);
  for (std::size_t li = layers; li-- > 0;) {
    std::size_t in = static_cast<std::size_t>(m.spec.layer_widths[li]);
    std::size_t out = static_cast<std::size_t>(m.spec.layer_widths[li + 1]);
    const std::vector<double>& a_prev = c.acts[li];
    g.dw[li].resize(in * out);
    g.db[li] = delta;
    for (std::size_t o = 0; o < out; ++o) {
      double d = delta[o];
      double* dst = g.dw[li].data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dst[i] = d * a_prev[i];
    }
    std::vector<double> prev(in, 0.0);
    const double* w = m.weights[li].data();
    for (std::size_t o = 0; o < out; ++o) {
      double d = delta[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    if (li > 0) {
      // ReLU mask: activation > 0 iff pre-activation > 0.
      for (std::size_t i = 0; i < in; ++i)
        if (a_prev[i] <= 0) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
  g.dinput = std::move(delta);
  return g;
}

}  // namespace

Gradients backward_bce(const MlpModel& m, const ForwardCache& c,
                       std::span<const double> targets) {
  const std::vector<double>& s = c.acts.back();
  if (targets.size() != s.size())
    throw ShapeError("backward_bce: target width mismatch");
  std::vector<double> delta(s.size());
  double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) delta[i] = (s[i] - targets[i]) / n;
  return backprop_impl(m, c, std::move(delta));
}

Gradients backward(const MlpModel& m, const ForwardCache& c,
                   std::span<const double> dloss_dout) {
  const std::vector<double>& s = c.acts.back();
  if (dloss_dout.size() != s.size())
    throw ShapeError("backward: output gradient width mismatch");
  std::vector<double> delta(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    delta[i] = dloss_dout[i] * s[i] * (1.0 - s[i]);
  return backprop_impl(m, c, std::move(delta));
}

void accumulate(Gradients& acc, const Gradients& g) {
  if (acc.dw.empty()) {
    acc = g;
    return;
  }
  for (std::size_t l = 0; l < g.dw.size(); ++l) {
    for (std::size_t i = 0; i < g.dw[l].size(); ++i) acc.dw[l][i] += g.dw[l][i];
    for (std::size_t i = 0; i < g.db[l].size(); ++i) acc.db[l][i] += g.db[l][i];
  }
}

void scale(Gradients& g, double f) {
  for (auto& v : g.dw)
    for (double& x : v) x *= f;
  for (auto& v : g.db)
    for (double& x : v) x *= f;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
  if (!(lr_decay_gamma > 0 && lr_decay_gamma <= 1))
    throw ConfigError("lr_decay_gamma must be in (0, 1]");
  if (!(validation_fraction > 0 && validation_fraction < 1))
    throw ConfigError("validation_fraction must be in (0, 1)");
  if (adam_epsilon <= 0) throw ConfigError("adam_epsilon must be > 0");
}

double TrainConfig::lr_at(int epoch) const {
  return learning_rate * std::pow(lr_decay_gamma, epoch);
}

AdamState make_adam_state(const MlpModel& m) {
  AdamState st;
  st.mw.resize(m.weights.size());
  st.vw.resize(m.weights.size());
  st.mb.resize(m.biases.size());
  st.vb.resize(m.biases.size());
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    st.mw[l].assign(m.weights[l].size(), 0.0);
    st.vw[l].assign(m.weights[l].size(), 0.0);
    st.mb[l].assign(m.biases[l].size(), 0.0);
    st.vb[l].assign(m.biases[l].size(), 0.0);
  }
  return st;
}

void adam_step(MlpModel& m, AdamState& st, const Gradients& g, double lr,
               const TrainConfig& cfg) {
  st.step += 1;
  double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  auto update = [&](std::vector<double>& p, std::vector<double>& mm,
                    std::vector<double>& vv, const std::vector<double>& gr) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      mm[i] = b1 * mm[i] + (1.0 - b1) * gr[i];
      vv[i] = b2 * vv[i] + (1.0 - b2) * gr[i] * gr[i];
      double mhat = mm[i] / c1;
      double vhat = vv[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
  };
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    update(m.weights[l], st.mw[l], st.vw[l], g.dw[l]);
    update(m.biases[l], st.mb[l], st.vb[l], g.db[l]);
  }
}

TrainResult train(const MlpModel& init, const std::vector<TrainExample>& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  for (const auto& ex : data) {
    if (static_cast<int>(ex.input.size()) != init.spec.input_width())
      throw ConfigError("train: example input width mismatch");
    if (static_cast<int>(ex.target.size()) != init.spec.output_width())
      throw ConfigError("train: example target width mismatch");
  }

  std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, "valsplit"));
  split_rng.shuffle(order);
  std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(n) *
                                             cfg.validation_fraction)));
  if (n_val >= n)
    throw ConfigError("train: dataset too small for validation split");
  std::vector<std::size_t> tr(order.begin(), order.end() - n_val);
  std::vector<std::size_t> val(order.end() - n_val, order.end());

  MlpModel model = init;
  AdamState st = make_adam_state(model);

  auto eval_loss = [&](const std::vector<std::size_t>& idx) {
    double sum = 0;
    for (std::size_t i : idx)
      sum += bce_loss(forward(model, data[i].input), data[i].target);
    return sum / static_cast<double>(idx.size());
  };

  TrainResult res;
  res.log.best_val_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr_at(epoch);
    Rng sh(derive_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
    sh.shuffle(tr);
    double train_loss_sum = 0;
    for (std::size_t start = 0; start < tr.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop = std::min(tr.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Gradients acc;
      for (std::size_t k = start; k < stop; ++k) {
        const TrainExample& ex = data[tr[k]];
        ForwardCache c = forward_cached(model, ex.input);
        train_loss_sum += bce_loss(c.acts.back(), ex.target);
        accumulate(acc, backward_bce(model, c, ex.target));
      }
      scale(acc, 1.0 / static_cast<double>(stop - start));
      adam_step(model, st, acc, lr, cfg);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = train_loss_sum / static_cast<double>(tr.size());
    stats.val_loss = eval_loss(val);
    res.log.epochs.push_back(stats);
    if (stats.val_loss < res.log.best_val_loss) {
      res.log.best_val_loss = stats.val_loss;
      res.log.best_epoch = epoch;
      res.model = model;
    }
  }
  return res;
}

void save_mlp(const MlpModel& m, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for write: " + path.string());
  f << "fsmlp 1\n";
  f << "widths";
  for (int w : m.spec.layer_widths) f << ' ' << w;
  f << "\nseed " << m.rng_seed << "\n";
  f << "hidden relu\noutput sigmoid\n";
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    f << "W" << l;
    for (double w : m.weights[l]) f << ' ' << fmt_hex_double(w);
    f << "\nb" << l;
    for (double b : m.biases[l]) f << ' ' << fmt_hex_double(b);
    f << "\n";
  }
  if (!f) throw DataError("write failed: " + path.string());
}

MlpModel load_mlp(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open model file: " + path.string());
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(f, line))
      throw DataError(std::string("truncated model file (missing ") + what +
                      "): " + path.string());
    return split_ws(line);
  };
  auto header = next_line("magic");
  if (header.size() != 2 || header[0] != "fsmlp" || header[1] != "1")
    throw DataError("bad model file magic: " + path.string());
  auto widths = next_line("widths");
  if (widths.size() < 3 || widths[0] != "widths")
    throw DataError("bad widths line: " + path.string());
  MlpModel m;
  for (std::size_t i = 1; i < widths.size(); ++i)
    m.spec.layer_widths.push_back(static_cast<int>(parse_double(widths[i])));
  m.spec.validate();
  auto seed = next_line("seed");
  if (seed.size() != 2 || seed[0] != "seed")
    throw DataError("bad seed line: " + path.string());
  m.rng_seed = std::stoull(seed[1]);
  auto hid = next_line("hidden");
  if (hid.size() != 2 || hid[0] != "hidden" || hid[1] != "relu")
    throw DataError("unsupported hidden activation: " + path.string());
  auto out = next_line("output");
  if (out.size() != 2 || out[0] != "output" || out[1] != "sigmoid")
    throw DataError("unsupported output activation: " + path.string());
  std::size_t layers = m.spec.layer_widths.size() - 1;
  m.weights.resize(layers);
  m.biases.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    std::size_t in = static_cast<std::size_t>(m.spec.layer_widths[l]);
    std::size_t nout = static_cast<std::size_t>(m.spec.layer_widths[l + 1]);
    auto wline = next_line("weights");
    if (wline.size() != in * nout + 1 || wline[0] != "W" + std::to_string(l))
      throw DataError("bad weight line for layer " + std::to_string(l) + ": " +
                      path.string());
    m.weights[l].resize(in * nout);
    for (std::size_t i = 0; i < in * nout; ++i)
      m.weights[l][i] = parse_hex_double(wline[i + 1]);
    auto bline = next_line("biases");
    if (bline.size() != nout + 1 || bline[0] != "b" + std::to_string(l))
      throw DataError("bad bias line for layer " + std::to_string(l) + ": " +
                      path.string());
    m.biases[l].resize(nout);
    for (std::size_t i = 0; i < nout; ++i)
      m.biases[l][i] = parse_hex_double(bline[i + 1]);
  }
  return m;
}

}  // namespace fusim
