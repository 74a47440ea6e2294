#include "fusim/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fusim {

namespace {

// Probability that each label bit is set when drawing a FoI label subset
// (redrawn until nonempty).
constexpr double kLabelRate = 0.30;

// Norm of each label template after orthogonalization. Together with
// noise_sigma this sets the per-label SNR of the stream.
constexpr double kTemplateNorm = 2.0;

std::vector<std::uint8_t> parse_bits(const std::string& s) {
  std::vector<std::uint8_t> out;
  out.reserve(s.size());
  for (char c : s) {
    if (c != '0' && c != '1') throw DataError("malformed bit string: " + s);
    out.push_back(c == '1' ? 1 : 0);
  }
  return out;
}

std::string bits_to_string(std::span<const std::uint8_t> bits) {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

}  // namespace

void GenConfig::validate() const {
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (modalities.empty()) throw ConfigError("at least one modality required");
  for (const auto& m : modalities) {
    if (m.feature_width < 1) throw ConfigError("feature widths must be >= 1");
    if (m.bytes_per_frame < 0) throw ConfigError("bytes_per_frame must be >= 0");
    if (m.name.empty()) throw ConfigError("modality names must be nonempty");
  }
  if (n_labels < 1) throw ConfigError("n_labels must be >= 1");
  if (!(foi_prevalence > 0 && foi_prevalence < 1))
    throw ConfigError("foi_prevalence must be in (0, 1)");
  if (!(redundancy >= 0 && redundancy <= 1))
    throw ConfigError("redundancy must be in [0, 1]");
  if (!(corruption_rate >= 0 && corruption_rate < 1))
    throw ConfigError("corruption_rate must be in [0, 1)");
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  if (!(train_fraction > 0 && train_fraction < 1))
    throw ConfigError("train_fraction must be in (0, 1)");
}

std::vector<long long> GenConfig::bytes_per_modality() const {
  std::vector<long long> out;
  out.reserve(modalities.size());
  for (const auto& m : modalities) out.push_back(m.bytes_per_frame);
  return out;
}

std::vector<std::vector<std::vector<double>>> make_templates(const GenConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "templates"));
  std::vector<std::vector<std::vector<double>>> t(cfg.modalities.size());
  for (std::size_t m = 0; m < cfg.modalities.size(); ++m) {
    int width = cfg.modalities[m].feature_width;
    if (width < cfg.n_labels)
      throw ConfigError("feature_width must be >= n_labels so label templates "
                        "can be mutually orthogonal");
    t[m].resize(cfg.n_labels);
    // Gram-Schmidt over random gaussian draws, each scaled to kTemplateNorm;
    // orthogonal templates keep label signals from bleeding into each other.
    for (int l = 0; l < cfg.n_labels; ++l) {
      std::vector<double>& v = t[m][l];
      double norm = 0;
      while (norm < 1e-6) {
        v.resize(width);
        for (double& x : v) x = rng.gaussian();
        for (int k = 0; k < l; ++k) {
          double dot = 0;
          for (int i = 0; i < width; ++i) dot += v[i] * t[m][k][i];
          dot /= kTemplateNorm * kTemplateNorm;
          for (int i = 0; i < width; ++i) v[i] -= dot * t[m][k][i];
        }
        norm = 0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
      }
      for (double& x : v) x *= kTemplateNorm / norm;
    }
  }
  return t;
}

std::vector<Frame> generate_frames(const GenConfig& cfg) {
  cfg.validate();
  auto templates = make_templates(cfg);
  Rng rng(cfg.stream_seed ? cfg.stream_seed : derive_seed(cfg.seed, "frames"));
  int n_mod = cfg.n_modalities();

  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(cfg.n_frames));
  for (long long id = 0; id < cfg.n_frames; ++id) {
    Frame f;
    f.frame_id = id;
    f.labels.assign(cfg.n_labels, 0);
    f.corrupted.assign(n_mod, 0);
    f.signal_in.assign(n_mod, 0);
    f.foi = rng.bernoulli(cfg.foi_prevalence) ? 1 : 0;
    if (f.foi) {
      bool any = false;
      while (!any) {
        for (int l = 0; l < cfg.n_labels; ++l) {
          f.labels[l] = rng.bernoulli(kLabelRate) ? 1 : 0;
          any = any || f.labels[l];
        }
      }
      if (rng.bernoulli(cfg.redundancy)) {
        std::fill(f.signal_in.begin(), f.signal_in.end(), 1);
      } else {
        f.signal_in[rng.index(static_cast<std::size_t>(n_mod))] = 1;
      }
    }
    f.features.resize(n_mod);
    for (int m = 0; m < n_mod; ++m) {
      int width = cfg.modalities[m].feature_width;
      std::vector<double>& x = f.features[m];
      x.assign(width, 0.0);
      if (f.signal_in[m]) {
        for (int l = 0; l < cfg.n_labels; ++l)
          if (f.labels[l])
            for (int i = 0; i < width; ++i) x[i] += templates[m][l][i];
      }
      for (int i = 0; i < width; ++i) x[i] += cfg.noise_sigma * rng.gaussian();
      if (cfg.corruption_rate > 0 && rng.bernoulli(cfg.corruption_rate)) {
        for (int i = 0; i < width; ++i) x[i] = cfg.noise_sigma * rng.gaussian();
        f.corrupted[m] = 1;
        f.signal_in[m] = 0;
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

Dataset generate(const GenConfig& cfg) {
  Dataset ds;
  ds.config = cfg;
  ds.templates = make_templates(cfg);
  std::vector<Frame> frames = generate_frames(cfg);
  auto n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(cfg.n_frames) * cfg.train_fraction));
  n_train = std::min(n_train, frames.size());
  ds.train.assign(frames.begin(), frames.begin() + static_cast<long>(n_train));
  ds.test.assign(frames.begin() + static_cast<long>(n_train), frames.end());
  return ds;
}

double empirical_foi_rate(std::span<const Frame> frames) {
  if (frames.empty()) throw UsageError("empirical_foi_rate: empty frame sequence");
  double sum = 0;
  for (const Frame& f : frames) sum += f.foi;
  return sum / static_cast<double>(frames.size());
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for write: " + path.string());
  const GenConfig& c = ds.config;
  f << "# fsdata 1\n";
  f << "# seed " << c.seed << "\n";
  f << "# stream_seed " << c.stream_seed << "\n";
  f << "# n_frames " << c.n_frames << "\n";
  f << "# modalities";
  for (const auto& m : c.modalities)
    f << ' ' << m.name << ':' << m.feature_width << ':' << m.bytes_per_frame;
  f << "\n";
  f << "# n_labels " << c.n_labels << "\n";
  f << "# foi_prevalence " << fmt_double(c.foi_prevalence) << "\n";
  f << "# redundancy " << fmt_double(c.redundancy) << "\n";
  f << "# corruption_rate " << fmt_double(c.corruption_rate) << "\n";
  f << "# noise_sigma " << fmt_double(c.noise_sigma) << "\n";
  f << "# train_fraction " << fmt_double(c.train_fraction) << "\n";
  auto write_frames = [&](std::span<const Frame> frames, const char* split) {
    for (const Frame& fr : frames) {
      f << fr.frame_id << ' ' << split << ' ' << int(fr.foi) << ' '
        << bits_to_string(fr.labels) << ' ' << bits_to_string(fr.corrupted);
      for (const auto& feat : fr.features) {
        f << ' ';
        for (std::size_t i = 0; i < feat.size(); ++i) {
          if (i) f << ',';
          f << fmt_double(feat[i]);
        }
      }
      f << "\n";
    }
  };
  write_frames(ds.train, "train");
  write_frames(ds.test, "test");
  if (!f) throw DataError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open dataset file: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "# fsdata 1")
    throw DataError("bad dataset file magic: " + path.string());

  Dataset ds;
  GenConfig& c = ds.config;
  c.modalities.clear();
  auto header_value = [&](const std::string& key) {
    if (!std::getline(f, line)) throw DataError("truncated dataset header");
    auto toks = split_ws(line);
    if (toks.size() < 3 || toks[0] != "#" || toks[1] != key)
      throw DataError("expected dataset header key '" + key + "', got: " + line);
    return std::vector<std::string>(toks.begin() + 2, toks.end());
  };
  c.seed = std::stoull(header_value("seed")[0]);
  c.stream_seed = std::stoull(header_value("stream_seed")[0]);
  c.n_frames = std::stoll(header_value("n_frames")[0]);
  for (const std::string& tok : header_value("modalities")) {
    std::istringstream is(tok);
    ModalityInfo m;
    std::string w, b;
    if (!std::getline(is, m.name, ':') || !std::getline(is, w, ':') ||
        !std::getline(is, b))
      throw DataError("malformed modality spec: " + tok);
    m.feature_width = std::stoi(w);
    m.bytes_per_frame = std::stoll(b);
    c.modalities.push_back(m);
  }
  c.n_labels = std::stoi(header_value("n_labels")[0]);
  c.foi_prevalence = parse_double(header_value("foi_prevalence")[0]);
  c.redundancy = parse_double(header_value("redundancy")[0]);
  c.corruption_rate = parse_double(header_value("corruption_rate")[0]);
  c.noise_sigma = parse_double(header_value("noise_sigma")[0]);
  c.train_fraction = parse_double(header_value("train_fraction")[0]);
  c.validate();

  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto toks = split_ws(line);
    if (toks.size() != 5 + c.modalities.size())
      throw DataError("malformed frame line: " + line);
    Frame fr;
    fr.frame_id = std::stoll(toks[0]);
    fr.foi = static_cast<std::uint8_t>(std::stoi(toks[2]));
    fr.labels = parse_bits(toks[3]);
    fr.corrupted = parse_bits(toks[4]);
    if (static_cast<int>(fr.labels.size()) != c.n_labels ||
        fr.corrupted.size() != c.modalities.size())
      throw DataError("frame bit widths do not match header: " + line);
    fr.features.resize(c.modalities.size());
    for (std::size_t m = 0; m < c.modalities.size(); ++m) {
      std::istringstream is(toks[5 + m]);
      std::string num;
      while (std::getline(is, num, ',')) fr.features[m].push_back(parse_double(num));
      if (static_cast<int>(fr.features[m].size()) != c.modalities[m].feature_width)
        throw DataError("feature width mismatch in frame line: " + line);
    }
    if (toks[1] == "train")
      ds.train.push_back(std::move(fr));
    else if (toks[1] == "test")
      ds.test.push_back(std::move(fr));
    else
      throw DataError("unknown split tag: " + toks[1]);
  }
  return ds;
}

}  // namespace fusim
