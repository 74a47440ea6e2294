#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fusim/fusion.hpp"
#include "fusim/metrics.hpp"

using namespace fusim;

namespace {

MlpSpec mlp_spec(std::vector<int> widths) {
  MlpSpec s;
  s.layer_widths = std::move(widths);
  return s;
}

FusionSpec small_fusion_spec(int feat = 8, int emb = 16, int labels = 6) {
  FusionSpec s;
  s.extractors = {mlp_spec({feat, 32, emb}), mlp_spec({feat, 32, emb})};
  s.head = mlp_spec({2 * emb, 16, labels});
  return s;
}

GenConfig easy_gen(double rho, double sigma, long long n = 1200) {
  GenConfig c;
  c.n_frames = n;
  c.modalities = {{"rgb", 8, 3072}, {"depth", 8, 1024}};
  c.redundancy = rho;
  c.noise_sigma = sigma;
  c.corruption_rate = 0.0;
  c.foi_prevalence = 0.35;
  c.seed = 11;
  return c;
}

TrainConfig quick_train(int epochs = 25, std::uint64_t seed = 5) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 16;
  tc.seed = seed;
  return tc;
}

std::vector<std::vector<std::uint8_t>> label_matrix(const std::vector<Frame>& fs) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const auto& f : fs) out.push_back(f.labels);
  return out;
}

// Template-correlation probe: label l is predicted active when some modality's
// features correlate strongly with that label's template. Independent of the
// MLP path; certifies the generated data is separable before we ask a trained
// model to separate it.
double linear_probe_f1(const Dataset& ds, const std::vector<Frame>& frames) {
  std::vector<std::vector<std::uint8_t>> preds;
  for (const Frame& f : frames) {
    std::vector<std::uint8_t> row(ds.config.n_labels, 0);
    for (int l = 0; l < ds.config.n_labels; ++l) {
      double best = 0;
      for (int m = 0; m < ds.config.n_modalities(); ++m) {
        const auto& t = ds.templates[m][l];
        double dot = 0, norm = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
          dot += f.features[m][i] * t[i];
          norm += t[i] * t[i];
        }
        best = std::max(best, dot / norm);
      }
      row[l] = best > 0.5 ? 1 : 0;
    }
    preds.push_back(std::move(row));
  }
  return macro_f1(preds, label_matrix(frames));
}

bool params_equal(const FusionModel& a, const FusionModel& b) {
  if (a.head.weights != b.head.weights || a.head.biases != b.head.biases)
    return false;
  for (std::size_t i = 0; i < a.extractors.size(); ++i)
    if (a.extractors[i].weights != b.extractors[i].weights ||
        a.extractors[i].biases != b.extractors[i].biases)
      return false;
  return true;
}

}  // namespace

TEST_CASE("spec validation enforces head width = embeddings + score slots") {
  FusionSpec s = small_fusion_spec();
  CHECK_NOTHROW(s.validate());
  s.head = mlp_spec({31, 10, 6});
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_fusion_spec();
  s.score_slots = 2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.head = mlp_spec({34, 10, 6});
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("param count equals brute-force enumeration") {
  FusionSpec s = small_fusion_spec();
  FusionModel m = init_fusion(s, 3);
  std::size_t brute = 0;
  for (const auto& e : m.extractors) {
    for (const auto& w : e.weights) brute += w.size();
    for (const auto& b : e.biases) brute += b.size();
  }
  for (const auto& w : m.head.weights) brute += w.size();
  for (const auto& b : m.head.biases) brute += b.size();
  CHECK(m.param_count() == brute);
  CHECK(s.param_count() == brute);
}

TEST_CASE("all-keep mask equals unmasked forward") {
  FusionModel m = init_fusion(small_fusion_spec(), 7);
  Rng rng(2);
  std::vector<std::vector<double>> feats(2, std::vector<double>(8));
  for (auto& f : feats)
    for (double& v : f) v = rng.gaussian();
  Prediction keep = predict(m, feats, {1, 1});
  // Manual unmasked forward through the pieces.
  std::vector<double> head_in;
  for (int i = 0; i < 2; ++i) {
    auto emb = forward(m.extractors[i], feats[i]);
    head_in.insert(head_in.end(), emb.begin(), emb.end());
  }
  auto scores = forward(m.head, head_in);
  CHECK(keep.scores == scores);
}

TEST_CASE("all-drop mask on a zero-bias model is a constant response") {
  FusionModel m = init_fusion(small_fusion_spec(), 9);
  for (auto& e : m.extractors)
    for (auto& b : e.biases) std::fill(b.begin(), b.end(), 0.0);
  for (auto& b : m.head.biases) std::fill(b.begin(), b.end(), 0.0);
  Rng rng(5);
  std::vector<std::vector<double>> f1(2, std::vector<double>(8));
  std::vector<std::vector<double>> f2(2, std::vector<double>(8));
  for (auto* fs : {&f1, &f2})
    for (auto& f : *fs)
      for (double& v : f) v = rng.gaussian();
  Prediction a = predict(m, f1, {0, 0});
  Prediction b = predict(m, f2, {0, 0});
  CHECK(a.scores == b.scores);
  CHECK(a.decision == b.decision);
}

TEST_CASE("masking an already-zero modality changes nothing") {
  FusionModel m = init_fusion(small_fusion_spec(), 13);
  Rng rng(8);
  std::vector<std::vector<double>> feats(2, std::vector<double>(8, 0.0));
  for (double& v : feats[1]) v = rng.gaussian();
  Prediction keep = predict(m, feats, {1, 1});
  Prediction drop0 = predict(m, feats, {0, 1});
  CHECK(keep.scores == drop0.scores);
}

TEST_CASE("raising the decision threshold only flips bits 1 to 0") {
  FusionModel m = init_fusion(small_fusion_spec(), 21);
  Rng rng(4);
  std::vector<std::vector<double>> feats(2, std::vector<double>(8));
  for (auto& f : feats)
    for (double& v : f) v = rng.gaussian();
  FusionModel lo = m, hi = m;
  lo.spec.decision_threshold = 0.3;
  hi.spec.decision_threshold = 0.7;
  auto dlo = predict(lo, feats, {1, 1}).decision;
  auto dhi = predict(hi, feats, {1, 1}).decision;
  for (std::size_t i = 0; i < dlo.size(); ++i)
    CHECK(dhi[i] <= dlo[i]);
}

TEST_CASE("predict validates widths") {
  FusionModel m = init_fusion(small_fusion_spec(), 1);
  std::vector<std::vector<double>> feats(2, std::vector<double>(8, 0.0));
  CHECK_THROWS_AS(predict(m, feats, {1}), ShapeError);
  feats[0].resize(5);
  CHECK_THROWS_AS(predict(m, feats, {1, 1}), ShapeError);
  std::vector<std::vector<double>> one(1, std::vector<double>(8, 0.0));
  CHECK_THROWS_AS(predict(m, one, {1}), ShapeError);
}

TEST_CASE("decision_equal") {
  std::vector<std::uint8_t> a{1, 0, 0, 0, 0, 0};
  std::vector<std::uint8_t> b{1, 0, 0, 0, 0, 0};
  std::vector<std::uint8_t> c{0, 0, 0, 0, 0, 0};
  std::vector<std::uint8_t> z6(6, 0);
  CHECK(decision_equal(a, b));
  CHECK_FALSE(decision_equal(a, c));
  CHECK(decision_equal(c, z6));
  std::vector<std::uint8_t> short_vec{1, 0};
  CHECK_THROWS_AS(decision_equal(a, short_vec), ShapeError);
}

TEST_CASE("training is seed-deterministic") {
  Dataset ds = generate(easy_gen(0.7, 0.5, 400));
  TrainConfig tc = quick_train(4);
  FusionModel a = train_server_fusion(ds, small_fusion_spec(), tc);
  FusionModel b = train_server_fusion(ds, small_fusion_spec(), tc);
  CHECK(params_equal(a, b));
}

TEST_CASE("zero-epoch guard: lr=0 leaves the model at chance") {
  Dataset ds = generate(easy_gen(1.0, 0.1, 400));
  TrainConfig tc = quick_train(1);
  tc.learning_rate = 0.0;
  FusionModel m = train_server_fusion(ds, small_fusion_spec(), tc);
  CHECK(params_equal(m, init_fusion(small_fusion_spec(), derive_seed(tc.seed, "init"))));
}

TEST_CASE("easy dataset (rho=1, sigma=0.1) trains to macro-F1 >= 0.90") {
  Dataset ds = generate(easy_gen(1.0, 0.1));
  // The probe oracle certifies separability first.
  CHECK(linear_probe_f1(ds, ds.test) >= 0.90);
  FusionModel m = train_server_fusion(ds, small_fusion_spec(), quick_train(30));
  std::vector<std::vector<std::uint8_t>> preds;
  for (const Frame& f : ds.test)
    preds.push_back(predict(m, f.features, {1, 1}).decision);
  double f1 = macro_f1(preds, label_matrix(ds.test));
  CHECK(f1 >= 0.90);
}

TEST_CASE("rho=0: masking the signal-bearing modality changes some decisions") {
  Dataset ds = generate(easy_gen(0.0, 0.1));
  FusionModel m = train_server_fusion(ds, small_fusion_spec(), quick_train(30));
  int rgb_only = 0, changed = 0;
  for (const Frame& f : ds.test) {
    if (!f.foi || !f.signal_in[0] || f.signal_in[1]) continue;
    ++rgb_only;
    Prediction full = predict(m, f.features, {1, 1});
    Prediction no_rgb = predict(m, f.features, {0, 1});
    if (!decision_equal(full.decision, no_rgb.decision)) ++changed;
  }
  REQUIRE(rgb_only > 10);
  // Signal lives only in RGB on these frames, so dropping RGB must flip
  // decisions on a clear majority of them.
  CHECK(changed > rgb_only / 2);
}

TEST_CASE("fusion save/load round-trip") {
  FusionModel m = init_fusion(small_fusion_spec(), 31);
  auto dir = std::filesystem::temp_directory_path() / "fusim_fusion_rt";
  save_fusion(m, dir, "server");
  FusionModel back = load_fusion(dir / "server.fusion.json");
  CHECK(params_equal(back, m));
  CHECK(back.spec.decision_threshold == m.spec.decision_threshold);
  CHECK(back.spec.score_slots == 0);
  std::filesystem::remove_all(dir);
}
