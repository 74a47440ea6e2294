// Acceptance suite: runs every release criterion against the shipped default
// configuration and prints one PASS/FAIL line per criterion. Exits nonzero if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fusim/experiment.hpp"

using namespace fusim;
namespace fs = std::filesystem;

#ifndef FUSIM_DEFAULT_CONFIG
#define FUSIM_DEFAULT_CONFIG "configs/default.json"
#endif

namespace {

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& details) {
  std::printf("%s criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name,
              details.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.5g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

// Canonical two-modality decision table.
struct Row {
  int foi, rgb, depth, rgb_label, depth_label;
};
constexpr Row kTable[8] = {
    {0, 0, 0, 0, 0}, {0, 0, 1, 0, 0}, {0, 1, 0, 0, 0}, {0, 1, 1, 0, 0},
    {1, 0, 0, 1, 1}, {1, 0, 1, 0, 1}, {1, 1, 0, 1, 0}, {1, 1, 1, 0, 1},
};

void criterion_1_truth_table() {
  Timer t;
  int mismatches = 0;
  for (const Row& row : kTable) {
    std::vector<std::uint8_t> droppable{static_cast<std::uint8_t>(row.depth),
                                        static_cast<std::uint8_t>(row.rgb)};
    std::vector<std::uint8_t> want{static_cast<std::uint8_t>(row.rgb_label),
                                   static_cast<std::uint8_t>(row.depth_label)};
    for (FosMode mode : {FosMode::table_verbatim, FosMode::droppability_rule}) {
      FosPolicy p = FosPolicy::defaults(2);
      p.mode = mode;
      if (augment_labels(row.foi != 0, droppable, p) != want) ++mismatches;
    }
  }
  report(1, "truth-table fidelity (8 rows, both modes)", mismatches == 0,
         std::to_string(16 - mismatches) + "/16 lookups exact, " + fmt(t.s()) + "s");
}

void criterion_2_safety() {
  Timer t;
  Rng rng(424242);
  int bad = 0;
  const int kTrials = 10000;
  for (int i = 0; i < kTrials; ++i) {
    int n = 2 + static_cast<int>(rng.index(3));
    bool foi = rng.bernoulli(0.5);
    std::vector<std::uint8_t> droppable(n);
    for (auto& d : droppable) d = rng.bernoulli(0.5) ? 1 : 0;
    FosPolicy p = FosPolicy::defaults(n);
    if (n == 2 && rng.bernoulli(0.5)) p.mode = FosMode::table_verbatim;
    auto send = augment_labels(foi, droppable, p);
    int sent = 0;
    for (auto s : send) sent += s;
    if (foi && sent < 1) ++bad;
    if (!foi && sent != 0) ++bad;
  }
  report(2, "safety invariant over 10000 randomized inputs", bad == 0,
         std::to_string(bad) + " violations, " + fmt(t.s()) + "s");
}

void criterion_3_gradients() {
  Timer t;
  Rng rng(20240911);
  long long total = 0, ok = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> widths;
    int layers = 2 + static_cast<int>(rng.index(2));
    widths.push_back(2 + static_cast<int>(rng.index(7)));
    for (int l = 0; l < layers; ++l)
      widths.push_back(1 + static_cast<int>(rng.index(8)));
    MlpSpec spec;
    spec.layer_widths = widths;
    MlpModel m = init_model(spec, 9000 + trial);
    std::vector<double> x(widths.front());
    for (double& v : x) v = rng.gaussian();
    std::vector<double> y(widths.back());
    for (double& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Gradients g = backward_bce(m, forward_cached(m, x), y);
    const double h = 1e-5;
    auto probe = [&](std::vector<double>& params, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        double saved = params[i];
        params[i] = saved + h;
        double lp = bce_loss(forward(m, x), y);
        params[i] = saved - h;
        double lm = bce_loss(forward(m, x), y);
        params[i] = saved;
        double fd = (lp - lm) / (2 * h);
        double an = grad[i];
        double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        ++total;
        if (rel <= 1e-4) ++ok;
      }
    };
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      probe(m.weights[l], g.dw[l]);
      probe(m.biases[l], g.db[l]);
    }
  }
  double rate = static_cast<double>(ok) / static_cast<double>(total);
  report(3, "finite-difference gradient agreement on 20 models", rate >= 0.99,
         fmt(100 * rate) + "% of " + std::to_string(total) + " coords, " +
             fmt(t.s()) + "s");
}

void criterion_4_fos_oracle(const TrainedSystem& sys) {
  Timer t;
  std::size_t n = std::min<std::size_t>(500, sys.dataset.test.size());
  int mismatches = 0;
  std::vector<std::uint8_t> keep_all(2, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const Frame& f = sys.dataset.test[i];
    auto got = derive_droppable(sys.server, f);
    auto base = predict(sys.server, f.features, keep_all).decision;
    std::vector<std::uint8_t> want(2);
    want[0] = decision_equal(base, predict(sys.server, f.features, {0, 1}).decision);
    want[1] = decision_equal(base, predict(sys.server, f.features, {1, 0}).decision);
    if (got != want) ++mismatches;
  }
  report(4, "FoS derivation equals brute-force re-prediction", mismatches == 0,
         std::to_string(n) + " frames bit-exact, " + fmt(t.s()) + "s");
}

void criterion_5_tradeoff(const TradeoffReport& rep) {
  double qf = mean_interpolated_ql(rep.fusion_aware, 0.30);
  double qu = mean_interpolated_ql(rep.unimodal, 0.30);
  bool pass = qf <= 0.5 * qu;
  report(5, "tradeoff dominance at 30% data efficiency", pass,
         "mean QL fusion-aware " + fmt(qf) + " vs unimodal " + fmt(qu) +
             " (bar 0.5x = " + fmt(0.5 * qu) + ")");
}

void criterion_6_energy(const EnergyReport& rep) {
  double s_conv = 0, s_comp = 0, s_uni = 0, s_fus = 0;
  std::vector<double> fus_by_p;
  for (const ScenarioRow& r : rep.rows) {
    if (std::abs(r.prevalence - 0.01) < 1e-12) {
      switch (r.breakdown.pipeline) {
        case Pipeline::conventional: s_conv = r.breakdown.savings_ratio; break;
        case Pipeline::compression: s_comp = r.breakdown.savings_ratio; break;
        case Pipeline::unimodal_filter: s_uni = r.breakdown.savings_ratio; break;
        case Pipeline::fusionsense: s_fus = r.breakdown.savings_ratio; break;
      }
    }
    if (r.breakdown.pipeline == Pipeline::fusionsense)
      fus_by_p.push_back(r.breakdown.savings_ratio);
  }
  bool ordering = s_fus > s_uni && s_uni > s_comp && s_comp > s_conv &&
                  std::abs(s_conv - 1.0) < 1e-12;
  bool margin = s_fus >= 1.2 * s_uni;
  bool monotone = true;
  for (std::size_t i = 1; i < fus_by_p.size(); ++i)
    if (fus_by_p[i] > fus_by_p[i - 1]) monotone = false;
  report(6, "energy ordering, 1.2x margin, monotone savings",
         ordering && margin && monotone,
         "at p=0.01 savings fus " + fmt(s_fus) + "x / uni " + fmt(s_uni) +
             "x / comp " + fmt(s_comp) + "x; fus across p: " + fmt(fus_by_p[0]) +
             " " + fmt(fus_by_p.size() > 1 ? fus_by_p[1] : 0) + " " +
             fmt(fus_by_p.size() > 2 ? fus_by_p[2] : 0));
}

void criterion_7_exactness(const ExperimentConfig& cfg) {
  Timer t;
  EnergyConfig ec = cfg.energy;
  ec.bytes_per_frame = cfg.gen.bytes_per_modality();
  long long n = 4321;
  FilterDecision all;
  all.send.assign(ec.bytes_per_frame.size(), 1);
  all.score.assign(ec.bytes_per_frame.size(), 1.0);
  std::vector<FilterDecision> decisions(static_cast<std::size_t>(n), all);
  EnergyBreakdown conv = account_pipeline(Pipeline::conventional, nullptr, ec, n);
  double overhead = 0;
  for (double e : ec.e_nearsensor_infer) overhead += e;
  overhead *= static_cast<double>(n);
  double worst = 0;
  for (Pipeline p : {Pipeline::unimodal_filter, Pipeline::fusionsense}) {
    EnergyBreakdown b = account_pipeline(p, &decisions, ec, n);
    double rel = std::abs(b.total - (conv.total + overhead)) /
                 std::max(b.total, conv.total);
    worst = std::max(worst, rel);
  }
  report(7, "all-send filter total = conventional + near-sensor overhead",
         worst <= 1e-9, "max rel err " + fmt(worst) + ", " + fmt(t.s()) + "s");
}

void criterion_8_compact(const CompactReport& rep) {
  bool f1_ok = true, params_ok = true;
  std::string detail;
  for (const CompactRow& r : rep.rows) {
    if (r.f1_with_mean < r.f1_baseline_mean) f1_ok = false;
    detail += "ratio " + fmt(r.size_ratio) + ": with " + fmt(r.f1_with_mean) +
              " vs base " + fmt(r.f1_baseline_mean) + " (" +
              std::to_string(r.seed_count) + " pairs); ";
  }
  for (const CompactSample& s : rep.samples) {
    double pw = static_cast<double>(s.params_with);
    double pb = static_cast<double>(s.params_baseline);
    if (std::abs(pw - pb) / std::max(pw, pb) > 0.01) params_ok = false;
  }
  if (!params_ok) detail += "parameter match beyond 1%; ";
  report(8, "score injection helps at matched parameters", f1_ok && params_ok,
         detail);
}

void criterion_9_one_directional(const ExperimentConfig& cfg,
                                 const TrainedSystem& sys) {
  Timer t;
  std::vector<std::vector<std::vector<double>>> before_w, before_b;
  for (const auto& f : sys.fos_filters) {
    before_w.push_back(f.model.weights);
    before_b.push_back(f.model.biases);
  }
  EdgeSpecPair pair = make_edge_spec_pair(cfg.server_spec(), cfg.size_ratios.front());
  TrainConfig te = cfg.train_edge.base;
  te.seed = derive_seed(sys.seed, "edge/onedir");
  train_edge_fusion(sys.dataset, sys.fos_filters, pair.with_scores, te, true,
                    pair.actual_ratio_with, cfg.filtered_score);
  bool unchanged = true;
  for (std::size_t m = 0; m < sys.fos_filters.size(); ++m) {
    if (sys.fos_filters[m].model.weights != before_w[m]) unchanged = false;
    if (sys.fos_filters[m].model.biases != before_b[m]) unchanged = false;
  }
  report(9, "near-sensor parameters bitwise unchanged by step-3 training",
         unchanged, fmt(t.s()) + "s");
}

void criterion_10_determinism(const ExperimentConfig& cfg_a, const fs::path& dir_a,
                              const fs::path& dir_b) {
  Timer t;
  ExperimentConfig cfg_b = cfg_a;
  cfg_b.output_dir = dir_b.string();
  cmd_train_all(cfg_b);
  cmd_tradeoff(cfg_b);
  bool same = true;
  std::string detail;
  for (const char* name : {"tradeoff_fusion_aware.csv", "tradeoff_unimodal.csv",
                           "tradeoff_summary.csv"}) {
    if (slurp(dir_a / name) != slurp(dir_b / name)) {
      same = false;
      detail += std::string(name) + " differs; ";
    }
  }
  report(10, "full rerun reproduces byte-identical CSV reports", same,
         detail + fmt(t.s()) + "s");
}

void criterion_11_macro_f1() {
  Timer t;
  using Matrix = std::vector<std::vector<std::uint8_t>>;
  Matrix labels{{1, 1}, {1, 0}, {0, 1}, {0, 0}};
  Matrix preds{{1, 1}, {0, 0}, {0, 1}, {0, 0}};
  bool hand = std::abs(macro_f1(preds, labels) - 5.0 / 6.0) < 1e-15;
  Matrix self{{1, 0}, {0, 1}, {1, 1}};
  bool perfect = macro_f1(self, self) == 1.0;
  Matrix complement = self;
  for (auto& row : complement)
    for (auto& b : row) b = b ? 0 : 1;
  bool zero = macro_f1(complement, self) == 0.0;
  report(11, "macro-F1 hand-computed 5/6 and 1.0/0.0 cases", hand && perfect && zero,
         fmt(t.s()) + "s");
}

}  // namespace

int main(int argc, char** argv) {
  std::string config_path = FUSIM_DEFAULT_CONFIG;
  if (argc > 1) config_path = argv[1];
  std::printf("acceptance suite, config %s\n", config_path.c_str());

  Timer total;
  criterion_1_truth_table();
  criterion_2_safety();
  criterion_3_gradients();
  criterion_7_exactness(ExperimentConfig::load(config_path));
  criterion_11_macro_f1();

  try {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    fs::path dir_a = fs::temp_directory_path() / "fusim_acceptance_a";
    fs::path dir_b = fs::temp_directory_path() / "fusim_acceptance_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    cfg.output_dir = dir_a.string();

    Timer train_t;
    cmd_train_all(cfg);
    std::printf("-- train-all done in %.1fs\n", train_t.s());

    TrainedSystem primary = load_system(cfg, cfg.seeds.front());
    criterion_4_fos_oracle(primary);

    Timer trade_t;
    TradeoffReport trade = cmd_tradeoff(cfg);
    std::printf("-- tradeoff done in %.1fs\n", trade_t.s());
    criterion_5_tradeoff(trade);

    Timer energy_t;
    EnergyReport energy = cmd_energy(cfg);
    std::printf("-- energy done in %.1fs\n", energy_t.s());
    criterion_6_energy(energy);

    Timer compact_t;
    CompactReport compact = cmd_compact(cfg);
    std::printf("-- compact done in %.1fs\n", compact_t.s());
    criterion_8_compact(compact);

    criterion_9_one_directional(cfg, primary);
    criterion_10_determinism(cfg, dir_a, dir_b);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
  } catch (const std::exception& e) {
    std::printf("FAIL pipeline criteria aborted: %s\n", e.what());
    g_failures += 1;
  }

  std::printf("%d criteria failed, total %.1fs\n", g_failures, total.s());
  return g_failures == 0 ? 0 : 1;
}
