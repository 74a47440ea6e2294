#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fusim/energy.hpp"

using namespace fusim;

namespace {

EnergyConfig reference_config() {
  EnergyConfig c;
  c.bytes_per_frame = {3072, 1024};
  c.e_sense = {1.5e-4, 1.5e-4};
  c.e_nearsensor_infer = {2e-5, 2e-5};
  c.e_compress = {1e-3, 1e-3};
  c.compression_ratio = 0.5;
  c.e_tx_per_byte = 1e-5;
  c.e_server_infer = 4e-3;
  c.foi_prevalence = 0.1;
  return c;
}

std::vector<FilterDecision> constant_decisions(long long n,
                                               std::vector<std::uint8_t> send) {
  FilterDecision d;
  d.send = std::move(send);
  d.score.assign(d.send.size(), 0.5);
  return std::vector<FilterDecision>(static_cast<std::size_t>(n), d);
}

}  // namespace

TEST_CASE("config validation") {
  EnergyConfig c = reference_config();
  CHECK_NOTHROW(c.validate());
  c.compression_ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = reference_config();
  c.e_sense = {1e-4};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = reference_config();
  c.e_tx_per_byte = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("pipeline name round-trip") {
  for (Pipeline p : {Pipeline::conventional, Pipeline::compression,
                     Pipeline::unimodal_filter, Pipeline::fusionsense})
    CHECK(pipeline_from_name(pipeline_name(p)) == p);
  CHECK_THROWS_AS(pipeline_from_name("bogus"), ConfigError);
}

TEST_CASE("conventional total with zeroed tx and server is pure sensing") {
  EnergyConfig c = reference_config();
  c.e_tx_per_byte = 0.0;
  c.e_server_infer = 0.0;
  EnergyBreakdown b = account_pipeline(Pipeline::conventional, nullptr, c, 500);
  CHECK(b.total == doctest::Approx(500 * (1.5e-4 + 1.5e-4)).epsilon(1e-12));
  CHECK(b.communication == 0.0);
  CHECK(b.server_compute == 0.0);
}

TEST_CASE("degenerate compression equals conventional") {
  EnergyConfig c = reference_config();
  c.compression_ratio = 1.0;
  c.e_compress = {0.0, 0.0};
  EnergyBreakdown conv = account_pipeline(Pipeline::conventional, nullptr, c, 777);
  EnergyBreakdown comp = account_pipeline(Pipeline::compression, nullptr, c, 777);
  CHECK(comp.total == doctest::Approx(conv.total).epsilon(1e-15));
  CHECK(comp.normalized_total == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("never-send filter pays sensing plus near-sensor inference only") {
  EnergyConfig c = reference_config();
  long long n = 1000;
  auto none = constant_decisions(n, {0, 0});
  EnergyBreakdown b = account_pipeline(Pipeline::fusionsense, &none, c, n);
  double expected = n * (1.5e-4 + 1.5e-4 + 2e-5 + 2e-5);
  CHECK(b.total == doctest::Approx(expected).epsilon(1e-12));
  CHECK(b.communication == 0.0);
  CHECK(b.server_compute == 0.0);
}

TEST_CASE("all-send filter is conventional plus near-sensor overhead, exactly") {
  EnergyConfig c = reference_config();
  long long n = 1234;
  auto all = constant_decisions(n, {1, 1});
  EnergyBreakdown conv = account_pipeline(Pipeline::conventional, nullptr, c, n);
  for (Pipeline p : {Pipeline::unimodal_filter, Pipeline::fusionsense}) {
    EnergyBreakdown b = account_pipeline(p, &all, c, n);
    double overhead = n * (2e-5 + 2e-5);
    CHECK(std::abs(b.total - (conv.total + overhead)) <=
          1e-9 * std::max(b.total, conv.total));
  }
}

TEST_CASE("totals are exactly the component sums") {
  EnergyConfig c = reference_config();
  long long n = 321;
  auto mixed = constant_decisions(n, {1, 0});
  for (auto [p, dec] :
       std::vector<std::pair<Pipeline, const std::vector<FilterDecision>*>>{
           {Pipeline::conventional, nullptr},
           {Pipeline::compression, nullptr},
           {Pipeline::unimodal_filter, &mixed},
           {Pipeline::fusionsense, &mixed}}) {
    EnergyBreakdown b = account_pipeline(p, dec, c, n);
    CHECK(b.total == b.sensing + b.near_compute + b.compression +
                         b.communication + b.server_compute);
  }
}

TEST_CASE("normalized totals are invariant to uniform scaling of constants") {
  EnergyConfig c = reference_config();
  EnergyConfig scaled = c;
  double k = 7.25;
  for (auto* v : {&scaled.e_sense, &scaled.e_nearsensor_infer, &scaled.e_compress})
    for (double& x : *v) x *= k;
  scaled.e_tx_per_byte *= k;
  scaled.e_server_infer *= k;
  long long n = 100;
  auto mixed = constant_decisions(n, {0, 1});
  for (auto [p, dec] :
       std::vector<std::pair<Pipeline, const std::vector<FilterDecision>*>>{
           {Pipeline::compression, nullptr}, {Pipeline::fusionsense, &mixed}}) {
    EnergyBreakdown a = account_pipeline(p, dec, c, n);
    EnergyBreakdown b = account_pipeline(p, dec, scaled, n);
    CHECK(b.normalized_total == doctest::Approx(a.normalized_total).epsilon(1e-12));
    CHECK(b.savings_ratio == doctest::Approx(a.savings_ratio).epsilon(1e-12));
  }
}

TEST_CASE("filter pipelines demand decisions, conventional normalizes to 1") {
  EnergyConfig c = reference_config();
  CHECK_THROWS_AS(account_pipeline(Pipeline::fusionsense, nullptr, c, 10),
                  UsageError);
  auto three = constant_decisions(3, {1, 1});
  CHECK_THROWS_AS(account_pipeline(Pipeline::unimodal_filter, &three, c, 10),
                  UsageError);
  EnergyBreakdown conv = account_pipeline(Pipeline::conventional, nullptr, c, 10);
  CHECK(conv.normalized_total == 1.0);
  CHECK(conv.savings_ratio == 1.0);
}

TEST_CASE("scenario_sweep validates prevalences and filter banks") {
  EnergyConfig c = reference_config();
  GenConfig gen;
  gen.modalities = {{"rgb", 8, 3072}, {"depth", 8, 1024}};
  FilterBank empty;
  std::vector<double> ok{0.05};
  CHECK_THROWS_AS(scenario_sweep(c, ok, empty, gen, 100), UsageError);
  FilterBank bank;
  MlpSpec ns;
  ns.layer_widths = {8, 1};
  for (int m = 0; m < 2; ++m) {
    NearSensorModel nm;
    nm.modality = m;
    nm.model = init_model(ns, m);
    bank.fos_filters.push_back(nm);
    bank.foi_filters.push_back(nm);
  }
  std::vector<double> bad{0.0};
  CHECK_THROWS_AS(scenario_sweep(c, bad, bank, gen, 100), ConfigError);
  auto rows = scenario_sweep(c, ok, bank, gen, 200);
  CHECK(rows.size() == 4);  // four pipelines at one prevalence
}
