#include "fusim/energy.hpp"

#include <cmath>

#include "fusim/datagen.hpp"

namespace fusim {

const char* pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::conventional: return "conventional";
    case Pipeline::compression: return "compression";
    case Pipeline::unimodal_filter: return "unimodal_filter";
    case Pipeline::fusionsense: return "fusionsense";
  }
  return "?";
}

Pipeline pipeline_from_name(const std::string& name) {
  for (Pipeline p : {Pipeline::conventional, Pipeline::compression,
                     Pipeline::unimodal_filter, Pipeline::fusionsense})
    if (name == pipeline_name(p)) return p;
  throw ConfigError("unknown pipeline: " + name);
}

void EnergyConfig::validate() const {
  if (bytes_per_frame.empty()) throw ConfigError("energy: no modalities");
  auto expect_size = [&](const std::vector<double>& v, const char* what) {
    if (v.size() != bytes_per_frame.size())
      throw ConfigError(std::string("energy: ") + what +
                        " must list one value per modality");
    for (double x : v)
      if (x < 0) throw ConfigError(std::string("energy: ") + what + " must be >= 0");
  };
  for (long long b : bytes_per_frame)
    if (b < 0) throw ConfigError("energy: bytes_per_frame must be >= 0");
  expect_size(e_sense, "e_sense");
  expect_size(e_nearsensor_infer, "e_nearsensor_infer");
  expect_size(e_compress, "e_compress");
  if (!(compression_ratio > 0 && compression_ratio <= 1))
    throw ConfigError("energy: compression_ratio must be in (0, 1]");
  if (e_tx_per_byte < 0 || e_server_infer < 0)
    throw ConfigError("energy: per-operation energies must be >= 0");
  if (!(foi_prevalence > 0 && foi_prevalence < 1))
    throw ConfigError("energy: foi_prevalence must be in (0, 1)");
}

std::map<std::string, double> EnergyBreakdown::component_map() const {
  return {{"sensing", sensing},
          {"near_compute", near_compute},
          {"compression", compression},
          {"communication", communication},
          {"server_compute", server_compute}};
}

namespace {

double conventional_total(const EnergyConfig& c, long long n_frames) {
  double sense = 0, tx = 0;
  for (std::size_t m = 0; m < c.bytes_per_frame.size(); ++m) {
    sense += c.e_sense[m];
    tx += static_cast<double>(c.bytes_per_frame[m]) * c.e_tx_per_byte;
  }
  double n = static_cast<double>(n_frames);
  return n * (sense + tx + c.e_server_infer);
}

}  // namespace

EnergyBreakdown account_pipeline(Pipeline pipeline,
                                 const std::vector<FilterDecision>* decisions,
                                 const EnergyConfig& config, long long n_frames) {
  config.validate();
  if (n_frames < 0) throw UsageError("account_pipeline: negative frame count");
  bool is_filter = pipeline == Pipeline::unimodal_filter ||
                   pipeline == Pipeline::fusionsense;
  if (is_filter) {
    if (decisions == nullptr)
      throw UsageError("account_pipeline: filter pipelines need decisions");
    if (static_cast<long long>(decisions->size()) != n_frames)
      throw UsageError("account_pipeline: one decision per frame required");
  }

  std::size_t n_mod = config.bytes_per_frame.size();
  double n = static_cast<double>(n_frames);
  EnergyBreakdown b;
  b.pipeline = pipeline;
  for (std::size_t m = 0; m < n_mod; ++m) b.sensing += config.e_sense[m];
  b.sensing *= n;

  switch (pipeline) {
    case Pipeline::conventional: {
      for (std::size_t m = 0; m < n_mod; ++m)
        b.communication += static_cast<double>(config.bytes_per_frame[m]) *
                           config.e_tx_per_byte;
      b.communication *= n;
      b.server_compute = n * config.e_server_infer;
      break;
    }
    case Pipeline::compression: {
      for (std::size_t m = 0; m < n_mod; ++m) {
        b.compression += config.e_compress[m];
        b.communication += static_cast<double>(config.bytes_per_frame[m]) *
                           config.compression_ratio * config.e_tx_per_byte;
      }
      b.compression *= n;
      b.communication *= n;
      b.server_compute = n * config.e_server_infer;
      break;
    }
    case Pipeline::unimodal_filter:
    case Pipeline::fusionsense: {
      for (std::size_t m = 0; m < n_mod; ++m)
        b.near_compute += config.e_nearsensor_infer[m];
      b.near_compute *= n;
      long long frames_with_send = 0;
      for (const FilterDecision& d : *decisions) {
        if (d.send.size() != n_mod)
          throw UsageError("account_pipeline: decision width mismatch");
        bool any = false;
        for (std::size_t m = 0; m < n_mod; ++m)
          if (d.send[m]) {
            any = true;
            b.communication += static_cast<double>(config.bytes_per_frame[m]) *
                               config.e_tx_per_byte;
          }
        if (any) ++frames_with_send;
      }
      b.server_compute = static_cast<double>(frames_with_send) * config.e_server_infer;
      break;
    }
  }

  b.total = b.sensing + b.near_compute + b.compression + b.communication +
            b.server_compute;
  if (pipeline == Pipeline::conventional) {
    b.normalized_total = 1.0;
    b.savings_ratio = 1.0;
  } else {
    double conv = conventional_total(config, n_frames);
    b.normalized_total = conv > 0 ? b.total / conv : 0.0;
    b.savings_ratio = b.total > 0 ? conv / b.total : 0.0;
  }
  return b;
}

std::vector<ScenarioRow> scenario_sweep(const EnergyConfig& config,
                                        std::span<const double> prevalences,
                                        const FilterBank& filters,
                                        const GenConfig& gen_template,
                                        long long n_frames) {
  config.validate();
  if (prevalences.empty()) throw UsageError("scenario_sweep: no prevalences");
  for (double p : prevalences)
    if (!(p > 0 && p < 1))
      throw ConfigError("scenario_sweep: prevalence must be in (0, 1)");
  if (filters.fos_filters.empty() || filters.foi_filters.empty())
    throw UsageError("scenario_sweep: trained filter banks required");

  std::vector<ScenarioRow> rows;
  for (std::size_t i = 0; i < prevalences.size(); ++i) {
    GenConfig gen = gen_template;
    gen.foi_prevalence = prevalences[i];
    gen.n_frames = n_frames;
    gen.stream_seed =
        derive_seed(gen_template.seed, "energy-stream/" + std::to_string(i));
    std::vector<Frame> stream = generate_frames(gen);

    auto fos_dec = decide_frames(filters.fos_filters, stream);
    auto foi_dec = decide_frames(filters.foi_filters, stream);

    EnergyConfig cfg = config;
    cfg.foi_prevalence = prevalences[i];
    for (Pipeline p : {Pipeline::conventional, Pipeline::compression,
                       Pipeline::unimodal_filter, Pipeline::fusionsense}) {
      const std::vector<FilterDecision>* dec = nullptr;
      if (p == Pipeline::unimodal_filter) dec = &foi_dec;
      if (p == Pipeline::fusionsense) dec = &fos_dec;
      ScenarioRow row;
      row.prevalence = prevalences[i];
      row.breakdown = account_pipeline(p, dec, cfg, n_frames);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace fusim
