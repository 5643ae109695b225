#pragma once

// Command implementations shared by the CLI and the acceptance runner.

#include "stivae/aux.hpp"
#include "stivae/dimsel.hpp"
#include "stivae/ivae.hpp"
#include "stivae/predict.hpp"
#include "stivae/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stivae::cli {

struct AuxOptions {
  std::string kind = "radial";
  std::string spatial_levels = "2,9";
  std::string temporal_levels = "9,17,37";
  std::string kernel = "gaussian";
  std::size_t segments = 4;
  double segment_length = 5.0;

  aux::AuxConfig to_config() const;
};

struct IvaeOptions {
  std::size_t latent = 0;  // 0: number of truth columns when present
  int epochs = 60;
  std::size_t batch = 64;
  double beta = 0.02;
  std::string hidden = "128,128,128";
  std::string aux_hidden = "128,128,128";
  std::string activation = "leaky-relu";
  double lr = 1e-3;
  double lr_final = 1e-4;
  std::int64_t lr_horizon = 10000;

  ivae::IvaeConfig to_config(std::size_t latent_dim, std::uint64_t seed) const;
};

struct CommonOptions {
  std::string out = "out";
  std::size_t jobs = 1;
};

struct Dataset {
  aux::Locations locations;
  Tensor x;
  std::optional<Tensor> z;
};

/// Reads s1.., t, x1.. and optional z1.. columns.
Dataset read_dataset(const std::string& path);

struct SimulateOptions {
  int setting = 1;
  std::size_t ns = 50;
  std::size_t nt = 100;
  std::size_t p = 3;
  std::size_t sdim = 5;
  std::size_t layers = 1;
  std::uint64_t seed = 0;
  std::string time_form = "frequency";
  int burn_in = 50;
  std::size_t replicates = 1;
};

struct TrainOptions {
  std::string data;
  AuxOptions aux;
  IvaeOptions ivae;
  std::uint64_t seed = 0;
  bool save_aux = false;
};

struct DimsweepOptions {
  std::string data;
  AuxOptions aux;
  IvaeOptions ivae;
  std::string dims;  // empty: 2..S
  std::uint64_t seed = 0;
};

struct PredictOptions {
  std::string data;
  std::string mode = "spatial";
  std::string strategies = "ivae-direct,ivae-kriging";
  double holdout = 0.2;
  double period = 0.0;  // 0: no seasonal structure
  bool deseasonalize = false;
  AuxOptions aux;
  IvaeOptions ivae;
  std::size_t neighbors = 40;
  std::string variogram = "product-sum";
  std::uint64_t seed = 0;
};

struct ReproOptions {
  std::string id;
  std::size_t replicates = 0;  // 0: the reproduction's default
  std::size_t ns = 0;
  std::size_t nt = 0;
  int epochs = 0;
  std::string methods;
  std::uint64_t seed = 0;
};

void cmd_simulate(const SimulateOptions& o, const CommonOptions& c);
void cmd_train(const TrainOptions& o, const CommonOptions& c);
std::size_t cmd_dimsweep(const DimsweepOptions& o, const CommonOptions& c);
void cmd_predict(const PredictOptions& o, const CommonOptions& c);
void cmd_repro(const ReproOptions& o, const CommonOptions& c);

std::vector<std::string> repro_ids();

// ---------------------------------------------------------------------------
// Desk-scale studies

struct MccStudy {
  int setting = 1;
  std::size_t ns = 50, nt = 100, p = 3, s = 5, layers = 1;
  std::size_t replicates = 10;
  std::uint64_t seed = 0;
  /// ivae-r, ivae-s1, ivae-s2, ivae-s3, ivae-c, linear
  std::vector<std::string> methods{"ivae-r"};
  IvaeOptions ivae;
  AuxOptions aux;
};

struct MccRecord {
  int setting = 0;
  std::string method;
  std::size_t replicate = 0;
  std::size_t layers = 0;
  double mcc = 0.0;
};

std::vector<MccRecord> run_mcc_study(const MccStudy& study, std::size_t jobs);

struct DimStudy {
  int setting = 6;
  std::size_t ns = 50, nt = 100, p = 3, s = 6, layers = 3;
  std::size_t replicates = 20;
  std::uint64_t seed = 0;
  std::vector<std::size_t> dims{2, 3, 4, 5, 6};
  IvaeOptions ivae;
  AuxOptions aux;
};

struct DimRecord {
  std::size_t replicate = 0;
  std::vector<dimsel::DimSweepRow> rows;
  std::size_t selected = 0;
};

std::vector<DimRecord> run_dim_study(const DimStudy& study, std::size_t jobs);

}  // namespace stivae::cli
