#pragma once

#include "stivae/ivae.hpp"

#include <string>
#include <vector>

namespace stivae::dimsel {

struct DimSweepRow {
  std::size_t latent_dim = 0;
  double elbo_total = 0.0;  // n * per-observation ELBO
  double uaic = 0.0;        // -2 elbo_total + 2 latent_dim
};

double uaic(double elbo_total, std::size_t latent_dim);

/// One independent fit per candidate dimension with seed derive_seed(base, "dimsel", R).
/// `jobs` > 1 runs fits on worker threads; rows are always ordered by R.
std::vector<DimSweepRow> sweep_dims(const Tensor& x, const Tensor& u, const std::vector<std::size_t>& dims,
                                    const ivae::IvaeConfig& config_template, std::size_t jobs = 1);

/// argmin uAIC, ties toward the smaller dimension.
std::size_t select_dim(const std::vector<DimSweepRow>& rows);

/// Columns R, elbo, uaic, selected.
void write_knee_csv(const std::string& path, const std::vector<DimSweepRow>& rows);

}  // namespace stivae::dimsel
