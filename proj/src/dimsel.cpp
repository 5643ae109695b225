#include "stivae/dimsel.hpp"

#include "stivae/error.hpp"
#include "stivae/io.hpp"
#include "stivae/parallel.hpp"
#include "stivae/rng.hpp"

#include <algorithm>

namespace stivae::dimsel {

double uaic(double elbo_total, std::size_t latent_dim) {
  return -2.0 * elbo_total + 2.0 * static_cast<double>(latent_dim);
}

std::vector<DimSweepRow> sweep_dims(const Tensor& x, const Tensor& u, const std::vector<std::size_t>& dims,
                                    const ivae::IvaeConfig& config_template, std::size_t jobs) {
  if (dims.empty()) throw ConfigError("no candidate latent dimensions");
  std::vector<std::size_t> sorted = dims;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("candidate latent dimensions must be distinct");
  }
  for (std::size_t r : sorted) {
    if (r < 1 || r > x.cols()) {
      throw ConfigError("candidate dimension " + std::to_string(r) + " outside [1, " + std::to_string(x.cols()) + "]");
    }
  }
  std::vector<DimSweepRow> rows(sorted.size());
  parallel_for(sorted.size(), jobs, [&](std::size_t i) {
    ivae::IvaeConfig cfg = config_template;
    cfg.latent_dim = sorted[i];
    cfg.seed = derive_seed(config_template.seed, "dimsel", sorted[i]);
    try {
      const auto fit = ivae::train(x, u, cfg);
      const double total = static_cast<double>(x.rows()) * fit.latent.final_elbo;
      rows[i] = {sorted[i], total, uaic(total, sorted[i])};
    } catch (const DivergenceError& e) {
      throw DivergenceError("R=" + std::to_string(sorted[i]) + ": " + e.what(), e.epoch, e.batch);
    }
  });
  return rows;
}

std::size_t select_dim(const std::vector<DimSweepRow>& rows) {
  if (rows.empty()) throw ConfigError("select_dim needs at least one row");
  const DimSweepRow* best = &rows.front();
  for (const auto& r : rows) {
    if (r.uaic < best->uaic || (r.uaic == best->uaic && r.latent_dim < best->latent_dim)) best = &r;
  }
  return best->latent_dim;
}

void write_knee_csv(const std::string& path, const std::vector<DimSweepRow>& rows) {
  const std::size_t chosen = select_dim(rows);
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows) {
    out.push_back({std::to_string(r.latent_dim), io::format_double(r.elbo_total), io::format_double(r.uaic),
                   r.latent_dim == chosen ? "1" : "0"});
  }
  io::write_text_csv(path, {"R", "elbo", "uaic", "selected"}, out);
}

}  // namespace stivae::dimsel
