#pragma once

// Synthetic latent spatio-temporal fields and MLP mixing functions.
// Rows of every generated matrix are time-major: row = (t - 1) * n_s + i.

#include "stivae/aux.hpp"
#include "stivae/io.hpp"
#include "stivae/rng.hpp"
#include "stivae/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace stivae::simgen {

struct MaternParams {
  double nu = 0.5;   // smoothness
  double phi = 1.0;  // range
  void validate() const;
};

/// Unit-sill Matern correlation at distance d.
double matern_cov(double d, const MaternParams& p);

/// Lower Cholesky factor of `cov + jitter I`, starting at 1e-8 and doubling
/// up to 1e-4. Throws NumericError if every attempt fails.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov, double* jitter_used = nullptr);

using CovFn = std::function<double(std::span<const double>, std::span<const double>)>;

/// One zero-mean Gaussian draw at the rows of `coords`.
std::vector<double> sample_gaussian_field(const Tensor& coords, const CovFn& cov, std::uint64_t seed);

struct SwirlParams {
  std::array<double, 2> center{0.5, 0.5};
  double scale = 1.0;  // b_swirl
  double angle = 0.0;  // eta
};

/// Swirl deformation of 2-D coordinates (n x 2) into latent coordinates.
Tensor swirl(const Tensor& coords, const SwirlParams& p);

enum class VarianceMode { space, time, space_time };
/// How the time shift and time parameter combine inside the sine:
/// frequency: sin((t + shift) * rate); additive: sin((t + shift) + rate).
enum class TimeVarianceForm { frequency, additive };

struct IlsaComponent {
  std::array<double, 2> kernel_spatial{};  // AR kernel scales, observed coordinates
  std::array<double, 2> kernel_latent{};   // AR kernel scales, latent coordinates
  std::array<double, 2> noise_spatial{};   // noise distance scales, observed coordinates
  std::array<double, 2> noise_latent{};    // noise distance scales, latent coordinates
  double ar_coef = 0.5;
  SwirlParams deformation;
  MaternParams matern;
  double var_space = 0.0;   // spatial log-sd slope on the first latent coordinate
  double var_shift = 0.0;   // time shift
  double var_rate = 0.0;    // time rate
};

struct IlsaSpec {
  VarianceMode mode = VarianceMode::space_time;
  TimeVarianceForm form = TimeVarianceForm::frequency;
  std::vector<IlsaComponent> components;

  /// The five published components.
  static IlsaSpec table1(VarianceMode mode);
  /// Components drawn uniformly over ranges spanning the published values.
  static IlsaSpec random(std::size_t count, VarianceMode mode, Rng& rng);
  void validate() const;
};

/// Noise standard deviation sigma(s, t) for one component.
double ilsa_sd(const IlsaComponent& c, VarianceMode mode, TimeVarianceForm form, double latent_first, double t);

/// AR spatial kernel matrix (n_s x n_s). Throws ConfigError on a zero scale.
Eigen::MatrixXd ilsa_kernel(const Tensor& coords, const Tensor& latent, const IlsaComponent& c);

/// Time-invariant part V(Q) of the noise covariance.
Eigen::MatrixXd ilsa_noise_corr(const Tensor& coords, const Tensor& latent, const IlsaComponent& c);

/// Noise covariance at time t: sd_i * sd_j * V(Q_ij).
Eigen::MatrixXd ilsa_noise_cov(const Tensor& coords, const Tensor& latent, const IlsaComponent& c,
                               VarianceMode mode, TimeVarianceForm form, double t);

/// Largest absolute eigenvalue of a symmetric matrix.
double spectral_radius(const Eigen::MatrixXd& m);

struct SimOptions {
  TimeVarianceForm time_form = TimeVarianceForm::frequency;
  int burn_in = 50;
};

struct SimField {
  Tensor z;                // (n_s * n_t) x P
  aux::Locations locations;
  std::vector<std::string> warnings;
  io::KeyValues params;    // drawn scenario parameters
};

/// Latent field of Setting k in 1..6. Throws ConfigError for other k.
SimField gen_setting(int setting, std::size_t n_s, std::size_t n_t, std::size_t p, std::uint64_t seed,
                     const SimOptions& options = {});

/// Uniform locations on [0,1]^2 replicated over times 1..n_t.
aux::Locations grid_locations(std::size_t n_s, std::size_t n_t, Rng& rng);

struct MixingFunction {
  std::vector<Eigen::MatrixXd> layers;  // first S x P, then S x S

  std::size_t layer_count() const { return layers.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().rows()); }
};

/// Standard normal weights, rows then columns rescaled to unit length.
MixingFunction gen_mixing(std::size_t layers, std::size_t p, std::size_t s, std::uint64_t seed);
/// ELU after every layer except the last; no biases.
Tensor apply_mixing(const MixingFunction& f, const Tensor& z);

struct SimDataset {
  aux::Locations locations;
  Tensor z;
  Tensor x;
  io::KeyValues params;
  std::vector<std::string> warnings;
};

struct SimRequest {
  int setting = 1;
  std::size_t n_s = 50;
  std::size_t n_t = 100;
  std::size_t p = 3;
  std::size_t s = 5;
  std::size_t layers = 1;
  std::uint64_t seed = 0;
  SimOptions options;
};

/// gen_setting followed by gen_mixing/apply_mixing with derived seeds.
SimDataset simulate(const SimRequest& request);

/// Columns s1, s2, t, z1..zP, x1..xS.
io::Table dataset_table(const SimDataset& d);
void write_dataset(const std::string& csv_path, const SimDataset& d);

}  // namespace stivae::simgen
