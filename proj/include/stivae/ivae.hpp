#pragma once

// Identifiable VAE with Gaussian sources conditioned on auxiliary variables.
//
//   encoder g(x, u) -> (mu_q, log var_q)      q(z | x, u)
//   decoder h(z)    -> x'                     p(x | z) = N(x', beta I)
//   auxiliary w(u)  -> (mu_p, log var_p)      p(z | u)
//
// ELBO = E_q[log p(x|z)] - KL(q(z|x,u) || p(z|u)), estimated with one
// reparametrized sample per row.

#include "stivae/nn.hpp"
#include "stivae/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stivae::ivae {

inline constexpr double kLogVarClamp = 10.0;

struct IvaeConfig {
  std::size_t latent_dim = 5;
  std::vector<std::size_t> hidden{128, 128, 128};      // encoder and decoder
  std::vector<std::size_t> aux_hidden{128, 128, 128};  // auxiliary net
  nn::Activation activation = nn::Activation::leaky_relu;
  double beta = 0.02;
  int epochs = 60;
  std::size_t batch_size = 64;
  nn::LrSchedule schedule;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Column means and standard deviations; constant columns keep sd = 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  static Standardizer fit(const Tensor& x);
  Tensor apply(const Tensor& x) const;
  Tensor invert(const Tensor& x) const;
};

struct IvaeModel {
  nn::Mlp encoder;
  nn::Mlp decoder;
  nn::Mlp auxiliary;
  IvaeConfig config;
  Standardizer x_scaling;
  std::size_t obs_dim = 0;
  std::size_t aux_dim = 0;

  std::size_t latent_dim() const { return config.latent_dim; }
};

/// Fresh model with networks seeded from `config.seed`; identity scaling.
IvaeModel ivae_new(std::size_t obs_dim, std::size_t aux_dim, const IvaeConfig& config);

/// Diagonal Gaussian parameters for a batch (rows) of P-dimensional sources.
struct GaussianSourceParams {
  Tensor mean;
  Tensor var;
};

struct ElboTerms {
  double elbo = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// Gradients of the negative batch-mean ELBO.
struct ElboGrads {
  nn::MlpGrads encoder;
  nn::MlpGrads decoder;
  nn::MlpGrads auxiliary;
};

/// Batch-mean ELBO terms. `x` is in the networks' (standardized) space and
/// `noise` holds standard normal draws (batch x P). When `grads` is given the
/// gradient of -elbo with respect to every weight is written there.
ElboTerms elbo_batch(const IvaeModel& model, const Tensor& x, const Tensor& u, const Tensor& noise,
                     ElboGrads* grads = nullptr);

/// Closed-form KL(N(mu_q, var_q) || N(mu_p, var_p)) summed over components.
double gaussian_kl(std::span<const double> mu_q, std::span<const double> logvar_q,
                   std::span<const double> mu_p, std::span<const double> logvar_p);

struct LatentResult {
  Tensor sources;  // encoder mean mu_{z|x,u}
  Tensor trend;    // mu_{z|u}
  Tensor sd;       // sigma_{z|u} = exp(log var / 2)
  std::vector<double> elbo_history;  // per-epoch mean training ELBO
  double final_elbo = 0.0;           // per-observation ELBO of a deterministic full-data pass
};

struct TrainResult {
  IvaeModel model;
  LatentResult latent;
};

/// Minibatch Adam ascent on the ELBO. `x` is raw (standardized internally).
/// Throws ConfigError on bad config, DimensionError on shape mismatch and
/// DivergenceError after three consecutive non-finite batches.
TrainResult train(const Tensor& x, const Tensor& u, const IvaeConfig& config);

/// Deterministic, sampling-free pass: encoder means and auxiliary trend / sd.
LatentResult extract_sources(const IvaeModel& model, const Tensor& x, const Tensor& u);
/// Auxiliary-net outputs only (rows of u -> trend, sd).
GaussianSourceParams aux_prior(const IvaeModel& model, const Tensor& u);
/// Decoder output mapped back to the raw observation scale.
Tensor decode(const IvaeModel& model, const Tensor& z);
/// Per-observation ELBO over all rows using seeded reparametrization noise.
double mean_elbo(const IvaeModel& model, const Tensor& x, const Tensor& u, std::uint64_t noise_seed);

/// Writes encoder.bin, decoder.bin, auxiliary.bin and model.txt into `dir`.
void save_model(const IvaeModel& model, const std::string& dir);
IvaeModel load_model(const std::string& dir);

}  // namespace stivae::ivae
