#include "stivae/ivae.hpp"

#include "stivae/error.hpp"
#include "stivae/io.hpp"
#include "stivae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>

namespace stivae::ivae {

void IvaeConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("latent dimension must be >= 1");
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(schedule.initial >= schedule.final_rate && schedule.final_rate > 0) || schedule.horizon <= 0) {
    throw ConfigError("learning-rate schedule needs initial >= final > 0 and horizon > 0");
  }
}

Standardizer Standardizer::fit(const Tensor& x) {
  Standardizer s;
  const std::size_t n = x.rows(), d = x.cols();
  s.mean.assign(d, 0.0);
  s.sd.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += x(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (x(i, j) - m) * (x(i, j) - m);
    v /= static_cast<double>(n > 1 ? n - 1 : 1);
    s.mean[j] = m;
    s.sd[j] = v > 0 ? std::sqrt(v) : 1.0;
  }
  return s;
}

Tensor Standardizer::apply(const Tensor& x) const {
  if (x.cols() != mean.size()) throw DimensionError("standardizer fitted on a different column count");
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) / sd[j];
  }
  return out;
}

Tensor Standardizer::invert(const Tensor& x) const {
  if (x.cols() != mean.size()) throw DimensionError("standardizer fitted on a different column count");
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) * sd[j] + mean[j];
  }
  return out;
}

IvaeModel ivae_new(std::size_t obs_dim, std::size_t aux_dim, const IvaeConfig& config) {
  config.validate();
  if (obs_dim < 1 || aux_dim < 1) throw ConfigError("observation and auxiliary dimensions must be >= 1");
  const std::size_t p = config.latent_dim;
  IvaeModel m;
  m.config = config;
  m.obs_dim = obs_dim;
  m.aux_dim = aux_dim;
  m.encoder = nn::mlp_new(obs_dim + aux_dim, config.hidden, 2 * p, config.activation,
                          derive_seed(config.seed, "encoder"));
  m.decoder = nn::mlp_new(p, config.hidden, obs_dim, config.activation, derive_seed(config.seed, "decoder"));
  m.auxiliary = nn::mlp_new(aux_dim, config.aux_hidden, 2 * p, config.activation,
                            derive_seed(config.seed, "auxiliary"));
  m.x_scaling.mean.assign(obs_dim, 0.0);
  m.x_scaling.sd.assign(obs_dim, 1.0);
  return m;
}

double gaussian_kl(std::span<const double> mu_q, std::span<const double> logvar_q, std::span<const double> mu_p,
                   std::span<const double> logvar_p) {
  double kl = 0.0;
  for (std::size_t j = 0; j < mu_q.size(); ++j) {
    const double diff = mu_q[j] - mu_p[j];
    kl += 0.5 * (logvar_p[j] - logvar_q[j] + (std::exp(logvar_q[j]) + diff * diff) / std::exp(logvar_p[j]) - 1.0);
  }
  return kl;
}

namespace {

double clamp_logvar(double v) { return std::clamp(v, -kLogVarClamp, kLogVarClamp); }
bool inside_clamp(double v) { return v > -kLogVarClamp && v < kLogVarClamp; }

void check_shapes(const IvaeModel& model, const Tensor& x, const Tensor& u) {
  if (x.rank() != 2 || x.cols() != model.obs_dim) {
    throw DimensionError("model expects " + std::to_string(model.obs_dim) + " observed columns, got " +
                         shape_string(x));
  }
  if (u.rank() != 2 || u.cols() != model.aux_dim) {
    throw DimensionError("model expects " + std::to_string(model.aux_dim) + " auxiliary columns, got " +
                         shape_string(u));
  }
  if (x.rows() != u.rows()) throw DimensionError("observation and auxiliary row counts differ");
}

}  // namespace

ElboTerms elbo_batch(const IvaeModel& model, const Tensor& x, const Tensor& u, const Tensor& noise,
                     ElboGrads* grads) {
  check_shapes(model, x, u);
  const std::size_t b = x.rows(), p = model.latent_dim(), s = model.obs_dim;
  if (noise.rows() != b || noise.cols() != p) throw DimensionError("noise must be batch x latent_dim");
  const double beta = model.config.beta;

  nn::Tape enc_tape, dec_tape, aux_tape;
  const Tensor enc_out = nn::forward(model.encoder, hconcat(x, u), enc_tape);
  const Tensor aux_out = nn::forward(model.auxiliary, u, aux_tape);

  Tensor z(b, p);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double sd = std::exp(0.5 * clamp_logvar(enc_out(i, p + j)));
      z(i, j) = enc_out(i, j) + sd * noise(i, j);
    }
  }
  const Tensor xr = nn::forward(model.decoder, z, dec_tape);

  const double log_norm = -0.5 * static_cast<double>(s) * std::log(2.0 * std::numbers::pi * beta);
  double recon = 0.0, kl = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      const double d = x(i, j) - xr(i, j);
      sq += d * d;
    }
    recon += log_norm - sq / (2.0 * beta);
    for (std::size_t j = 0; j < p; ++j) {
      const double lq = clamp_logvar(enc_out(i, p + j));
      const double lp = clamp_logvar(aux_out(i, p + j));
      const double diff = enc_out(i, j) - aux_out(i, j);
      kl += 0.5 * (lp - lq + (std::exp(lq) + diff * diff) / std::exp(lp) - 1.0);
    }
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  ElboTerms terms{(recon - kl) * inv_b, recon * inv_b, kl * inv_b};
  if (!std::isfinite(terms.recon)) throw NumericError("non-finite reconstruction term");
  if (!std::isfinite(terms.kl)) throw NumericError("non-finite KL term");
  if (grads == nullptr) return terms;

  // loss = -elbo = mean(-recon + kl)
  Tensor d_xr(b, s);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < s; ++j) d_xr(i, j) = -(x(i, j) - xr(i, j)) / beta * inv_b;
  }
  grads->decoder = nn::backward(model.decoder, dec_tape, d_xr);
  const Tensor& d_z = grads->decoder.input;

  Tensor d_enc(b, 2 * p), d_aux(b, 2 * p);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double lq_raw = enc_out(i, p + j), lp_raw = aux_out(i, p + j);
      const double lq = clamp_logvar(lq_raw), lp = clamp_logvar(lp_raw);
      const double var_q = std::exp(lq), var_p = std::exp(lp);
      const double diff = enc_out(i, j) - aux_out(i, j);
      const double sd_q = std::exp(0.5 * lq);

      d_enc(i, j) = d_z(i, j) + inv_b * diff / var_p;
      const double d_lq = d_z(i, j) * 0.5 * sd_q * noise(i, j) + inv_b * 0.5 * (var_q / var_p - 1.0);
      d_enc(i, p + j) = inside_clamp(lq_raw) ? d_lq : 0.0;

      d_aux(i, j) = -inv_b * diff / var_p;
      const double d_lp = inv_b * 0.5 * (1.0 - (var_q + diff * diff) / var_p);
      d_aux(i, p + j) = inside_clamp(lp_raw) ? d_lp : 0.0;
    }
  }
  grads->encoder = nn::backward(model.encoder, enc_tape, d_enc);
  grads->auxiliary = nn::backward(model.auxiliary, aux_tape, d_aux);
  return terms;
}

namespace {

Tensor draw_noise(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

double full_data_elbo(const IvaeModel& model, const Tensor& xs, const Tensor& u, std::uint64_t seed) {
  Rng rng(seed);
  constexpr std::size_t chunk = 1024;
  double total = 0.0;
  for (std::size_t begin = 0; begin < xs.rows(); begin += chunk) {
    const std::size_t end = std::min(xs.rows(), begin + chunk);
    const Tensor noise = draw_noise(rng, end - begin, model.latent_dim());
    const auto terms = elbo_batch(model, xs.slice_rows(begin, end), u.slice_rows(begin, end), noise);
    total += terms.elbo * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(xs.rows());
}

}  // namespace

TrainResult train(const Tensor& x, const Tensor& u, const IvaeConfig& config) {
  config.validate();
  if (x.rank() != 2 || u.rank() != 2 || x.rows() != u.rows()) {
    throw DimensionError("x " + shape_string(x) + " and u " + shape_string(u) + " must have matching rows");
  }
  if (x.rows() < 2) throw DataError("need at least two observations to train");
  require_finite(x, "observations");
  require_finite(u, "auxiliary variables");

  IvaeModel model = ivae_new(x.cols(), u.cols(), config);
  model.x_scaling = Standardizer::fit(x);
  const Tensor xs = model.x_scaling.apply(x);

  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng noise_rng(derive_seed(config.seed, "noise"));
  nn::AdamState adam;
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});

  LatentResult latent;
  std::int64_t step = 0;
  int bad_streak = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double epoch_sum = 0.0;
    std::size_t epoch_rows = 0;
    int batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor xb = xs.gather_rows(idx), ub = u.gather_rows(idx);
      const Tensor noise = draw_noise(noise_rng, idx.size(), config.latent_dim);

      ElboGrads grads;
      ElboTerms terms;
      bool finite = true;
      try {
        terms = elbo_batch(model, xb, ub, noise, &grads);
      } catch (const NumericError&) {
        finite = false;
      }
      if (!finite || !std::isfinite(terms.elbo)) {
        if (++bad_streak >= 3) {
          throw DivergenceError("ELBO diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                    std::to_string(batch_index + 1),
                                epoch + 1, batch_index + 1);
        }
        continue;
      }
      bad_streak = 0;
      epoch_sum += terms.elbo * static_cast<double>(idx.size());
      epoch_rows += idx.size();

      auto slots = nn::param_slots(model.encoder, grads.encoder, "encoder");
      auto dec = nn::param_slots(model.decoder, grads.decoder, "decoder");
      auto aux = nn::param_slots(model.auxiliary, grads.auxiliary, "auxiliary");
      slots.insert(slots.end(), dec.begin(), dec.end());
      slots.insert(slots.end(), aux.begin(), aux.end());
      nn::adam_step(slots, adam, nn::lr_at(config.schedule, step));
      ++step;
    }
    latent.elbo_history.push_back(epoch_rows ? epoch_sum / static_cast<double>(epoch_rows)
                                             : std::numeric_limits<double>::quiet_NaN());
  }

  LatentResult out = extract_sources(model, x, u);
  out.elbo_history = std::move(latent.elbo_history);
  out.final_elbo = full_data_elbo(model, xs, u, derive_seed(config.seed, "evaluation"));
  return {std::move(model), std::move(out)};
}

GaussianSourceParams aux_prior(const IvaeModel& model, const Tensor& u) {
  if (u.rank() != 2 || u.cols() != model.aux_dim) {
    throw DimensionError("model expects " + std::to_string(model.aux_dim) + " auxiliary columns, got " +
                         shape_string(u));
  }
  const std::size_t p = model.latent_dim();
  const Tensor out = nn::forward(model.auxiliary, u);
  GaussianSourceParams g{Tensor(u.rows(), p), Tensor(u.rows(), p)};
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      g.mean(i, j) = out(i, j);
      g.var(i, j) = std::exp(clamp_logvar(out(i, p + j)));
    }
  }
  return g;
}

LatentResult extract_sources(const IvaeModel& model, const Tensor& x, const Tensor& u) {
  check_shapes(model, x, u);
  const std::size_t p = model.latent_dim();
  const Tensor enc = nn::forward(model.encoder, hconcat(model.x_scaling.apply(x), u));
  const auto prior = aux_prior(model, u);
  LatentResult r;
  r.sources = enc.slice_cols(0, p);
  r.trend = prior.mean;
  r.sd = prior.var;
  for (double& v : r.sd.data()) v = std::sqrt(v);
  return r;
}

Tensor decode(const IvaeModel& model, const Tensor& z) {
  if (z.rank() != 2 || z.cols() != model.latent_dim()) {
    throw DimensionError("decode expects " + std::to_string(model.latent_dim()) + " latent columns, got " +
                         shape_string(z));
  }
  return model.x_scaling.invert(nn::forward(model.decoder, z));
}

double mean_elbo(const IvaeModel& model, const Tensor& x, const Tensor& u, std::uint64_t noise_seed) {
  check_shapes(model, x, u);
  return full_data_elbo(model, model.x_scaling.apply(x), u, noise_seed);
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::format_double(v[i]);
  return s;
}

}  // namespace

void save_model(const IvaeModel& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nn::save_mlp(dir + "/encoder.bin", model.encoder);
  nn::save_mlp(dir + "/decoder.bin", model.decoder);
  nn::save_mlp(dir + "/auxiliary.bin", model.auxiliary);
  const auto& c = model.config;
  io::KeyValues kv;
  kv.set("latent_dim", std::to_string(c.latent_dim));
  kv.set("hidden", join_sizes(c.hidden));
  kv.set("aux_hidden", join_sizes(c.aux_hidden));
  kv.set("activation", nn::to_string(c.activation));
  kv.set("beta", io::format_double(c.beta));
  kv.set("epochs", std::to_string(c.epochs));
  kv.set("batch_size", std::to_string(c.batch_size));
  kv.set("lr_initial", io::format_double(c.schedule.initial));
  kv.set("lr_final", io::format_double(c.schedule.final_rate));
  kv.set("lr_horizon", std::to_string(c.schedule.horizon));
  kv.set("lr_power", io::format_double(c.schedule.power));
  kv.set("seed", std::to_string(c.seed));
  kv.set("obs_dim", std::to_string(model.obs_dim));
  kv.set("aux_dim", std::to_string(model.aux_dim));
  kv.set("x_mean", join_doubles(model.x_scaling.mean));
  kv.set("x_sd", join_doubles(model.x_scaling.sd));
  io::write_key_values(dir + "/model.txt", kv);
}

IvaeModel load_model(const std::string& dir) {
  const auto kv = io::read_key_values(dir + "/model.txt");
  IvaeModel m;
  auto& c = m.config;
  c.latent_dim = std::stoul(kv.get("latent_dim"));
  c.hidden = io::parse_size_list(kv.get("hidden"));
  c.aux_hidden = io::parse_size_list(kv.get("aux_hidden"));
  c.activation = nn::parse_activation(kv.get("activation"));
  c.beta = std::stod(kv.get("beta"));
  c.epochs = std::stoi(kv.get("epochs"));
  c.batch_size = std::stoul(kv.get("batch_size"));
  c.schedule.initial = std::stod(kv.get("lr_initial"));
  c.schedule.final_rate = std::stod(kv.get("lr_final"));
  c.schedule.horizon = std::stoll(kv.get("lr_horizon"));
  c.schedule.power = std::stod(kv.get("lr_power"));
  c.seed = std::stoull(kv.get("seed"));
  m.obs_dim = std::stoul(kv.get("obs_dim"));
  m.aux_dim = std::stoul(kv.get("aux_dim"));
  m.x_scaling.mean = io::parse_double_list(kv.get("x_mean"));
  m.x_scaling.sd = io::parse_double_list(kv.get("x_sd"));
  m.encoder = nn::load_mlp(dir + "/encoder.bin");
  m.decoder = nn::load_mlp(dir + "/decoder.bin");
  m.auxiliary = nn::load_mlp(dir + "/auxiliary.bin");
  if (m.encoder.input_size() != m.obs_dim + m.aux_dim || m.decoder.output_size() != m.obs_dim ||
      m.auxiliary.input_size() != m.aux_dim) {
    throw DataError("model files in " + dir + " are inconsistent with model.txt");
  }
  return m;
}

}  // namespace stivae::ivae
