#include "stivae/simgen.hpp"

#include "stivae/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stivae::simgen {

void MaternParams::validate() const {
  if (!(nu > 0) || !(phi > 0)) throw ConfigError("Matern parameters need nu > 0 and phi > 0");
}

double matern_cov(double d, const MaternParams& p) {
  p.validate();
  if (d < 0) throw ConfigError("Matern distance must be non-negative");
  if (d == 0) return 1.0;
  const double x = std::sqrt(2.0 * p.nu) * d / p.phi;
  if (p.nu == 0.5) return std::exp(-x);
  if (p.nu == 1.5) return (1.0 + x) * std::exp(-x);
  if (p.nu == 2.5) return (1.0 + x + x * x / 3.0) * std::exp(-x);
  if (x > 700.0) return 0.0;
  const double log_v = (1.0 - p.nu) * std::numbers::ln2 - std::lgamma(p.nu) + p.nu * std::log(x) +
                       std::log(std::cyl_bessel_k(p.nu, x));
  return std::min(1.0, std::exp(log_v));
}

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov, double* jitter_used) {
  const Eigen::Index n = cov.rows();
  for (double jitter = 1e-8; jitter <= 1e-4 * (1 + 1e-9); jitter *= 2.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      return llt.matrixL();
    }
  }
  throw NumericError("covariance matrix is not positive definite even with jitter 1e-4");
}

std::vector<double> sample_gaussian_field(const Tensor& coords, const CovFn& cov, std::uint64_t seed) {
  const std::size_t n = coords.rows();
  Eigen::MatrixXd c(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) c(i, j) = c(j, i) = cov(coords.row(i), coords.row(j));
  }
  const Eigen::MatrixXd l = cholesky_with_jitter(c);
  Rng rng(seed);
  Eigen::VectorXd w(n);
  for (std::size_t i = 0; i < n; ++i) w(i) = rng.normal();
  const Eigen::VectorXd v = l * w;
  return {v.data(), v.data() + n};
}

Tensor swirl(const Tensor& coords, const SwirlParams& p) {
  if (coords.rank() != 2 || coords.cols() != 2) throw DimensionError("swirl expects n x 2 coordinates");
  Tensor out(coords.rows(), 2);
  const auto [c1, c2] = p.center;
  for (std::size_t i = 0; i < coords.rows(); ++i) {
    const double d1 = coords(i, 0) - c1, d2 = coords(i, 1) - c2;
    const double h = std::hypot(d1, d2);
    const double a = p.angle * std::exp(-(h / p.scale) * (h / p.scale));
    out(i, 0) = d1 * std::cos(a) - d2 * std::sin(a) + c1;
    out(i, 1) = d1 * std::sin(a) - d2 * std::cos(a) + c2;
  }
  return out;
}

IlsaSpec IlsaSpec::table1(VarianceMode mode) {
  constexpr double pi = std::numbers::pi;
  IlsaSpec s;
  s.mode = mode;
  // kernel_spatial, kernel_latent, noise_spatial, noise_latent, ar, {center, b, eta}, {nu, phi}, var_space,
  // var_shift, var_rate
  s.components = {
      {{6, 4}, {7, 7}, {0.2, 0.7}, {0.7, 0.2}, 0.9, {{0.5, 0.5}, 0.7, 1.8 * pi}, {0.25, 0.5}, 1, 50, 0.1},
      {{3, 6}, {4, 7}, {0.7, 0.2}, {0.25, 0.5}, 0.8, {{0.7, 0.7}, 0.4, 1.2 * pi}, {0.2, 0.9}, 2, 0, 0.05},
      {{3, 3}, {6, 3}, {0.5, 0.5}, {0.7, 0}, 0.7, {{0.3, 0.3}, 0.2, 2 * pi}, {0.05, 1.5}, 3, 100, 0.005},
      {{7, 3}, {2, 6}, {0.2, 0.4}, {0.3, 0.7}, 0.6, {{0.7, 0.3}, 1, 0.5 * pi}, {0.1, 0.25}, -1, 20, 0.01},
      {{2, 1}, {6, 2}, {0.3, 0.3}, {0, 0.7}, 0.5, {{0.3, 0.7}, 0.9, 0.9 * pi}, {0.15, 1}, -2, 10, 0.03},
  };
  return s;
}

IlsaSpec IlsaSpec::random(std::size_t count, VarianceMode mode, Rng& rng) {
  constexpr double pi = std::numbers::pi;
  IlsaSpec s;
  s.mode = mode;
  for (std::size_t i = 0; i < count; ++i) {
    IlsaComponent c;
    c.kernel_spatial = {rng.uniform(2, 7), rng.uniform(1, 6)};
    c.kernel_latent = {rng.uniform(2, 7), rng.uniform(2, 7)};
    c.noise_spatial = {rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7)};
    c.noise_latent = {rng.uniform(0, 0.7), rng.uniform(0, 0.7)};
    c.ar_coef = rng.uniform(0.5, 0.9);
    c.deformation = {{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)}, rng.uniform(0.2, 1.0), rng.uniform(0.5, 2.0) * pi};
    c.matern = {rng.uniform(0.05, 0.25), rng.uniform(0.25, 1.5)};
    const double magnitude = rng.uniform(1, 3);
    c.var_space = rng.uniform() < 0.5 ? -magnitude : magnitude;
    c.var_shift = rng.uniform(0, 100);
    c.var_rate = rng.uniform(0.005, 0.1);
    s.components.push_back(c);
  }
  return s;
}

void IlsaSpec::validate() const {
  if (components.empty()) throw ConfigError("ILSA spec needs at least one component");
  for (const auto& c : components) {
    for (double v : {c.kernel_spatial[0], c.kernel_spatial[1], c.kernel_latent[0], c.kernel_latent[1],
                     c.noise_spatial[0], c.noise_spatial[1], c.noise_latent[0], c.noise_latent[1]}) {
      if (!(v >= 0)) throw ConfigError("ILSA scaling parameters must be non-negative");
    }
    if (!(std::abs(c.ar_coef) < 1)) throw ConfigError("ILSA AR coefficient must satisfy |rho| < 1");
    if (!(c.deformation.scale > 0)) throw ConfigError("swirl scale must be positive");
    c.matern.validate();
  }
}

double ilsa_sd(const IlsaComponent& c, VarianceMode mode, TimeVarianceForm form, double latent_first, double t) {
  const double phase = form == TimeVarianceForm::frequency ? (t + c.var_shift) * c.var_rate
                                                           : (t + c.var_shift) + c.var_rate;
  switch (mode) {
    case VarianceMode::space:
      return std::exp(c.var_space * (latent_first - 0.5));
    case VarianceMode::time:
      return std::exp(std::sin(phase) / 2.0);
    case VarianceMode::space_time:
      return std::exp(c.var_space * (latent_first - 0.5) + std::sin(phase) / 2.0);
  }
  return 1.0;
}

namespace {

void check_coords(const Tensor& coords, const Tensor& latent) {
  if (coords.rank() != 2 || coords.cols() != 2 || latent.rank() != 2 || latent.rows() != coords.rows()) {
    throw DimensionError("ILSA needs n x 2 coordinates and matching latent coordinates");
  }
}

}  // namespace

Eigen::MatrixXd ilsa_kernel(const Tensor& coords, const Tensor& latent, const IlsaComponent& c) {
  check_coords(coords, latent);
  const std::size_t n = coords.rows(), d = latent.cols();
  if (d > c.kernel_latent.size()) throw DimensionError("latent coordinates wider than the kernel scales");
  double det = c.kernel_spatial[0] * c.kernel_spatial[1];
  for (std::size_t k = 0; k < d; ++k) det *= c.kernel_latent[k];
  if (det == 0) throw ConfigError("ILSA kernel scale of zero makes the scaling singular");
  const double front = 1.0 / std::sqrt(det);
  Eigen::MatrixXd k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double q = 0.0;
      for (std::size_t a = 0; a < 2; ++a) {
        const double diff = coords(i, a) - coords(j, a);
        q += c.kernel_spatial[a] * diff * diff;
      }
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = latent(i, a) - latent(j, a);
        q += c.kernel_latent[a] * diff * diff;
      }
      k(i, j) = k(j, i) = front * std::exp(-q);
    }
  }
  return k;
}

Eigen::MatrixXd ilsa_noise_corr(const Tensor& coords, const Tensor& latent, const IlsaComponent& c) {
  check_coords(coords, latent);
  const std::size_t n = coords.rows(), d = latent.cols();
  if (d > c.noise_latent.size()) throw DimensionError("latent coordinates wider than the noise scales");
  Eigen::MatrixXd v(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double q = 0.0;
      for (std::size_t a = 0; a < 2; ++a) {
        const double diff = coords(i, a) - coords(j, a);
        q += c.noise_spatial[a] * diff * diff;
      }
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = latent(i, a) - latent(j, a);
        q += c.noise_latent[a] * diff * diff;
      }
      v(i, j) = v(j, i) = matern_cov(std::sqrt(q), c.matern);
    }
  }
  return v;
}

Eigen::MatrixXd ilsa_noise_cov(const Tensor& coords, const Tensor& latent, const IlsaComponent& c,
                               VarianceMode mode, TimeVarianceForm form, double t) {
  Eigen::MatrixXd v = ilsa_noise_corr(coords, latent, c);
  Eigen::VectorXd sd(v.rows());
  for (Eigen::Index i = 0; i < sd.size(); ++i) sd(i) = ilsa_sd(c, mode, form, latent(static_cast<std::size_t>(i), 0), t);
  return sd.asDiagonal() * v * sd.asDiagonal();
}

double spectral_radius(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

aux::Locations grid_locations(std::size_t n_s, std::size_t n_t, Rng& rng) {
  Tensor sites(n_s, 2);
  for (double& v : sites.data()) v = rng.uniform();
  aux::Locations loc;
  loc.coords = Tensor(n_s * n_t, 2);
  loc.times.resize(n_s * n_t);
  for (std::size_t t = 0; t < n_t; ++t) {
    for (std::size_t i = 0; i < n_s; ++i) {
      const std::size_t r = t * n_s + i;
      loc.coords(r, 0) = sites(i, 0);
      loc.coords(r, 1) = sites(i, 1);
      loc.times[r] = static_cast<double>(t + 1);
    }
  }
  return loc;
}

namespace {

Tensor site_coords(const aux::Locations& loc, std::size_t n_s) { return loc.coords.slice_rows(0, n_s); }

/// Index of the nearest center for each site.
std::vector<std::size_t> voronoi(const Tensor& sites, const Tensor& centers) {
  std::vector<std::size_t> out(sites.rows());
  for (std::size_t i = 0; i < sites.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.rows(); ++k) {
      const double d = std::hypot(sites(i, 0) - centers(k, 0), sites(i, 1) - centers(k, 1));
      if (d < best) {
        best = d;
        out[i] = k;
      }
    }
  }
  return out;
}

Tensor uniform_points(std::size_t n, Rng& rng) {
  Tensor c(n, 2);
  for (double& v : c.data()) v = rng.uniform();
  return c;
}

std::size_t time_segment(std::size_t t, std::size_t n_t, std::size_t segments) {
  return std::min(segments - 1, t * segments / n_t);
}

std::string fmt(double v) { return io::format_double(v); }

void setting_cluster_gaussian(SimField& f, std::size_t n_s, std::size_t n_t, std::size_t p, Rng& rng) {
  constexpr std::size_t spatial = 3, temporal = 5;
  const Tensor centers = uniform_points(spatial, rng);
  const auto cell = voronoi(site_coords(f.locations, n_s), centers);
  std::vector<double> mu(spatial * temporal * p), sd(spatial * temporal * p);
  for (std::size_t k = 0; k < spatial * temporal; ++k) {
    for (std::size_t j = 0; j < p; ++j) {
      mu[k * p + j] = rng.uniform(-5, 5);
      sd[k * p + j] = rng.uniform(0.1, 5);
    }
  }
  for (std::size_t t = 0; t < n_t; ++t) {
    for (std::size_t i = 0; i < n_s; ++i) {
      const std::size_t k = cell[i] * temporal + time_segment(t, n_t, temporal);
      for (std::size_t j = 0; j < p; ++j) f.z(t * n_s + i, j) = rng.normal(mu[k * p + j], sd[k * p + j]);
    }
  }
  for (std::size_t k = 0; k < spatial; ++k) {
    f.params.set("center" + std::to_string(k + 1), fmt(centers(k, 0)) + "," + fmt(centers(k, 1)));
  }
  f.params.set("cluster_mean", io::join([&] {
                 std::vector<std::string> v;
                 for (double m : mu) v.push_back(fmt(m));
                 return v;
               }(), ";"));
  f.params.set("cluster_sd", io::join([&] {
                 std::vector<std::string> v;
                 for (double s : sd) v.push_back(fmt(s));
                 return v;
               }(), ";"));
}

const std::array<MaternParams, 5> kSetting2Matern{{{0.5, 0.30}, {0.1, 0.25}, {1, 0.35}, {2, 0.20}, {0.25, 0.15}}};

void setting_matern_segments(SimField& f, std::size_t n_s, std::size_t n_t, std::size_t p, Rng& rng) {
  constexpr std::size_t segments = 10;
  const Tensor sites = site_coords(f.locations, n_s);
  for (std::size_t j = 0; j < p; ++j) {
    const MaternParams mp = j < kSetting2Matern.size() ? kSetting2Matern[j]
                                                       : MaternParams{rng.uniform(0.1, 2.0), rng.uniform(0.15, 0.35)};
    Eigen::MatrixXd c(n_s, n_s);
    for (std::size_t a = 0; a < n_s; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        c(a, b) = c(b, a) = matern_cov(std::hypot(sites(a, 0) - sites(b, 0), sites(a, 1) - sites(b, 1)), mp);
      }
    }
    const Eigen::MatrixXd l = cholesky_with_jitter(c);
    std::vector<double> mu(segments), sd(segments);
    for (std::size_t k = 0; k < segments; ++k) {
      mu[k] = rng.uniform(-0.3, 0.3);
      sd[k] = rng.uniform(0, 0.4);
    }
    Eigen::VectorXd w(n_s);
    for (std::size_t t = 0; t < n_t; ++t) {
      for (std::size_t i = 0; i < n_s; ++i) w(i) = rng.normal();
      const Eigen::VectorXd field = l * w;
      const std::size_t k = time_segment(t, n_t, segments);
      for (std::size_t i = 0; i < n_s; ++i) f.z(t * n_s + i, j) = field(i) + rng.normal(mu[k], sd[k]);
    }
    f.params.set("matern" + std::to_string(j + 1), fmt(mp.nu) + "," + fmt(mp.phi));
  }
}

void setting_cluster_ar1(SimField& f, std::size_t n_s, std::size_t n_t, std::size_t p, Rng& rng) {
  constexpr std::size_t clusters = 5;
  const Tensor centers = uniform_points(clusters, rng);
  const auto cell = voronoi(site_coords(f.locations, n_s), centers);
  std::vector<double> rho(clusters * p), mu(clusters * p), sd(clusters * p);
  for (std::size_t k = 0; k < clusters * p; ++k) {
    rho[k] = rng.uniform(0.05, 0.95);
    mu[k] = rng.uniform(-1, 1);
    sd[k] = rng.uniform(0.1, 5);
  }
  for (std::size_t i = 0; i < n_s; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const std::size_t k = cell[i] * p + j;
      double prev = rng.normal(mu[k], sd[k]);
      f.z(i, j) = prev;
      for (std::size_t t = 1; t < n_t; ++t) {
        prev = rho[k] * prev + rng.normal(mu[k], sd[k]);
        f.z(t * n_s + i, j) = prev;
      }
    }
  }
  std::vector<std::string> r, m, s;
  for (std::size_t k = 0; k < clusters * p; ++k) {
    r.push_back(fmt(rho[k]));
    m.push_back(fmt(mu[k]));
    s.push_back(fmt(sd[k]));
  }
  for (std::size_t k = 0; k < clusters; ++k) {
    f.params.set("center" + std::to_string(k + 1), fmt(centers(k, 0)) + "," + fmt(centers(k, 1)));
  }
  f.params.set("cluster_rho", io::join(r, ";"));
  f.params.set("cluster_mean", io::join(m, ";"));
  f.params.set("cluster_sd", io::join(s, ";"));
}

void setting_ilsa(SimField& f, std::size_t n_s, std::size_t n_t, std::size_t p, VarianceMode mode,
                  const SimOptions& options, Rng& rng) {
  IlsaSpec spec = p == 5 ? IlsaSpec::table1(mode) : IlsaSpec::random(p, mode, rng);
  spec.form = options.time_form;
  spec.validate();
  f.params.set("ilsa_parameters", p == 5 ? "table1" : "random");
  f.params.set("time_variance_form", options.time_form == TimeVarianceForm::frequency ? "frequency" : "additive");
  const Tensor sites = site_coords(f.locations, n_s);
  const int burn = std::max(0, options.burn_in);
  for (std::size_t j = 0; j < p; ++j) {
    const IlsaComponent& c = spec.components[j];
    const Tensor latent = swirl(sites, c.deformation);
    Eigen::MatrixXd k = ilsa_kernel(sites, latent, c);
    const double radius = spectral_radius(c.ar_coef * k);
    if (radius >= 1.0) {
      k *= 0.99 / radius;
      f.warnings.push_back("component " + std::to_string(j + 1) + ": AR operator spectral radius " + fmt(radius) +
                           " >= 1, kernel rescaled to radius 0.99");
    }
    const Eigen::MatrixXd ar = c.ar_coef * k;
    const Eigen::MatrixXd l = cholesky_with_jitter(ilsa_noise_corr(sites, latent, c));
    Eigen::VectorXd state = Eigen::VectorXd::Zero(n_s), w(n_s), sd(n_s);
    auto noise = [&](double t) {
      for (std::size_t i = 0; i < n_s; ++i) {
        w(i) = rng.normal();
        sd(i) = ilsa_sd(c, mode, spec.form, latent(i, 0), t);
      }
      return Eigen::VectorXd(sd.cwiseProduct(l * w));
    };
    // Initial state is a noise draw at time 1 - burn; times <= 0 are discarded.
    const int first = 1 - burn;
    for (int t = first; t <= static_cast<int>(n_t); ++t) {
      state = t == first ? noise(t) : Eigen::VectorXd(ar * state + noise(t));
      if (t < 1) continue;
      for (std::size_t i = 0; i < n_s; ++i) f.z(static_cast<std::size_t>(t - 1) * n_s + i, j) = state(i);
    }
    const std::string id = std::to_string(j + 1);
    f.params.set("ilsa" + id + "_ar_radius", fmt(radius));
    f.params.set("ilsa" + id, io::join({fmt(c.kernel_spatial[0]), fmt(c.kernel_spatial[1]), fmt(c.kernel_latent[0]),
                                        fmt(c.kernel_latent[1]), fmt(c.noise_spatial[0]), fmt(c.noise_spatial[1]),
                                        fmt(c.noise_latent[0]), fmt(c.noise_latent[1]), fmt(c.ar_coef),
                                        fmt(c.deformation.center[0]), fmt(c.deformation.center[1]),
                                        fmt(c.deformation.scale), fmt(c.deformation.angle), fmt(c.matern.nu),
                                        fmt(c.matern.phi), fmt(c.var_space), fmt(c.var_shift), fmt(c.var_rate)},
                                       ","));
  }
}

}  // namespace

SimField gen_setting(int setting, std::size_t n_s, std::size_t n_t, std::size_t p, std::uint64_t seed,
                     const SimOptions& options) {
  if (setting < 1 || setting > 6) throw ConfigError("setting must be in 1..6, got " + std::to_string(setting));
  if (n_s < 2 || n_t < 2) throw ConfigError("need n_s >= 2 and n_t >= 2");
  if (p < 1) throw ConfigError("need at least one latent component");
  Rng loc_rng(derive_seed(seed, "locations"));
  Rng rng(derive_seed(seed, "setting", static_cast<std::uint64_t>(setting)));
  SimField f;
  f.locations = grid_locations(n_s, n_t, loc_rng);
  f.z = Tensor(n_s * n_t, p);
  f.params.set("setting", std::to_string(setting));
  switch (setting) {
    case 1: setting_cluster_gaussian(f, n_s, n_t, p, rng); break;
    case 2: setting_matern_segments(f, n_s, n_t, p, rng); break;
    case 3: setting_cluster_ar1(f, n_s, n_t, p, rng); break;
    case 4: setting_ilsa(f, n_s, n_t, p, VarianceMode::space, options, rng); break;
    case 5: setting_ilsa(f, n_s, n_t, p, VarianceMode::time, options, rng); break;
    default: setting_ilsa(f, n_s, n_t, p, VarianceMode::space_time, options, rng); break;
  }
  require_finite(f.z, "generated latent field");
  return f;
}

MixingFunction gen_mixing(std::size_t layers, std::size_t p, std::size_t s, std::uint64_t seed) {
  if (layers < 1) throw ConfigError("mixing needs at least one layer");
  if (p < 1 || s < p) throw ConfigError("mixing needs 1 <= P <= S");
  Rng rng(derive_seed(seed, "mixing"));
  MixingFunction f;
  for (std::size_t l = 0; l < layers; ++l) {
    const Eigen::Index cols = static_cast<Eigen::Index>(l == 0 ? p : s);
    Eigen::MatrixXd b(static_cast<Eigen::Index>(s), cols);
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.cols(); ++j) b(i, j) = rng.normal();
    }
    for (Eigen::Index i = 0; i < b.rows(); ++i) b.row(i) /= b.row(i).norm();
    for (Eigen::Index j = 0; j < b.cols(); ++j) b.col(j) /= b.col(j).norm();
    f.layers.push_back(std::move(b));
  }
  return f;
}

Tensor apply_mixing(const MixingFunction& f, const Tensor& z) {
  if (f.layers.empty()) throw StateError("mixing function has no layers");
  if (z.rank() != 2 || z.cols() != f.input_dim()) {
    throw DimensionError("mixing expects " + std::to_string(f.input_dim()) + " columns, got " + shape_string(z));
  }
  Eigen::MatrixXd h = z.to_eigen();
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    h = h * f.layers[l].transpose();
    if (l + 1 < f.layers.size()) h = h.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });
  }
  return Tensor::from_eigen(h);
}

SimDataset simulate(const SimRequest& r) {
  SimField field = gen_setting(r.setting, r.n_s, r.n_t, r.p, r.seed, r.options);
  const MixingFunction mix = gen_mixing(r.layers, r.p, r.s, derive_seed(r.seed, "mixing-function"));
  SimDataset d;
  d.locations = std::move(field.locations);
  d.x = apply_mixing(mix, field.z);
  d.z = std::move(field.z);
  d.warnings = std::move(field.warnings);
  d.params.set("command", "simulate");
  d.params.set("seed", std::to_string(r.seed));
  d.params.set("ns", std::to_string(r.n_s));
  d.params.set("nt", std::to_string(r.n_t));
  d.params.set("p", std::to_string(r.p));
  d.params.set("sdim", std::to_string(r.s));
  d.params.set("layers", std::to_string(r.layers));
  d.params.set("burn_in", std::to_string(r.options.burn_in));
  for (const auto& [k, v] : field.params.entries()) d.params.set(k, v);
  return d;
}

io::Table dataset_table(const SimDataset& d) {
  const std::size_t n = d.z.rows(), p = d.z.cols(), s = d.x.cols();
  io::Table t;
  t.columns = {"s1", "s2", "t"};
  for (std::size_t j = 0; j < p; ++j) t.columns.push_back("z" + std::to_string(j + 1));
  for (std::size_t j = 0; j < s; ++j) t.columns.push_back("x" + std::to_string(j + 1));
  t.values = Tensor(n, t.columns.size());
  for (std::size_t i = 0; i < n; ++i) {
    t.values(i, 0) = d.locations.coords(i, 0);
    t.values(i, 1) = d.locations.coords(i, 1);
    t.values(i, 2) = d.locations.times[i];
    for (std::size_t j = 0; j < p; ++j) t.values(i, 3 + j) = d.z(i, j);
    for (std::size_t j = 0; j < s; ++j) t.values(i, 3 + p + j) = d.x(i, j);
  }
  return t;
}

void write_dataset(const std::string& csv_path, const SimDataset& d) { io::write_csv(csv_path, dataset_table(d)); }

}  // namespace stivae::simgen
