#include "stivae/predict.hpp"

#include "stivae/error.hpp"
#include "stivae/metrics.hpp"
#include "stivae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

namespace stivae::predict {

double Harmonic::at(double t, double period) const {
  const double w = 2.0 * std::numbers::pi * t / period;
  return intercept + cos * std::cos(w) + sin * std::sin(w);
}

Harmonic fit_harmonic(std::span<const double> series, std::span<const double> times, double period,
                      std::vector<double>* residuals) {
  if (!(period > 0)) throw ConfigError("period must be positive");
  if (series.size() != times.size()) throw DimensionError("series and times differ in length");
  const std::size_t n = series.size();
  if (n < 3) throw DataError("harmonic fit needs at least 3 observations");
  const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  if (!(*hi - *lo > period / 2)) throw DataError("harmonic fit needs observations spanning more than half a period");
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 2.0 * std::numbers::pi * times[i] / period;
    design(i, 0) = 1.0;
    design(i, 1) = std::cos(w);
    design(i, 2) = std::sin(w);
    y(i) = series[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 3) throw DataError("harmonic design matrix is rank deficient");
  const Eigen::VectorXd b = qr.solve(y);
  Harmonic h{b(0), b(1), b(2)};
  if (residuals) {
    residuals->resize(n);
    for (std::size_t i = 0; i < n; ++i) (*residuals)[i] = series[i] - h.at(times[i], period);
  }
  return h;
}

Tensor unique_stations(const aux::Locations& loc, std::vector<std::size_t>* station_of_row) {
  std::map<std::vector<double>, std::size_t> index;
  std::vector<std::vector<double>> order;
  if (station_of_row) station_of_row->resize(loc.size());
  for (std::size_t i = 0; i < loc.size(); ++i) {
    std::vector<double> key(loc.coords.row(i).begin(), loc.coords.row(i).end());
    auto [it, inserted] = index.emplace(key, order.size());
    if (inserted) order.push_back(key);
    if (station_of_row) (*station_of_row)[i] = it->second;
  }
  Tensor out(order.size(), loc.dims());
  for (std::size_t s = 0; s < order.size(); ++s) {
    for (std::size_t d = 0; d < loc.dims(); ++d) out(s, d) = order[s][d];
  }
  return out;
}

Tensor SeasonalFit::evaluate(const aux::Locations& loc) const {
  std::map<std::vector<double>, std::size_t> index;
  for (std::size_t s = 0; s < station_coords.rows(); ++s) {
    index.emplace(std::vector<double>(station_coords.row(s).begin(), station_coords.row(s).end()), s);
  }
  const std::size_t vars = coef.empty() ? 0 : coef.front().size();
  Tensor out(loc.size(), vars);
  for (std::size_t i = 0; i < loc.size(); ++i) {
    auto it = index.find(std::vector<double>(loc.coords.row(i).begin(), loc.coords.row(i).end()));
    if (it == index.end()) throw DataError("row " + std::to_string(i) + " is not at a fitted station");
    for (std::size_t v = 0; v < vars; ++v) out(i, v) = coef[it->second][v].at(loc.times[i], period);
  }
  return out;
}

SeasonalFit fit_seasonal(const Tensor& x, const aux::Locations& loc, double period, Tensor* residuals) {
  if (x.rows() != loc.size()) throw DimensionError("observations and locations differ in length");
  SeasonalFit fit;
  fit.period = period;
  fit.station_coords = unique_stations(loc, &fit.station_of_row);
  const std::size_t stations = fit.station_coords.rows(), vars = x.cols();
  std::vector<std::vector<std::size_t>> rows(stations);
  for (std::size_t i = 0; i < loc.size(); ++i) rows[fit.station_of_row[i]].push_back(i);
  fit.coef.assign(stations, std::vector<Harmonic>(vars));
  if (residuals) *residuals = Tensor(x.rows(), vars);
  std::vector<double> series, times, res;
  for (std::size_t s = 0; s < stations; ++s) {
    times.clear();
    for (std::size_t r : rows[s]) times.push_back(loc.times[r]);
    for (std::size_t v = 0; v < vars; ++v) {
      series.clear();
      for (std::size_t r : rows[s]) series.push_back(x(r, v));
      fit.coef[s][v] = fit_harmonic(series, times, period, &res);
      if (residuals) {
        for (std::size_t k = 0; k < rows[s].size(); ++k) (*residuals)(rows[s][k], v) = res[k];
      }
    }
  }
  return fit;
}

namespace {

long year_of(double t, double period) { return static_cast<long>(std::floor(t / period)); }

double phase_of(double t, double period) {
  const double r = std::fmod(t, period);
  return (r < 0 ? r + period : r) / period;
}

}  // namespace

SeasonalAuxBuilder SeasonalAuxBuilder::fit(const aux::ResolutionSpec& spec, double period,
                                           const aux::Locations& train, const aux::Locations& scaling_locations) {
  if (!(period > 0)) throw ConfigError("seasonal auxiliary variables need a positive period");
  spec.validate();
  train.validate();
  scaling_locations.validate();
  SeasonalAuxBuilder b;
  b.spec_ = spec;
  b.period_ = period;
  const std::size_t d = scaling_locations.dims();
  for (std::size_t a = 0; a < d; ++a) {
    const auto col = scaling_locations.coords.column(a);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    if (!(*hi > *lo)) throw DataError("coordinate axis " + std::to_string(a + 1) + " is constant");
    b.lo_.push_back(*lo);
    b.hi_.push_back(*hi);
  }
  std::set<long> years;
  for (double t : train.times) years.insert(year_of(t, period));
  b.years_.assign(years.begin(), years.end());
  return b;
}

aux::AuxMatrix SeasonalAuxBuilder::apply(const aux::Locations& loc, std::vector<std::string>* warnings) const {
  loc.validate();
  if (loc.dims() != lo_.size()) throw DimensionError("locations have a different coordinate dimension");
  aux::Locations norm;
  norm.coords = loc.coords;
  norm.times.resize(loc.size());
  for (std::size_t i = 0; i < loc.size(); ++i) {
    for (std::size_t a = 0; a < lo_.size(); ++a) norm.coords(i, a) = (loc.coords(i, a) - lo_[a]) / (hi_[a] - lo_[a]);
    norm.times[i] = phase_of(loc.times[i], period_);
  }
  const aux::RadialBasis basis(spec_, loc.dims());
  const Tensor rb = basis.eval(norm);
  aux::AuxMatrix m;
  m.builder = aux::Builder::seasonal;
  m.columns = basis.column_names();
  for (long y : years_) m.columns.push_back("year" + std::to_string(y));
  m.values = Tensor(loc.size(), rb.cols() + years_.size());
  std::size_t unknown = 0;
  for (std::size_t i = 0; i < loc.size(); ++i) {
    std::copy(rb.row(i).begin(), rb.row(i).end(), m.values.row(i).begin());
    const auto it = std::lower_bound(years_.begin(), years_.end(), year_of(loc.times[i], period_));
    if (it != years_.end() && *it == year_of(loc.times[i], period_)) {
      m.values(i, rb.cols() + static_cast<std::size_t>(it - years_.begin())) = 1.0;
    } else {
      ++unknown;
    }
  }
  if (unknown > 0 && warnings) {
    warnings->push_back(std::to_string(unknown) + " row(s) fall in years outside the training years; year block left empty");
  }
  return m;
}

aux::AuxMatrix seasonal_aux(const aux::Locations& loc, const aux::ResolutionSpec& spec, double period,
                            std::vector<std::string>* warnings) {
  return SeasonalAuxBuilder::fit(spec, period, loc, loc).apply(loc, warnings);
}

Tensor predict_ivae_direct(const ivae::IvaeModel& model, const Tensor& u_target) {
  return ivae::decode(model, ivae::aux_prior(model, u_target).mean);
}

namespace {

std::unique_ptr<geostat::VariogramModel> component_model(std::span<const double> values, const aux::Locations& loc,
                                                         const KrigingSpec& spec) {
  if (spec.fixed_model) return geostat::model_from_key_values(*spec.fixed_model);
  if (spec.kind == VariogramKind::spatial) {
    const auto edges = geostat::default_edges(loc, spec.spatial_bins, 0);
    const auto emp = geostat::empirical_variogram(values, loc, edges.spatial, {-0.5, 0.5}, spec.variogram);
    return std::make_unique<geostat::SpatialModel>(geostat::fit_spatial(emp));
  }
  const auto edges = geostat::default_edges(loc, spec.spatial_bins, spec.max_time_lag);
  const auto emp = geostat::empirical_variogram(values, loc, edges.spatial, edges.temporal, spec.variogram);
  return std::make_unique<geostat::ProductSumModel>(geostat::fit_product_sum(emp));
}

/// Constant up to rounding relative to the values' magnitude.
bool is_constant(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo <= 1e-12 * std::max({1.0, std::abs(*lo), std::abs(*hi)});
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a;
  return s / static_cast<double>(v.size());
}

}  // namespace

KrigedLatent krige_latent(const ivae::IvaeModel& model, const Tensor& x_train, const Tensor& u_train,
                          const aux::Locations& loc_train, const Tensor& u_target,
                          const aux::Locations& loc_target, const KrigingSpec& spec) {
  if (loc_train.size() != x_train.rows() || loc_target.size() != u_target.rows()) {
    throw DimensionError("locations and data differ in length");
  }
  const auto latent = ivae::extract_sources(model, x_train, u_train);
  const auto target_prior = ivae::aux_prior(model, u_target);
  const std::size_t p = model.latent_dim();
  KrigedLatent out{target_prior.mean, Tensor(u_target.rows(), p), {}};
  out.models.resize(p);
  std::vector<double> residual(x_train.rows());
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = latent.sources(i, j) - latent.trend(i, j);
    if (is_constant(residual)) {
      const double level = mean_of(residual);
      for (std::size_t q = 0; q < u_target.rows(); ++q) out.latent(q, j) += level;
      continue;
    }
    try {
      const auto vm = component_model(residual, loc_train, spec);
      geostat::KrigeOptions ko;
      ko.neighbors = std::min(spec.neighbors, residual.size());
      const auto kr = geostat::krige(residual, loc_train, *vm, loc_target, ko);
      for (std::size_t q = 0; q < u_target.rows(); ++q) {
        out.latent(q, j) += kr.prediction[q];
        out.kriging_sd(q, j) = std::sqrt(std::max(0.0, kr.variance[q]));
      }
      out.models[j] = vm->to_key_values();
    } catch (const Error& e) {
      throw NumericError("latent component " + std::to_string(j + 1) + ": " + e.what());
    }
  }
  return out;
}

Tensor predict_ivae_kriging(const ivae::IvaeModel& model, const Tensor& x_train, const Tensor& u_train,
                            const aux::Locations& loc_train, const Tensor& u_target,
                            const aux::Locations& loc_target, const KrigingSpec& spec) {
  return ivae::decode(model, krige_latent(model, x_train, u_train, loc_train, u_target, loc_target, spec).latent);
}

double ExtendedSeasonal::at(std::size_t station, double t) const {
  return shared.at(t, period) * sd.at(station) + mean.at(station);
}

namespace {

std::vector<double> krige_station_values(const std::vector<double>& values, const Tensor& coords,
                                         const Tensor& new_coords, const std::optional<io::KeyValues>& fixed,
                                         const std::string& step) {
  if (is_constant(values)) return std::vector<double>(new_coords.rows(), mean_of(values));
  aux::Locations train{coords, std::vector<double>(coords.rows(), 0.0)};
  aux::Locations target{new_coords, std::vector<double>(new_coords.rows(), 0.0)};
  try {
    std::unique_ptr<geostat::VariogramModel> vm;
    if (fixed) {
      vm = geostat::model_from_key_values(*fixed);
    } else {
      const auto edges = geostat::default_edges(train, std::min<std::size_t>(8, coords.rows()), 0);
      vm = std::make_unique<geostat::SpatialModel>(
          geostat::fit_spatial(geostat::empirical_variogram(values, train, edges.spatial, {-0.5, 0.5})));
    }
    geostat::KrigeOptions ko;
    ko.neighbors = std::min<std::size_t>(40, values.size());
    return geostat::krige(values, train, *vm, target, ko).prediction;
  } catch (const Error& e) {
    throw NumericError("seasonal extension step 3 (" + step + "): " + e.what());
  }
}

}  // namespace

ExtendedSeasonal extend_seasonal_trend(std::span<const Harmonic> station_fits, const Tensor& station_coords,
                                       const Tensor& new_coords, double period,
                                       const std::optional<io::KeyValues>& fixed_spatial_model) {
  const std::size_t m = station_fits.size();
  if (m < 5) throw DataError("seasonal extension needs at least 5 training stations");
  if (station_coords.rows() != m) throw DimensionError("one coordinate row per station fit required");
  if (new_coords.cols() != station_coords.cols()) throw DimensionError("new coordinates differ in dimension");
  const std::size_t grid = static_cast<std::size_t>(std::ceil(period));
  // Step 1: station mean and sd of the seasonal component over one period.
  std::vector<double> means(m), sds(m);
  std::vector<std::vector<double>> series(m, std::vector<double>(grid));
  for (std::size_t s = 0; s < m; ++s) {
    double mu = 0.0;
    for (std::size_t k = 0; k < grid; ++k) {
      series[s][k] = station_fits[s].at(static_cast<double>(k + 1), period);
      mu += series[s][k];
    }
    mu /= static_cast<double>(grid);
    double ss = 0.0;
    for (double v : series[s]) ss += (v - mu) * (v - mu);
    means[s] = mu;
    sds[s] = std::sqrt(ss / static_cast<double>(grid));
  }
  // Step 2: shared harmonics fitted to the pooled standardized components.
  std::vector<double> pooled, times;
  for (std::size_t s = 0; s < m; ++s) {
    if (!(sds[s] > 1e-12 * (1.0 + std::abs(means[s])))) continue;
    for (std::size_t k = 0; k < grid; ++k) {
      pooled.push_back((series[s][k] - means[s]) / sds[s]);
      times.push_back(static_cast<double>(k + 1));
    }
  }
  ExtendedSeasonal out;
  out.period = period;
  if (!pooled.empty()) out.shared = fit_harmonic(pooled, times, period);
  // Step 3: krige station means and sds.
  out.mean = krige_station_values(means, station_coords, new_coords, fixed_spatial_model, "means");
  out.sd = krige_station_values(sds, station_coords, new_coords, fixed_spatial_model, "sds");
  for (double& v : out.sd) v = std::max(0.0, v);
  // Step 4 is ExtendedSeasonal::at.
  return out;
}

Mode parse_mode(const std::string& s) {
  if (s == "temporal") return Mode::temporal;
  if (s == "spatial") return Mode::spatial;
  if (s == "spatio-temporal") return Mode::spatio_temporal;
  throw ConfigError("unknown prediction mode '" + s + "' (temporal, spatial, spatio-temporal)");
}

Strategy parse_strategy(const std::string& s) {
  if (s == "ivae-direct") return Strategy::ivae_direct;
  if (s == "ivae-kriging") return Strategy::ivae_kriging;
  throw ConfigError("unknown strategy '" + s + "' (ivae-direct, ivae-kriging)");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::temporal: return "temporal";
    case Mode::spatial: return "spatial";
    case Mode::spatio_temporal: return "spatio-temporal";
  }
  return "?";
}

std::string to_string(Strategy s) { return s == Strategy::ivae_direct ? "ivae-direct" : "ivae-kriging"; }

void split_rows(const aux::Locations& loc, Mode mode, double fraction, std::uint64_t seed,
                std::vector<std::size_t>& train, std::vector<std::size_t>& target) {
  if (!(fraction > 0 && fraction < 1)) throw ConfigError("hold-out fraction must lie in (0, 1)");
  train.clear();
  target.clear();
  const std::size_t n = loc.size();
  Rng rng(derive_seed(seed, "holdout"));
  std::vector<char> held(n, 0);
  switch (mode) {
    case Mode::spatial: {
      std::vector<std::size_t> station;
      const std::size_t m = unique_stations(loc, &station).rows();
      const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(fraction * m)));
      if (k >= m) throw DataError("hold-out would leave no training stations");
      std::vector<std::size_t> perm(m);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      std::vector<char> out_station(m, 0);
      for (std::size_t i = 0; i < k; ++i) out_station[perm[i]] = 1;
      for (std::size_t i = 0; i < n; ++i) held[i] = out_station[station[i]];
      break;
    }
    case Mode::temporal: {
      std::set<double> times(loc.times.begin(), loc.times.end());
      const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(fraction * times.size())));
      if (k >= times.size()) throw DataError("hold-out would leave no training times");
      const double cutoff = *std::next(times.begin(), static_cast<std::ptrdiff_t>(times.size() - k));
      for (std::size_t i = 0; i < n; ++i) held[i] = loc.times[i] >= cutoff;
      break;
    }
    case Mode::spatio_temporal: {
      for (std::size_t i = 0; i < n; ++i) held[i] = rng.uniform() < fraction;
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) (held[i] ? target : train).push_back(i);
  if (train.empty() || target.empty()) throw DataError("hold-out split produced an empty set");
}

namespace {

StrategyScore score(Strategy s, Tensor prediction, const Tensor& truth, const std::vector<double>& sd) {
  StrategyScore r;
  r.strategy = s;
  r.mse = metrics::column_mse(truth, prediction);
  r.mae = metrics::column_mae(truth, prediction);
  r.wmse = metrics::wmse(truth, prediction, sd);
  r.wmae = metrics::wmae(truth, prediction, sd);
  r.prediction = std::move(prediction);
  return r;
}

}  // namespace

PredictReport run_prediction(const Tensor& x, const aux::Locations& loc, const PredictTask& task) {
  loc.validate();
  if (x.rows() != loc.size()) throw DimensionError("observations and locations differ in length");
  if (task.mode == Mode::temporal && !task.period) {
    throw ConfigError("temporal prediction needs a seasonal period for the auxiliary variables");
  }
  if (task.deseasonalize && !task.period) throw ConfigError("deseasonalizing needs a period");
  if (task.strategies.empty()) throw ConfigError("no prediction strategy requested");

  PredictReport report;
  split_rows(loc, task.mode, task.holdout_fraction, task.seed, report.train_rows, report.target_rows);
  const aux::Locations loc_train = loc.subset(report.train_rows), loc_target = loc.subset(report.target_rows);
  Tensor x_train = x.gather_rows(report.train_rows);
  const Tensor x_target = x.gather_rows(report.target_rows);

  // Seasonal component of training and target rows (zero when not detrending).
  Tensor seasonal_train(x_train.rows(), x.cols()), seasonal_target(x_target.rows(), x.cols());
  if (task.deseasonalize) {
    Tensor residual;
    const SeasonalFit fit = fit_seasonal(x_train, loc_train, *task.period, &residual);
    seasonal_train = fit.evaluate(loc_train);
    x_train = residual;
    if (task.mode == Mode::spatial) {
      std::vector<std::size_t> target_station;
      const Tensor new_coords = unique_stations(loc_target, &target_station);
      for (std::size_t v = 0; v < x.cols(); ++v) {
        std::vector<Harmonic> per_station;
        for (const auto& c : fit.coef) per_station.push_back(c[v]);
        const auto ext = extend_seasonal_trend(per_station, fit.station_coords, new_coords, *task.period);
        for (std::size_t i = 0; i < loc_target.size(); ++i) {
          seasonal_target(i, v) = ext.at(target_station[i], loc_target.times[i]);
        }
      }
    } else {
      seasonal_target = fit.evaluate(loc_target);
    }
  }
  report.train_sd = metrics::column_sd(x_train);

  aux::AuxMatrix u_train, u_target;
  if (task.period) {
    const auto builder = SeasonalAuxBuilder::fit(task.resolution, *task.period, loc_train, loc);
    u_train = builder.apply(loc_train);
    u_target = builder.apply(loc_target, &report.warnings);
  } else {
    aux::AuxConfig cfg;
    cfg.kind = aux::AuxKind::radial;
    cfg.resolution = task.resolution;
    const auto builder = aux::AuxBuilder::fit(cfg, loc);
    u_train = builder.apply(loc_train);
    u_target = builder.apply(loc_target);
  }

  ivae::IvaeConfig cfg = task.ivae;
  cfg.seed = derive_seed(task.seed, "ivae");
  const auto trained = ivae::train(x_train, u_train.values, cfg);
  report.final_elbo = trained.latent.final_elbo;

  auto add_seasonal = [&](Tensor pred) {
    for (std::size_t i = 0; i < pred.rows(); ++i) {
      for (std::size_t v = 0; v < pred.cols(); ++v) pred(i, v) += seasonal_target(i, v);
    }
    return pred;
  };

  for (Strategy s : task.strategies) {
    Tensor pred = s == Strategy::ivae_direct
                      ? predict_ivae_direct(trained.model, u_target.values)
                      : predict_ivae_kriging(trained.model, x_train, u_train.values, loc_train, u_target.values,
                                             loc_target, task.kriging);
    report.scores.push_back(score(s, add_seasonal(std::move(pred)), x_target, report.train_sd));
  }
  Tensor mean_pred(x_target.rows(), x.cols());
  for (std::size_t v = 0; v < x.cols(); ++v) {
    double m = 0.0;
    for (std::size_t i = 0; i < x_train.rows(); ++i) m += x_train(i, v);
    m /= static_cast<double>(x_train.rows());
    for (std::size_t i = 0; i < mean_pred.rows(); ++i) mean_pred(i, v) = m;
  }
  report.mean_baseline = score(Strategy::ivae_direct, add_seasonal(std::move(mean_pred)), x_target, report.train_sd);
  return report;
}

}  // namespace stivae::predict
