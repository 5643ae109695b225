#pragma once

#include "stivae/aux.hpp"
#include "stivae/geostat.hpp"
#include "stivae/ivae.hpp"
#include "stivae/tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stivae::predict {

inline constexpr double kDefaultPeriod = 53.0;

// ---------------------------------------------------------------------------
// Harmonic seasonal component b0 + b1 cos(2 pi t / period) + b2 sin(2 pi t / period)

struct Harmonic {
  double intercept = 0.0;
  double cos = 0.0;
  double sin = 0.0;

  double at(double t, double period) const;
};

/// OLS fit; `residuals` (optional) receives series - fit.
Harmonic fit_harmonic(std::span<const double> series, std::span<const double> times, double period,
                      std::vector<double>* residuals = nullptr);

/// Per-station, per-variable harmonics. Stations are the distinct coordinate rows.
struct SeasonalFit {
  double period = kDefaultPeriod;
  Tensor station_coords;                           // stations x D
  std::vector<std::vector<Harmonic>> coef;         // [station][variable]
  std::vector<std::size_t> station_of_row;

  std::size_t stations() const { return coef.size(); }
  /// Seasonal component at the given rows; each row's coordinates must match a fitted station.
  Tensor evaluate(const aux::Locations& loc) const;
};

SeasonalFit fit_seasonal(const Tensor& x, const aux::Locations& loc, double period, Tensor* residuals = nullptr);

/// Distinct coordinate rows in first-seen order and the station index of every row.
Tensor unique_stations(const aux::Locations& loc, std::vector<std::size_t>* station_of_row = nullptr);

// ---------------------------------------------------------------------------
// Auxiliary variables for seasonal data: spatial bases on normalized
// coordinates, temporal bases on the phase (t mod period) / period, and a
// one-hot block for the year floor(t / period).

class SeasonalAuxBuilder {
 public:
  /// `scaling_locations` fixes the coordinate normalization (it may include
  /// target coordinates); `train` fixes the set of known years.
  static SeasonalAuxBuilder fit(const aux::ResolutionSpec& spec, double period, const aux::Locations& train,
                                const aux::Locations& scaling_locations);
  /// Rows in unknown years get an all-zero year block and one warning.
  aux::AuxMatrix apply(const aux::Locations& loc, std::vector<std::string>* warnings = nullptr) const;

  const std::vector<long>& years() const { return years_; }
  double period() const { return period_; }

 private:
  aux::ResolutionSpec spec_;
  double period_ = kDefaultPeriod;
  std::vector<double> lo_, hi_;
  std::vector<long> years_;
};

aux::AuxMatrix seasonal_aux(const aux::Locations& loc, const aux::ResolutionSpec& spec, double period,
                            std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Latent-space predictors

/// decode(trend(u_target)).
Tensor predict_ivae_direct(const ivae::IvaeModel& model, const Tensor& u_target);

enum class VariogramKind { product_sum, spatial };

struct KrigingSpec {
  std::size_t neighbors = 40;
  VariogramKind kind = VariogramKind::product_sum;
  /// Used for every component instead of fitting when set.
  std::optional<io::KeyValues> fixed_model;
  std::size_t spatial_bins = 12;
  double max_time_lag = 15;
  geostat::VariogramOptions variogram;
};

struct KrigedLatent {
  Tensor latent;       // trend + kriged residual at the targets
  Tensor kriging_sd;   // per component
  std::vector<io::KeyValues> models;  // fitted model per component (empty if skipped)
};

/// Residuals z - trend of each component kriged to the targets and added to
/// the target trend. Constant residual fields are not kriged.
KrigedLatent krige_latent(const ivae::IvaeModel& model, const Tensor& x_train, const Tensor& u_train,
                          const aux::Locations& loc_train, const Tensor& u_target,
                          const aux::Locations& loc_target, const KrigingSpec& spec);

Tensor predict_ivae_kriging(const ivae::IvaeModel& model, const Tensor& x_train, const Tensor& u_train,
                            const aux::Locations& loc_train, const Tensor& u_target,
                            const aux::Locations& loc_target, const KrigingSpec& spec);

// ---------------------------------------------------------------------------
// Seasonal components at new stations

struct ExtendedSeasonal {
  double period = kDefaultPeriod;
  Harmonic shared;            // fitted to the standardized station components
  std::vector<double> mean;   // kriged station mean per new station
  std::vector<double> sd;     // kriged station sd per new station

  double at(std::size_t station, double t) const;
};

/// One variable: standardize station components, fit shared harmonics,
/// krige station means and sds to `new_coords`, recombine.
ExtendedSeasonal extend_seasonal_trend(std::span<const Harmonic> station_fits, const Tensor& station_coords,
                                       const Tensor& new_coords, double period,
                                       const std::optional<io::KeyValues>& fixed_spatial_model = std::nullopt);

// ---------------------------------------------------------------------------
// Hold-out pipeline

enum class Mode { temporal, spatial, spatio_temporal };
enum class Strategy { ivae_direct, ivae_kriging };
Mode parse_mode(const std::string& s);
Strategy parse_strategy(const std::string& s);
std::string to_string(Mode m);
std::string to_string(Strategy s);

struct PredictTask {
  Mode mode = Mode::spatial;
  std::vector<Strategy> strategies{Strategy::ivae_direct, Strategy::ivae_kriging};
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  /// Seasonal auxiliary variables and (optionally) harmonic detrending need a period.
  std::optional<double> period;
  bool deseasonalize = false;
  aux::ResolutionSpec resolution;
  ivae::IvaeConfig ivae;
  KrigingSpec kriging;
};

struct StrategyScore {
  Strategy strategy = Strategy::ivae_direct;
  Tensor prediction;                // targets x S, observation scale
  std::vector<double> mse, mae;     // per variable
  double wmse = 0.0, wmae = 0.0;
};

struct PredictReport {
  std::vector<std::size_t> target_rows;  // indices into the input rows
  std::vector<std::size_t> train_rows;
  std::vector<double> train_sd;           // sd of the (deseasonalized) training data
  std::vector<StrategyScore> scores;
  StrategyScore mean_baseline;            // training-mean predictor
  std::vector<std::string> warnings;
  double final_elbo = 0.0;
};

/// Split rows into training and target sets according to the mode.
void split_rows(const aux::Locations& loc, Mode mode, double fraction, std::uint64_t seed,
                std::vector<std::size_t>& train, std::vector<std::size_t>& target);

PredictReport run_prediction(const Tensor& x, const aux::Locations& loc, const PredictTask& task);

}  // namespace stivae::predict
