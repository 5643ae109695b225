#pragma once

// Empirical space-time variograms, parametric variogram models and ordinary
// kriging over k nearest neighbours.

#include "stivae/aux.hpp"
#include "stivae/io.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stivae::geostat {

/// Exponential semivariance: 0 at h = 0, nugget + sill * (1 - exp(-h/range)) otherwise.
struct ExpComponent {
  double nugget = 0.0;
  double sill = 1.0;
  double range = 1.0;

  double gamma(double h) const;
  double plateau() const { return nugget + sill; }
  void validate(const std::string& what) const;
};

/// Variogram model used by kriging. Lags are non-negative spatial (Euclidean)
/// and temporal (absolute) separations.
class VariogramModel {
 public:
  virtual ~VariogramModel() = default;
  virtual double gamma(double hs, double ht) const = 0;
  /// Lag divisors for the neighbourhood metric; 0 for the temporal one drops time.
  virtual double spatial_scale() const = 0;
  virtual double temporal_scale() const = 0;
  /// Semivariance reached at large lags in every direction.
  virtual double plateau() const = 0;
  virtual void validate() const = 0;
  virtual io::KeyValues to_key_values() const = 0;
  virtual std::unique_ptr<VariogramModel> clone() const = 0;
};

/// gamma = gs + gt - k gs gt with 0 <= k <= 1/max(plateau_s, plateau_t).
class ProductSumModel final : public VariogramModel {
 public:
  ProductSumModel() = default;
  ProductSumModel(ExpComponent spatial, ExpComponent temporal, double k);

  double gamma(double hs, double ht) const override;
  double spatial_scale() const override { return spatial.range; }
  double temporal_scale() const override { return temporal.range; }
  double plateau() const override;
  void validate() const override;
  io::KeyValues to_key_values() const override;
  std::unique_ptr<VariogramModel> clone() const override { return std::make_unique<ProductSumModel>(*this); }

  double max_k() const;

  ExpComponent spatial;
  ExpComponent temporal;
  double k = 0.0;
};

/// Purely spatial exponential model; temporal lags are ignored.
class SpatialModel final : public VariogramModel {
 public:
  SpatialModel() = default;
  explicit SpatialModel(ExpComponent spatial) : spatial(spatial) {}

  double gamma(double hs, double) const override { return spatial.gamma(hs); }
  double spatial_scale() const override { return spatial.range; }
  double temporal_scale() const override { return 0.0; }
  double plateau() const override { return spatial.plateau(); }
  void validate() const override { spatial.validate("spatial"); }
  io::KeyValues to_key_values() const override;
  std::unique_ptr<VariogramModel> clone() const override { return std::make_unique<SpatialModel>(*this); }

  ExpComponent spatial;
};

std::unique_ptr<VariogramModel> model_from_key_values(const io::KeyValues& kv);

/// Matheron estimator on a grid of (spatial, temporal) lag bins. Bin b covers
/// [edges[b], edges[b+1]). Cells are stored spatial-major.
struct EmpiricalVariogram {
  std::vector<double> spatial_edges;
  std::vector<double> temporal_edges;
  std::vector<double> spatial_lag;   // mean spatial lag of the pairs in each cell
  std::vector<double> temporal_lag;  // mean temporal lag of the pairs in each cell
  std::vector<double> gamma;         // NaN for empty cells
  std::vector<std::size_t> count;

  std::size_t spatial_bins() const { return spatial_edges.size() - 1; }
  std::size_t temporal_bins() const { return temporal_edges.size() - 1; }
  std::size_t cell(std::size_t s, std::size_t t) const { return s * temporal_bins() + t; }
  std::size_t populated() const;
};

struct VariogramOptions {
  std::size_t max_pairs = 2'000'000;  // random pair subsample above this
  std::uint64_t seed = 0;
};

EmpiricalVariogram empirical_variogram(std::span<const double> values, const aux::Locations& loc,
                                       const std::vector<double>& spatial_edges,
                                       const std::vector<double>& temporal_edges,
                                       const VariogramOptions& options = {});

struct LagEdges {
  std::vector<double> spatial;
  std::vector<double> temporal;
};

/// An exact-zero bin followed by equal-width bins up to half the largest
/// spatial separation; integer-centred temporal bins up to `max_time_lag`.
LagEdges default_edges(const aux::Locations& loc, std::size_t spatial_bins = 12, double max_time_lag = 15);

/// Weighted (pair-count) least squares, multistart Levenberg-Marquardt on
/// transformed parameters. Throws NumericError when no admissible fit beats
/// the flat model.
ProductSumModel fit_product_sum(const EmpiricalVariogram& emp);
/// Exponential fit to the cells of the first temporal bin.
SpatialModel fit_spatial(const EmpiricalVariogram& emp);

struct KrigeOptions {
  std::size_t neighbors = 40;
  bool keep_weights = false;
};

struct KrigeResult {
  std::vector<double> prediction;
  std::vector<double> variance;
  std::vector<std::vector<std::size_t>> neighbors;  // filled when keep_weights
  std::vector<std::vector<double>> weights;         // filled when keep_weights
};

/// Ordinary kriging of every target from its nearest neighbours under the
/// model-scaled space-time metric.
KrigeResult krige(std::span<const double> values, const aux::Locations& loc, const VariogramModel& model,
                  const aux::Locations& targets, const KrigeOptions& options = {});

}  // namespace stivae::geostat
