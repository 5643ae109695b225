#include "stivae/geostat.hpp"

#include "stivae/error.hpp"
#include "stivae/rng.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace stivae::geostat {

double ExpComponent::gamma(double h) const {
  if (h <= 0) return 0.0;
  return nugget + sill * (1.0 - std::exp(-h / range));
}

void ExpComponent::validate(const std::string& what) const {
  if (!(nugget >= 0) || !(sill > 0) || !(range > 0) || !std::isfinite(nugget + sill + range)) {
    throw ConfigError(what + " component needs nugget >= 0, sill > 0 and range > 0");
  }
}

ProductSumModel::ProductSumModel(ExpComponent spatial, ExpComponent temporal, double k)
    : spatial(spatial), temporal(temporal), k(k) {}

double ProductSumModel::gamma(double hs, double ht) const {
  const double gs = spatial.gamma(hs), gt = temporal.gamma(ht);
  return gs + gt - k * gs * gt;
}

double ProductSumModel::plateau() const {
  const double ps = spatial.plateau(), pt = temporal.plateau();
  return ps + pt - k * ps * pt;
}

double ProductSumModel::max_k() const { return 1.0 / std::max(spatial.plateau(), temporal.plateau()); }

void ProductSumModel::validate() const {
  spatial.validate("spatial");
  temporal.validate("temporal");
  if (!(k >= 0) || k > max_k() * (1 + 1e-12)) {
    throw ConfigError("product-sum coefficient k must lie in [0, 1/max(plateau)]");
  }
}

namespace {

void put_component(io::KeyValues& kv, const std::string& prefix, const ExpComponent& c) {
  kv.set(prefix + "_nugget", io::format_double(c.nugget));
  kv.set(prefix + "_sill", io::format_double(c.sill));
  kv.set(prefix + "_range", io::format_double(c.range));
}

ExpComponent get_component(const io::KeyValues& kv, const std::string& prefix) {
  return {std::stod(kv.get(prefix + "_nugget")), std::stod(kv.get(prefix + "_sill")),
          std::stod(kv.get(prefix + "_range"))};
}

}  // namespace

io::KeyValues ProductSumModel::to_key_values() const {
  io::KeyValues kv;
  kv.set("model", "product-sum");
  put_component(kv, "spatial", spatial);
  put_component(kv, "temporal", temporal);
  kv.set("k", io::format_double(k));
  return kv;
}

io::KeyValues SpatialModel::to_key_values() const {
  io::KeyValues kv;
  kv.set("model", "spatial");
  put_component(kv, "spatial", spatial);
  return kv;
}

std::unique_ptr<VariogramModel> model_from_key_values(const io::KeyValues& kv) {
  const std::string& kind = kv.get("model");
  std::unique_ptr<VariogramModel> m;
  if (kind == "product-sum") {
    m = std::make_unique<ProductSumModel>(get_component(kv, "spatial"), get_component(kv, "temporal"),
                                          std::stod(kv.get("k")));
  } else if (kind == "spatial") {
    m = std::make_unique<SpatialModel>(get_component(kv, "spatial"));
  } else {
    throw ConfigError("unknown variogram model '" + kind + "'");
  }
  m->validate();
  return m;
}

std::size_t EmpiricalVariogram::populated() const {
  return static_cast<std::size_t>(std::count_if(count.begin(), count.end(), [](std::size_t c) { return c > 0; }));
}

namespace {

double spatial_lag(const aux::Locations& loc, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t a = 0; a < loc.dims(); ++a) {
    const double d = loc.coords(i, a) - loc.coords(j, a);
    s += d * d;
  }
  return std::sqrt(s);
}

void check_edges(const std::vector<double>& e, const std::string& what) {
  if (e.size() < 2) throw ConfigError(what + " bins need at least two edges");
  for (std::size_t i = 1; i < e.size(); ++i) {
    if (!(e[i] > e[i - 1])) throw ConfigError(what + " bin edges must be strictly increasing");
  }
}

long find_bin(const std::vector<double>& e, double v) {
  if (v < e.front() || v >= e.back()) return -1;
  return static_cast<long>(std::upper_bound(e.begin(), e.end(), v) - e.begin()) - 1;
}

}  // namespace

EmpiricalVariogram empirical_variogram(std::span<const double> values, const aux::Locations& loc,
                                       const std::vector<double>& spatial_edges,
                                       const std::vector<double>& temporal_edges, const VariogramOptions& options) {
  const std::size_t n = values.size();
  if (n < 2) throw DataError("variogram needs at least two observations");
  if (loc.size() != n) throw DimensionError("values and locations differ in length");
  check_edges(spatial_edges, "spatial");
  check_edges(temporal_edges, "temporal");

  EmpiricalVariogram emp;
  emp.spatial_edges = spatial_edges;
  emp.temporal_edges = temporal_edges;
  const std::size_t cells = emp.spatial_bins() * emp.temporal_bins();
  emp.spatial_lag.assign(cells, 0.0);
  emp.temporal_lag.assign(cells, 0.0);
  emp.gamma.assign(cells, 0.0);
  emp.count.assign(cells, 0);

  auto add = [&](std::size_t i, std::size_t j) {
    const double hs = spatial_lag(loc, i, j), ht = std::abs(loc.times[i] - loc.times[j]);
    const long a = find_bin(spatial_edges, hs), b = find_bin(temporal_edges, ht);
    if (a < 0 || b < 0) return;
    const std::size_t c = emp.cell(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    const double d = values[i] - values[j];
    emp.gamma[c] += 0.5 * d * d;
    emp.spatial_lag[c] += hs;
    emp.temporal_lag[c] += ht;
    ++emp.count[c];
  };

  const double total_pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  if (total_pairs <= static_cast<double>(options.max_pairs)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) add(i, j);
    }
  } else {
    Rng rng(derive_seed(options.seed, "variogram-pairs"));
    for (std::size_t p = 0; p < options.max_pairs; ++p) {
      const std::size_t i = rng.below(n);
      std::size_t j = rng.below(n - 1);
      if (j >= i) ++j;
      add(i, j);
    }
  }
  for (std::size_t c = 0; c < cells; ++c) {
    if (emp.count[c] == 0) {
      emp.gamma[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double k = static_cast<double>(emp.count[c]);
    emp.gamma[c] /= k;
    emp.spatial_lag[c] /= k;
    emp.temporal_lag[c] /= k;
  }
  if (emp.populated() == 0) throw DataError("every variogram bin is empty");
  return emp;
}

LagEdges default_edges(const aux::Locations& loc, std::size_t spatial_bins, double max_time_lag) {
  loc.validate();
  double max_d = 0.0;
  for (std::size_t a = 0; a < loc.dims(); ++a) {
    const auto col = loc.coords.column(a);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    max_d += (*hi - *lo) * (*hi - *lo);
  }
  const double reach = 0.5 * std::sqrt(max_d);
  if (!(reach > 0)) throw DataError("all locations coincide in space");
  LagEdges e;
  e.spatial = {0.0, 1e-12};
  for (std::size_t b = 1; b <= spatial_bins; ++b) e.spatial.push_back(reach * static_cast<double>(b) / spatial_bins);
  for (double t = -0.5; t <= max_time_lag + 0.5 + 1e-9; t += 1.0) e.temporal.push_back(t);
  return e;
}

namespace {

struct Cell {
  double hs, ht, gamma, weight;
};

std::vector<Cell> fit_cells(const EmpiricalVariogram& emp, bool first_temporal_only) {
  std::vector<Cell> cells;
  for (std::size_t a = 0; a < emp.spatial_bins(); ++a) {
    for (std::size_t b = 0; b < emp.temporal_bins(); ++b) {
      if (first_temporal_only && b != 0) continue;
      const std::size_t c = emp.cell(a, b);
      if (emp.count[c] == 0) continue;
      if (emp.spatial_lag[c] <= 0 && emp.temporal_lag[c] <= 0) continue;  // coincident pairs
      cells.push_back({emp.spatial_lag[c], emp.temporal_lag[c], emp.gamma[c], static_cast<double>(emp.count[c])});
    }
  }
  return cells;
}

double flat_sse(const std::vector<Cell>& cells) {
  double wsum = 0.0, mean = 0.0;
  for (const auto& c : cells) {
    wsum += c.weight;
    mean += c.weight * c.gamma;
  }
  mean /= wsum;
  double sse = 0.0;
  for (const auto& c : cells) sse += c.weight * (c.gamma - mean) * (c.gamma - mean);
  return sse;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// Parameter vector: sqrt nugget, log sill, log range for each component, logit of k / k_max.
ExpComponent decode_component(const Eigen::VectorXd& x, Eigen::Index at) {
  return {x(at) * x(at), std::exp(std::clamp(x(at + 1), -30.0, 30.0)), std::exp(std::clamp(x(at + 2), -30.0, 30.0))};
}

ProductSumModel decode_product_sum(const Eigen::VectorXd& x) {
  ProductSumModel m(decode_component(x, 0), decode_component(x, 3), 0.0);
  m.k = m.max_k() * sigmoid(x(6));
  return m;
}

template <class Decode>
struct ResidualFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const std::vector<Cell>* cells;
  Decode decode;
  int n_inputs;

  int inputs() const { return n_inputs; }
  int values() const { return std::max(static_cast<int>(cells->size()), n_inputs); }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    const auto model = decode(x);
    r.setZero(values());
    for (std::size_t i = 0; i < cells->size(); ++i) {
      const Cell& c = (*cells)[i];
      r(static_cast<Eigen::Index>(i)) = std::sqrt(c.weight) * (c.gamma - model.gamma(c.hs, c.ht));
    }
    return 0;
  }
};

template <class Decode>
Eigen::VectorXd least_squares(const std::vector<Cell>& cells, Decode decode, Eigen::VectorXd x, double* sse) {
  ResidualFunctor<Decode> f{&cells, decode, static_cast<int>(x.size())};
  Eigen::NumericalDiff<ResidualFunctor<Decode>> nd(f);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<ResidualFunctor<Decode>>> lm(nd);
  lm.parameters.maxfev = 2000;
  lm.minimize(x);
  Eigen::VectorXd r;
  f(x, r);
  *sse = r.squaredNorm();
  return x;
}

struct Scales {
  double spatial_sill, temporal_sill, spatial_reach, temporal_reach;
};

Scales initial_scales(const std::vector<Cell>& cells) {
  Scales s{0, 0, 0, 0};
  double total = 0.0;
  for (const auto& c : cells) {
    s.spatial_reach = std::max(s.spatial_reach, c.hs);
    s.temporal_reach = std::max(s.temporal_reach, c.ht);
    total = std::max(total, c.gamma);
  }
  // Marginal plateaus: largest semivariance along each lag axis near the other axis' origin.
  double min_ht = std::numeric_limits<double>::infinity(), min_hs = min_ht;
  for (const auto& c : cells) {
    min_ht = std::min(min_ht, c.ht);
    min_hs = std::min(min_hs, c.hs);
  }
  for (const auto& c : cells) {
    if (c.ht == min_ht) s.spatial_sill = std::max(s.spatial_sill, c.gamma);
    if (c.hs == min_hs) s.temporal_sill = std::max(s.temporal_sill, c.gamma);
  }
  const double floor = std::max(total, 1e-12) * 0.05;
  s.spatial_sill = std::max(s.spatial_sill, floor);
  s.temporal_sill = std::max(s.temporal_sill, floor);
  s.spatial_reach = std::max(s.spatial_reach, 1e-6);
  s.temporal_reach = std::max(s.temporal_reach, 1e-6);
  return s;
}

}  // namespace

ProductSumModel fit_product_sum(const EmpiricalVariogram& emp) {
  const auto cells = fit_cells(emp, false);
  std::size_t spatial_axes = 0, temporal_axes = 0;
  for (const auto& c : cells) {
    spatial_axes += c.hs > 0;
    temporal_axes += c.ht > 0;
  }
  if (cells.size() < 6 || spatial_axes == 0 || temporal_axes == 0) {
    throw DataError("product-sum fit needs at least 6 populated bins spanning both lag axes (have " +
                    std::to_string(cells.size()) + ")");
  }
  const Scales sc = initial_scales(cells);
  const double flat = flat_sse(cells);
  double best_sse = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;
  for (double range_frac : {0.1, 0.3, 1.0}) {
    for (double k_frac : {0.1, 0.5, 0.9}) {
      for (double nugget_frac : {0.01, 0.2}) {
        Eigen::VectorXd x(7);
        x << std::sqrt(nugget_frac * sc.spatial_sill), std::log((1 - nugget_frac) * sc.spatial_sill),
            std::log(range_frac * sc.spatial_reach), std::sqrt(nugget_frac * sc.temporal_sill),
            std::log((1 - nugget_frac) * sc.temporal_sill), std::log(range_frac * sc.temporal_reach), logit(k_frac);
        double sse = 0.0;
        x = least_squares(cells, decode_product_sum, x, &sse);
        if (std::isfinite(sse) && sse < best_sse) {
          best_sse = sse;
          best = x;
        }
      }
    }
  }
  if (!(best_sse < flat)) {
    throw NumericError("product-sum fit (weighted SSE " + io::format_double(best_sse) +
                       ") does not improve on the flat model (" + io::format_double(flat) + ") over " +
                       std::to_string(cells.size()) + " bins");
  }
  ProductSumModel m = decode_product_sum(best);
  m.validate();
  return m;
}

SpatialModel fit_spatial(const EmpiricalVariogram& emp) {
  const auto cells = fit_cells(emp, true);
  if (cells.size() < 3) {
    throw DataError("spatial fit needs at least 3 populated bins (have " + std::to_string(cells.size()) + ")");
  }
  const Scales sc = initial_scales(cells);
  const double flat = flat_sse(cells);
  auto decode = [](const Eigen::VectorXd& x) { return SpatialModel(decode_component(x, 0)); };
  double best_sse = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;
  for (double range_frac : {0.05, 0.2, 0.5, 1.0}) {
    for (double nugget_frac : {0.01, 0.2}) {
      Eigen::VectorXd x(3);
      x << std::sqrt(nugget_frac * sc.spatial_sill), std::log((1 - nugget_frac) * sc.spatial_sill),
          std::log(range_frac * sc.spatial_reach);
      double sse = 0.0;
      x = least_squares(cells, decode, x, &sse);
      if (std::isfinite(sse) && sse < best_sse) {
        best_sse = sse;
        best = x;
      }
    }
  }
  if (!(best_sse <= flat)) {
    throw NumericError("spatial fit (weighted SSE " + io::format_double(best_sse) +
                       ") does not improve on the flat model (" + io::format_double(flat) + ")");
  }
  SpatialModel m = decode(best);
  m.validate();
  return m;
}

namespace {

double scaled_distance(const aux::Locations& a, std::size_t i, const aux::Locations& b, std::size_t j, double ss,
                       double ts) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.dims(); ++k) {
    const double v = (a.coords(i, k) - b.coords(j, k)) / ss;
    d += v * v;
  }
  if (ts > 0) {
    const double v = (a.times[i] - b.times[j]) / ts;
    d += v * v;
  }
  return d;
}

}  // namespace

KrigeResult krige(std::span<const double> values, const aux::Locations& loc, const VariogramModel& model,
                  const aux::Locations& targets, const KrigeOptions& options) {
  model.validate();
  const std::size_t n = values.size();
  if (loc.size() != n) throw DimensionError("values and locations differ in length");
  if (targets.size() > 0 && targets.dims() != loc.dims()) throw DimensionError("targets have a different spatial dimension");
  if (options.neighbors < 1 || options.neighbors > n) {
    throw ConfigError("neighbour count must lie in [1, " + std::to_string(n) + "]");
  }
  const std::size_t k = options.neighbors;
  const double ss = model.spatial_scale(), ts = model.temporal_scale();
  const double plateau = std::max(model.plateau(), 1e-300);

  KrigeResult out;
  out.prediction.resize(targets.size());
  out.variance.resize(targets.size());
  if (options.keep_weights) {
    out.neighbors.resize(targets.size());
    out.weights.resize(targets.size());
  }
  std::vector<std::size_t> order(n);
  std::vector<double> dist(n);
  Eigen::MatrixXd a(k + 1, k + 1);
  Eigen::VectorXd rhs(k + 1);
  for (std::size_t q = 0; q < targets.size(); ++q) {
    for (std::size_t i = 0; i < n; ++i) dist[i] = scaled_distance(loc, i, targets, q, ss, ts);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                     [&](std::size_t x, std::size_t y) { return dist[x] < dist[y] || (dist[x] == dist[y] && x < y); });
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    const std::span<const std::size_t> nb(order.data(), k);

    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        const double g = i == j ? 0.0
                                : model.gamma(spatial_lag(loc, nb[i], nb[j]),
                                              std::abs(loc.times[nb[i]] - loc.times[nb[j]]));
        a(i, j) = a(j, i) = g;
      }
      a(i, k) = a(k, i) = 1.0;
      double hs = 0.0;
      for (std::size_t d = 0; d < loc.dims(); ++d) {
        const double v = loc.coords(nb[i], d) - targets.coords(q, d);
        hs += v * v;
      }
      rhs(i) = model.gamma(std::sqrt(hs), std::abs(loc.times[nb[i]] - targets.times[q]));
    }
    a(k, k) = 0.0;
    rhs(k) = 1.0;

    Eigen::VectorXd sol;
    bool solved = false;
    for (double jitter = 0.0; jitter <= 1e-6 * plateau; jitter = jitter == 0 ? 1e-12 * plateau : jitter * 10) {
      Eigen::MatrixXd m = a;
      if (jitter > 0) {
        // A nugget-like jitter raises every off-diagonal semivariance.
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) m(i, j) += i == j ? 0.0 : jitter;
        }
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
      if (!lu.isInvertible()) continue;
      sol = lu.solve(rhs);
      if (sol.allFinite()) {
        solved = true;
        break;
      }
    }
    if (!solved) throw NumericError("kriging system is singular for target " + std::to_string(q));

    double pred = 0.0, var = sol(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
      pred += sol(i) * values[nb[i]];
      var += sol(i) * rhs(i);
    }
    out.prediction[q] = pred;
    out.variance[q] = var;
    if (options.keep_weights) {
      out.neighbors[q].assign(nb.begin(), nb.end());
      out.weights[q].assign(sol.data(), sol.data() + k);
    }
  }
  return out;
}

}  // namespace stivae::geostat
