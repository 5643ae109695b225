#include "stivae/aux.hpp"

#include "stivae/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stivae::aux {

void Locations::validate() const {
  if (times.empty()) throw DataError("locations are empty");
  if (coords.rank() != 2 || coords.rows() != times.size()) {
    throw DimensionError("coordinate rows (" + std::to_string(coords.rows()) + ") do not match times (" +
                         std::to_string(times.size()) + ")");
  }
  if (!coords.all_finite() ||
      !std::all_of(times.begin(), times.end(), [](double t) { return std::isfinite(t); })) {
    throw DataError("locations contain non-finite values");
  }
}

Locations Locations::subset(std::span<const std::size_t> rows) const {
  Locations out{coords.gather_rows(rows), {}};
  out.times.reserve(rows.size());
  for (auto r : rows) out.times.push_back(times[r]);
  return out;
}

AxisScaling AxisScaling::fit(const Locations& loc) {
  loc.validate();
  const std::size_t d = loc.dims();
  AxisScaling s;
  s.lo.assign(d + 1, std::numeric_limits<double>::infinity());
  s.hi.assign(d + 1, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < loc.size(); ++i) {
    for (std::size_t a = 0; a <= d; ++a) {
      const double v = a < d ? loc.coords(i, a) : loc.times[i];
      s.lo[a] = std::min(s.lo[a], v);
      s.hi[a] = std::max(s.hi[a], v);
    }
  }
  for (std::size_t a = 0; a <= d; ++a) {
    if (!(s.hi[a] > s.lo[a])) {
      throw DataError(a < d ? "spatial axis " + std::to_string(a + 1) + " is constant; cannot min-max normalize"
                            : std::string("time axis is constant; cannot min-max normalize"));
    }
  }
  return s;
}

Locations AxisScaling::apply(const Locations& loc) const {
  loc.validate();
  const std::size_t d = loc.dims();
  if (lo.size() != d + 1) throw DimensionError("scaling fitted for a different number of axes");
  Locations out = loc;
  for (std::size_t i = 0; i < loc.size(); ++i) {
    for (std::size_t a = 0; a < d; ++a) out.coords(i, a) = (loc.coords(i, a) - lo[a]) / (hi[a] - lo[a]);
    out.times[i] = (loc.times[i] - lo[d]) / (hi[d] - lo[d]);
  }
  return out;
}

AuxMatrix normalize_coords(const Locations& loc) {
  return normalize_coords(loc, AxisScaling::fit(loc));
}

AuxMatrix normalize_coords(const Locations& loc, const AxisScaling& scaling) {
  const Locations norm = scaling.apply(loc);
  const std::size_t d = loc.dims();
  AuxMatrix out;
  out.values = Tensor(loc.size(), d + 1);
  for (std::size_t i = 0; i < loc.size(); ++i) {
    for (std::size_t a = 0; a < d; ++a) out.values(i, a) = norm.coords(i, a);
    out.values(i, d) = norm.times[i];
  }
  for (std::size_t a = 0; a < d; ++a) out.columns.push_back("s" + std::to_string(a + 1));
  out.columns.emplace_back("t");
  out.builder = Builder::coords;
  out.scaling = scaling;
  return out;
}

// ---------------------------------------------------------------------------

SegMode parse_seg_mode(const std::string& name) {
  if (name == "s1") return SegMode::s1;
  if (name == "s2") return SegMode::s2;
  if (name == "s3") return SegMode::s3;
  throw ConfigError("unknown segmentation mode '" + name + "'");
}

namespace {

double axis_value(const Locations& loc, std::size_t i, std::size_t axis) {
  return axis < loc.dims() ? loc.coords(i, axis) : loc.times[i];
}

std::pair<double, double> axis_range(const Locations& loc, std::size_t axis) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < loc.size(); ++i) {
    const double v = axis_value(loc, i, axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

std::vector<double> equal_edges(double lo, double hi, std::size_t count) {
  if (count == 0) throw ConfigError("every axis needs at least one segment");
  if (!(hi > lo)) hi = lo + 1.0;  // a constant axis still gets a valid single cell
  std::vector<double> e(count + 1);
  for (std::size_t k = 0; k <= count; ++k) e[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count);
  e.back() = hi;
  return e;
}

}  // namespace

SegmentationSpec SegmentationSpec::equal_counts(const Locations& loc, SegMode mode,
                                                std::span<const std::size_t> counts) {
  loc.validate();
  if (counts.size() != loc.dims() + 1) {
    throw ConfigError("need one segment count per spatial axis plus time");
  }
  SegmentationSpec spec{mode, {}};
  for (std::size_t a = 0; a < counts.size(); ++a) {
    auto [lo, hi] = axis_range(loc, a);
    spec.edges.push_back(equal_edges(lo, hi, counts[a]));
  }
  return spec;
}

SegmentationSpec SegmentationSpec::grid(const Locations& loc, SegMode mode, std::size_t per_axis,
                                        double time_length) {
  loc.validate();
  if (!(time_length > 0)) throw ConfigError("time segment length must be positive");
  SegmentationSpec spec{mode, {}};
  for (std::size_t a = 0; a < loc.dims(); ++a) {
    auto [lo, hi] = axis_range(loc, a);
    spec.edges.push_back(equal_edges(lo, hi, per_axis));
  }
  auto [t0, t1] = axis_range(loc, loc.dims());
  // Equal-length segments from the earliest time; the last edge reaches past the maximum.
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor((t1 - t0) / time_length)) + 1);
  std::vector<double> e(count + 1);
  for (std::size_t k = 0; k <= count; ++k) e[k] = t0 + time_length * static_cast<double>(k);
  spec.edges.push_back(std::move(e));
  return spec;
}

void SegmentationSpec::validate() const {
  if (edges.size() < 2) throw ConfigError("segmentation needs at least one spatial axis and time");
  for (const auto& e : edges) {
    if (e.size() < 2) throw ConfigError("every axis needs at least one segment");
    for (std::size_t k = 1; k < e.size(); ++k) {
      if (!(e[k] > e[k - 1])) throw ConfigError("segment edges must be strictly increasing");
    }
  }
}

long segment_index(std::span<const double> edges, double v) {
  if (v < edges.front() || v > edges.back()) return -1;
  if (v == edges.back()) return static_cast<long>(edges.size()) - 2;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  return static_cast<long>(it - edges.begin()) - 1;
}

AuxMatrix segment_aux(const Locations& loc, const SegmentationSpec& spec) {
  loc.validate();
  spec.validate();
  const std::size_t d = loc.dims();
  if (spec.edges.size() != d + 1) {
    throw DimensionError("segmentation has " + std::to_string(spec.edges.size()) + " axes, locations have " +
                         std::to_string(d + 1));
  }
  std::vector<std::size_t> counts(d + 1);
  for (std::size_t a = 0; a <= d; ++a) counts[a] = spec.segments(a);
  std::size_t spatial_cells = 1;
  for (std::size_t a = 0; a < d; ++a) spatial_cells *= counts[a];

  AuxMatrix out;
  out.builder = Builder::segmentation;
  std::size_t m = 0;
  switch (spec.mode) {
    case SegMode::s1:
      m = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
      for (std::size_t a = 0; a <= d; ++a) {
        const std::string ax = a < d ? "s" + std::to_string(a + 1) : std::string("t");
        for (std::size_t k = 0; k < counts[a]; ++k) out.columns.push_back("seg_" + ax + "_" + std::to_string(k));
      }
      break;
    case SegMode::s2:
      m = spatial_cells + counts[d];
      for (std::size_t k = 0; k < spatial_cells; ++k) out.columns.push_back("seg_s_" + std::to_string(k));
      for (std::size_t k = 0; k < counts[d]; ++k) out.columns.push_back("seg_t_" + std::to_string(k));
      break;
    case SegMode::s3:
      m = spatial_cells * counts[d];
      for (std::size_t k = 0; k < m; ++k) out.columns.push_back("seg_st_" + std::to_string(k));
      break;
  }
  out.values = Tensor(loc.size(), m);

  std::vector<std::size_t> idx(d + 1);
  for (std::size_t i = 0; i < loc.size(); ++i) {
    for (std::size_t a = 0; a <= d; ++a) {
      const double v = axis_value(loc, i, a);
      const long k = segment_index(spec.edges[a], v);
      if (k < 0) {
        throw DataError("location " + std::to_string(i) + " lies outside every segment on axis " +
                        std::to_string(a + 1));
      }
      idx[a] = static_cast<std::size_t>(k);
    }
    std::size_t cell = 0;  // row-major over spatial axes
    for (std::size_t a = 0; a < d; ++a) cell = cell * counts[a] + idx[a];
    switch (spec.mode) {
      case SegMode::s1: {
        std::size_t off = 0;
        for (std::size_t a = 0; a <= d; ++a) {
          out.values(i, off + idx[a]) = 1.0;
          off += counts[a];
        }
        break;
      }
      case SegMode::s2:
        out.values(i, cell) = 1.0;
        out.values(i, spatial_cells + idx[d]) = 1.0;
        break;
      case SegMode::s3:
        out.values(i, cell * counts[d] + idx[d]) = 1.0;
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Kernel parse_kernel(const std::string& name) {
  if (name == "gaussian") return Kernel::gaussian;
  if (name == "wendland") return Kernel::wendland;
  throw ConfigError("unknown kernel '" + name + "'");
}

double kernel_value(Kernel k, double d) {
  d = std::abs(d);
  switch (k) {
    case Kernel::gaussian:
      return std::exp(-d * d);
    case Kernel::wendland: {
      if (d >= 1.0) return 0.0;
      const double a = 1.0 - d;
      const double a2 = a * a;
      return a2 * a2 * a2 * (35.0 * d * d + 18.0 * d + 3.0) / 3.0;
    }
  }
  return 0.0;
}

void ResolutionSpec::validate() const {
  auto check = [](const std::vector<int>& levels, const char* what) {
    for (int l : levels) {
      if (l < 1) throw ConfigError(std::string(what) + " resolution levels must be >= 1");
    }
  };
  check(spatial_levels, "spatial");
  check(temporal_levels, "temporal");
  for (const auto& e : extra_levels) check(e, "extra-axis");
  if (spatial_levels.empty() && temporal_levels.empty() && extra_levels.empty()) {
    throw ConfigError("radial basis needs at least one resolution level");
  }
}

std::vector<double> level_positions(int level) {
  std::vector<double> p(static_cast<std::size_t>(level));
  const double offset = 1.0 / (level + 2.0);
  for (int k = 0; k < level; ++k) p[static_cast<std::size_t>(k)] = offset + k / static_cast<double>(level);
  return p;
}

double temporal_scale(int level) {
  // |o1 - o2| / sqrt(2) with node spacing 1/level
  return (1.0 / level) / std::sqrt(2.0);
}

std::size_t Nodes::total() const {
  std::size_t n = spatial.size() + temporal.size();
  for (const auto& e : extra) n += e.size();
  return n;
}

namespace {

NodeSet one_dim_nodes(const std::vector<int>& levels) {
  NodeSet set;
  for (int l : levels) {
    for (double p : level_positions(l)) {
      set.points.push_back({p});
      set.scales.push_back(temporal_scale(l));
      set.levels.push_back(l);
    }
  }
  return set;
}

}  // namespace

Nodes node_points(const ResolutionSpec& spec, std::size_t spatial_dims) {
  spec.validate();
  Nodes nodes;
  for (int h : spec.spatial_levels) {
    const auto pos = level_positions(h);
    const std::size_t per_axis = pos.size();
    std::size_t count = 1;
    for (std::size_t a = 0; a < spatial_dims; ++a) count *= per_axis;
    // First axis varies slowest: (i, j) for i in pos, j in pos.
    for (std::size_t flat = 0; flat < count; ++flat) {
      std::vector<double> point(spatial_dims);
      std::size_t rem = flat;
      for (std::size_t a = spatial_dims; a-- > 0;) {
        point[a] = pos[rem % per_axis];
        rem /= per_axis;
      }
      nodes.spatial.points.push_back(std::move(point));
      nodes.spatial.scales.push_back(spatial_scale(h));
      nodes.spatial.levels.push_back(h);
    }
  }
  nodes.temporal = one_dim_nodes(spec.temporal_levels);
  for (const auto& e : spec.extra_levels) nodes.extra.push_back(one_dim_nodes(e));
  return nodes;
}

RadialBasis::RadialBasis(ResolutionSpec spec, std::size_t coord_dims)
    : spec_(std::move(spec)), coord_dims_(coord_dims) {
  spec_.validate();
  spatial_dims_ = spec_.spatial_dims.value_or(coord_dims_ - std::min(coord_dims_, spec_.extra_levels.size()));
  if (spatial_dims_ > coord_dims_) throw ConfigError("spatial_dims exceeds the coordinate dimension");
  if (spatial_dims_ + spec_.extra_levels.size() != coord_dims_) {
    throw ConfigError("radial spec covers " + std::to_string(spatial_dims_ + spec_.extra_levels.size()) +
                      " coordinate axes but locations have " + std::to_string(coord_dims_));
  }
  nodes_ = node_points(spec_, spatial_dims_);
}

std::vector<std::string> RadialBasis::column_names() const {
  std::vector<std::string> names;
  auto add = [&](const NodeSet& set, const std::string& prefix) {
    std::size_t k = 0;
    int last = -1;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.levels[i] != last) {
        last = set.levels[i];
        k = 0;
      }
      names.push_back(prefix + std::to_string(set.levels[i]) + "_" + std::to_string(k++));
    }
  };
  add(nodes_.spatial, "rbf_s_H");
  add(nodes_.temporal, "rbf_t_G");
  for (std::size_t e = 0; e < nodes_.extra.size(); ++e) add(nodes_.extra[e], "rbf_e" + std::to_string(e + 1) + "_L");
  return names;
}

void RadialBasis::eval(const Locations& loc, std::size_t begin, std::size_t end, Tensor& out) const {
  if (loc.dims() != coord_dims_) {
    throw DimensionError("radial basis built for " + std::to_string(coord_dims_) + "-D coordinates, got " +
                         std::to_string(loc.dims()));
  }
  if (begin > end || end > loc.size()) throw DimensionError("radial basis row range out of bounds");
  if (out.rank() != 2 || out.rows() != end - begin || out.cols() != dim()) out = Tensor(end - begin, dim());
  constexpr double lo = -0.05, hi = 1.05;
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t a = 0; a < coord_dims_; ++a) {
      const double v = loc.coords(i, a);
      if (v < lo || v > hi) {
        throw DataError("radial basis input is not normalized: coordinate " + std::to_string(a + 1) + " of row " +
                        std::to_string(i) + " is " + std::to_string(v));
      }
    }
    if (loc.times[i] < lo || loc.times[i] > hi) {
      throw DataError("radial basis input is not normalized: time of row " + std::to_string(i) + " is " +
                      std::to_string(loc.times[i]));
    }
    auto row = out.row(i - begin);
    std::size_t c = 0;
    for (std::size_t k = 0; k < nodes_.spatial.size(); ++k) {
      double d2 = 0.0;
      const auto& o = nodes_.spatial.points[k];
      for (std::size_t a = 0; a < spatial_dims_; ++a) {
        const double diff = loc.coords(i, a) - o[a];
        d2 += diff * diff;
      }
      row[c++] = kernel_value(spec_.kernel, std::sqrt(d2) / nodes_.spatial.scales[k]);
    }
    for (std::size_t k = 0; k < nodes_.temporal.size(); ++k) {
      row[c++] = kernel_value(spec_.kernel,
                              std::abs(loc.times[i] - nodes_.temporal.points[k][0]) / nodes_.temporal.scales[k]);
    }
    for (std::size_t e = 0; e < nodes_.extra.size(); ++e) {
      const double v = loc.coords(i, spatial_dims_ + e);
      const auto& set = nodes_.extra[e];
      for (std::size_t k = 0; k < set.size(); ++k) {
        row[c++] = kernel_value(spec_.kernel, std::abs(v - set.points[k][0]) / set.scales[k]);
      }
    }
  }
}

Tensor RadialBasis::eval(const Locations& loc) const {
  Tensor out(loc.size(), dim());
  eval(loc, 0, loc.size(), out);
  return out;
}

AuxMatrix radial_aux(const Locations& normalized, const ResolutionSpec& spec) {
  normalized.validate();
  RadialBasis basis(spec, normalized.dims());
  AuxMatrix out;
  out.values = basis.eval(normalized);
  out.columns = basis.column_names();
  out.builder = Builder::radial;
  return out;
}

// ---------------------------------------------------------------------------

AuxKind parse_aux_kind(const std::string& name) {
  if (name == "coords") return AuxKind::coords;
  if (name == "s1") return AuxKind::s1;
  if (name == "s2") return AuxKind::s2;
  if (name == "s3") return AuxKind::s3;
  if (name == "radial") return AuxKind::radial;
  throw ConfigError("unknown auxiliary builder '" + name + "' (expected coords, s1, s2, s3 or radial)");
}

std::string to_string(AuxKind k) {
  switch (k) {
    case AuxKind::coords:
      return "coords";
    case AuxKind::s1:
      return "s1";
    case AuxKind::s2:
      return "s2";
    case AuxKind::s3:
      return "s3";
    case AuxKind::radial:
      return "radial";
  }
  return "?";
}

AuxBuilder AuxBuilder::fit(const AuxConfig& config, const Locations& train) {
  AuxBuilder b;
  b.config_ = config;
  b.scaling_ = AxisScaling::fit(train);
  switch (config.kind) {
    case AuxKind::s1:
    case AuxKind::s2:
    case AuxKind::s3: {
      const SegMode mode = config.kind == AuxKind::s1 ? SegMode::s1 : config.kind == AuxKind::s2 ? SegMode::s2 : SegMode::s3;
      b.segmentation_ = SegmentationSpec::grid(train, mode, config.spatial_segments, config.time_segment_length);
      break;
    }
    case AuxKind::radial:
      RadialBasis(config.resolution, train.dims());  // validates the spec against the data
      break;
    case AuxKind::coords:
      break;
  }
  return b;
}

AuxMatrix AuxBuilder::apply(const Locations& loc) const {
  switch (config_.kind) {
    case AuxKind::coords:
      return normalize_coords(loc, scaling_);
    case AuxKind::s1:
    case AuxKind::s2:
    case AuxKind::s3:
      return segment_aux(loc, *segmentation_);
    case AuxKind::radial: {
      AuxMatrix out = radial_aux(scaling_.apply(loc), config_.resolution);
      out.scaling = scaling_;
      return out;
    }
  }
  throw ConfigError("unreachable auxiliary builder");
}

}  // namespace stivae::aux
