#pragma once

// Auxiliary variables u(s, t) built from spatio-temporal locations:
// min-max coordinates, segment indicators, and multi-resolution radial bases.

#include "stivae/tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stivae::aux {

struct Locations {
  Tensor coords;              // n x D spatial coordinates (extra axes such as elevation trail)
  std::vector<double> times;  // n

  std::size_t size() const { return times.size(); }
  std::size_t dims() const { return coords.cols(); }
  /// Throws DataError/DimensionError on empty, ragged or non-finite input.
  void validate() const;
  Locations subset(std::span<const std::size_t> rows) const;
};

/// Per-axis min/max over the D spatial axes followed by time.
struct AxisScaling {
  std::vector<double> lo;
  std::vector<double> hi;

  /// Throws DataError if some axis is constant.
  static AxisScaling fit(const Locations& loc);
  Locations apply(const Locations& loc) const;
};

enum class Builder { coords, segmentation, radial, seasonal };

struct AuxMatrix {
  Tensor values;  // n x m
  std::vector<std::string> columns;
  Builder builder = Builder::coords;
  std::optional<AxisScaling> scaling;

  std::size_t dim() const { return values.cols(); }
  std::size_t rows() const { return values.rows(); }
};

/// (v - min)/(max - min) per axis; the fitted constants are returned in `scaling`.
AuxMatrix normalize_coords(const Locations& loc);
AuxMatrix normalize_coords(const Locations& loc, const AxisScaling& scaling);

// ---------------------------------------------------------------------------
// Segmentation

/// s1: every axis segmented separately; s2: joint spatial cells plus time
/// segments; s3: joint spatio-temporal cells.
enum class SegMode { s1, s2, s3 };
SegMode parse_seg_mode(const std::string& name);

struct SegmentationSpec {
  SegMode mode = SegMode::s2;
  /// Strictly increasing edges per axis: D spatial axes, then time.
  std::vector<std::vector<double>> edges;

  /// Equal-width segments spanning the data range of each axis.
  static SegmentationSpec equal_counts(const Locations& loc, SegMode mode,
                                       std::span<const std::size_t> counts);
  /// `per_axis` equal segments on every spatial axis and time segments of
  /// `time_length` starting at the earliest time.
  static SegmentationSpec grid(const Locations& loc, SegMode mode, std::size_t per_axis,
                               double time_length);
  void validate() const;
  std::size_t segments(std::size_t axis) const { return edges[axis].size() - 1; }
};

/// Segment index of `v` on the given edges: left-closed/right-open, the last
/// segment is right-closed. Returns -1 if outside.
long segment_index(std::span<const double> edges, double v);

AuxMatrix segment_aux(const Locations& loc, const SegmentationSpec& spec);

// ---------------------------------------------------------------------------
// Radial basis functions

enum class Kernel { gaussian, wendland };
Kernel parse_kernel(const std::string& name);
double kernel_value(Kernel k, double d);

struct ResolutionSpec {
  std::vector<int> spatial_levels{2, 9};
  std::vector<int> temporal_levels{9, 17, 37};
  Kernel kernel = Kernel::gaussian;
  /// Number of leading coordinate columns forming the joint spatial grid;
  /// unset means all of them.
  std::optional<std::size_t> spatial_dims;
  /// Levels for each remaining coordinate column, treated as 1-D axes like time.
  std::vector<std::vector<int>> extra_levels;

  void validate() const;
};

/// Node positions of one resolution level on [0,1]: `level` points spaced
/// 1/level apart, the first at 1/(level + 2).
std::vector<double> level_positions(int level);
inline double spatial_scale(int level) { return 1.0 / (2.5 * level); }
double temporal_scale(int level);

struct NodeSet {
  std::vector<std::vector<double>> points;
  std::vector<double> scales;
  std::vector<int> levels;
  std::size_t size() const { return points.size(); }
};

struct Nodes {
  NodeSet spatial;
  NodeSet temporal;
  std::vector<NodeSet> extra;
  std::size_t total() const;
};

Nodes node_points(const ResolutionSpec& spec, std::size_t spatial_dims);

/// Radial-basis evaluator over min-max normalized locations. `eval` fills any
/// row range, so callers may build the auxiliary matrix batch by batch.
class RadialBasis {
 public:
  RadialBasis(ResolutionSpec spec, std::size_t coord_dims);

  std::size_t dim() const { return nodes_.total(); }
  std::size_t coord_dims() const { return coord_dims_; }
  std::size_t spatial_dims() const { return spatial_dims_; }
  const Nodes& nodes() const { return nodes_; }
  const ResolutionSpec& spec() const { return spec_; }
  std::vector<std::string> column_names() const;

  /// Rows [begin, end) of the basis matrix into `out` ((end-begin) x dim()).
  void eval(const Locations& normalized, std::size_t begin, std::size_t end, Tensor& out) const;
  Tensor eval(const Locations& normalized) const;

 private:
  ResolutionSpec spec_;
  std::size_t coord_dims_;
  std::size_t spatial_dims_;
  Nodes nodes_;
};

/// Full n x m radial matrix; input must already be normalized to [0,1].
AuxMatrix radial_aux(const Locations& normalized, const ResolutionSpec& spec);

// ---------------------------------------------------------------------------
// Fit-once / apply-many builder used by training and prediction.

enum class AuxKind { coords, s1, s2, s3, radial };
AuxKind parse_aux_kind(const std::string& name);
std::string to_string(AuxKind k);

struct AuxConfig {
  AuxKind kind = AuxKind::radial;
  ResolutionSpec resolution;
  std::size_t spatial_segments = 4;
  double time_segment_length = 5.0;
};

class AuxBuilder {
 public:
  static AuxBuilder fit(const AuxConfig& config, const Locations& train);
  AuxMatrix apply(const Locations& loc) const;

  const AuxConfig& config() const { return config_; }
  const AxisScaling& scaling() const { return scaling_; }
  const std::optional<SegmentationSpec>& segmentation() const { return segmentation_; }

 private:
  AuxConfig config_;
  AxisScaling scaling_;
  std::optional<SegmentationSpec> segmentation_;
};

}  // namespace stivae::aux
