#pragma once

#include <string>
#include <variant>
#include <vector>

#include "scanmap/geometry.hpp"

namespace scanmap {

/// Ordered set of global-frame points. `origins`, when non-empty, carries the
/// sensor position that produced each point (one entry per point) and is what
/// octree ray casting consumes.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<Point3> origins;  // empty, or same length as points
  std::string frame_id = "map";

  bool has_origins() const { return !origins.empty(); }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

enum class Axis { X, Y, Z };

const char* axis_name(Axis axis);
Axis axis_from_name(const std::string& name);  // "x" / "y" / "z"

struct DownsampleStage {
  double leaf = 0.05;  // cube side, > 0
};

struct PassThroughStage {
  Axis axis = Axis::X;
  double min = 0.0;
  double max = 0.0;  // min < max
};

struct GaussianStage {
  double sigma = 0.02;   // > 0
  double radius = 0.06;  // >= sigma
};

using FilterStage = std::variant<DownsampleStage, PassThroughStage, GaussianStage>;

/// Ordered filter chain. Presets mirror the per-map post-processing choices:
/// the sparsest cloud skips down-sampling, the densest additionally gets the
/// Gaussian smoother.
struct FilterPipeline {
  std::vector<FilterStage> stages;

  struct PresetParams {
    double leaf = 0.05;
    Axis axis = Axis::X;
    double min = -1e9;
    double max = 1e9;
    double sigma = 0.02;
    double radius = 0.06;
  };

  // Known names: "map1" (pass-through), "map2"/"map3" (down-sample +
  // pass-through), "ref" (down-sample + pass-through + gaussian), "identity".
  static FilterPipeline preset(const std::string& name, const PresetParams& params);
  static FilterPipeline preset(const std::string& name);

  void validate() const;  // throws ParameterError on a bad stage
};

/// Partition space into `leaf`-sided cubes anchored at the world origin and
/// replace the members of each occupied cube by their centroid. Per-point
/// origins, when present, are reduced the same way. Output cubes appear in
/// order of first appearance in the input.
PointCloud voxel_downsample(const PointCloud& cloud, double leaf);

/// Keep exactly the points whose `axis` coordinate lies in [min, max],
/// preserving order.
PointCloud pass_through(const PointCloud& cloud, Axis axis, double min, double max);

/// Replace each point by the Gaussian-weighted mean (weight exp(-d^2/2sigma^2),
/// self included) of all points within `radius`. Point count is unchanged.
PointCloud gaussian_smooth(const PointCloud& cloud, double sigma, double radius);

PointCloud apply_pipeline(const PointCloud& cloud, const FilterPipeline& pipeline);

}  // namespace scanmap
