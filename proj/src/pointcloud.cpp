#include "scanmap/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "scanmap/errors.hpp"

namespace scanmap {

const char* axis_name(Axis axis) {
  switch (axis) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

Axis axis_from_name(const std::string& name) {
  if (name == "x" || name == "X") return Axis::X;
  if (name == "y" || name == "Y") return Axis::Y;
  if (name == "z" || name == "Z") return Axis::Z;
  throw ParameterError("unknown axis name: " + name);
}

namespace {

double coord(const Point3& p, Axis axis) {
  switch (axis) {
    case Axis::X: return p.x;
    case Axis::Y: return p.y;
    case Axis::Z: return p.z;
  }
  return 0.0;
}

struct CubeKey {
  std::int64_t x, y, z;
  bool operator==(const CubeKey&) const = default;
};

struct CubeKeyHash {
  std::size_t operator()(const CubeKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint64_t v : {static_cast<std::uint64_t>(k.x), static_cast<std::uint64_t>(k.y),
                            static_cast<std::uint64_t>(k.z)}) {
      h ^= v;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

CubeKey cube_of(const Point3& p, double leaf) {
  return CubeKey{static_cast<std::int64_t>(std::floor(p.x / leaf)),
                 static_cast<std::int64_t>(std::floor(p.y / leaf)),
                 static_cast<std::int64_t>(std::floor(p.z / leaf))};
}

void check_cloud(const PointCloud& cloud, const char* op) {
  if (!cloud.origins.empty() && cloud.origins.size() != cloud.points.size()) {
    throw InputDomainError(std::string(op) + ": origins length differs from points");
  }
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double leaf) {
  if (!(leaf > 0.0)) throw ParameterError("voxel_downsample: leaf must be > 0");
  check_cloud(cloud, "voxel_downsample");

  struct Accum {
    Point3 point_sum{};
    Point3 origin_sum{};
    std::size_t count = 0;
  };

  std::unordered_map<CubeKey, std::size_t, CubeKeyHash> slot;
  std::vector<Accum> cubes;  // in order of first appearance
  slot.reserve(cloud.points.size());

  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const CubeKey key = cube_of(cloud.points[i], leaf);
    auto [it, inserted] = slot.try_emplace(key, cubes.size());
    if (inserted) cubes.emplace_back();
    Accum& acc = cubes[it->second];
    acc.point_sum = acc.point_sum + cloud.points[i];
    if (cloud.has_origins()) acc.origin_sum = acc.origin_sum + cloud.origins[i];
    ++acc.count;
  }

  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cubes.size());
  if (cloud.has_origins()) out.origins.reserve(cubes.size());
  for (const Accum& acc : cubes) {
    const double inv = 1.0 / static_cast<double>(acc.count);
    out.points.push_back(acc.point_sum * inv);
    if (cloud.has_origins()) out.origins.push_back(acc.origin_sum * inv);
  }
  return out;
}

PointCloud pass_through(const PointCloud& cloud, Axis axis, double min, double max) {
  if (!(min < max)) throw ParameterError("pass_through: min must be < max");
  check_cloud(cloud, "pass_through");

  PointCloud out;
  out.frame_id = cloud.frame_id;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const double c = coord(cloud.points[i], axis);
    if (c >= min && c <= max) {
      out.points.push_back(cloud.points[i]);
      if (cloud.has_origins()) out.origins.push_back(cloud.origins[i]);
    }
  }
  return out;
}

PointCloud gaussian_smooth(const PointCloud& cloud, double sigma, double radius) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_smooth: sigma must be > 0");
  if (!(radius >= sigma)) throw ParameterError("gaussian_smooth: radius must be >= sigma");
  check_cloud(cloud, "gaussian_smooth");

  // Bucket points into radius-sized cells so the neighbor scan only touches
  // the surrounding 27 cells.
  std::unordered_map<CubeKey, std::vector<std::size_t>, CubeKeyHash> grid;
  grid.reserve(cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    grid[cube_of(cloud.points[i], radius)].push_back(i);
  }

  const double r2 = radius * radius;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

  PointCloud out = cloud;
  std::vector<std::size_t> neighbors;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point3& p = cloud.points[i];
    const CubeKey base = cube_of(p, radius);

    neighbors.clear();
    for (std::int64_t dz = -1; dz <= 1; ++dz) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          auto it = grid.find(CubeKey{base.x + dx, base.y + dy, base.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            const Point3 d = cloud.points[j] - p;
            if (dot(d, d) <= r2) neighbors.push_back(j);
          }
        }
      }
    }
    // Fixed accumulation order keeps the result independent of bucket layout.
    std::sort(neighbors.begin(), neighbors.end());

    Point3 weighted{};
    double total = 0.0;
    for (std::size_t j : neighbors) {
      const Point3 d = cloud.points[j] - p;
      const double w = std::exp(-dot(d, d) * inv_two_sigma2);
      weighted = weighted + cloud.points[j] * w;
      total += w;
    }
    out.points[i] = weighted * (1.0 / total);
  }
  return out;
}

void FilterPipeline::validate() const {
  for (const FilterStage& stage : stages) {
    std::visit(
        [](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, DownsampleStage>) {
            if (!(s.leaf > 0.0)) throw ParameterError("pipeline: leaf must be > 0");
          } else if constexpr (std::is_same_v<T, PassThroughStage>) {
            if (!(s.min < s.max)) throw ParameterError("pipeline: min must be < max");
          } else {
            if (!(s.sigma > 0.0)) throw ParameterError("pipeline: sigma must be > 0");
            if (!(s.radius >= s.sigma)) throw ParameterError("pipeline: radius must be >= sigma");
          }
        },
        stage);
  }
}

FilterPipeline FilterPipeline::preset(const std::string& name, const PresetParams& p) {
  const PassThroughStage pass{p.axis, p.min, p.max};
  const DownsampleStage down{p.leaf};
  const GaussianStage gauss{p.sigma, p.radius};

  FilterPipeline out;
  if (name == "identity") {
    // empty
  } else if (name == "map1") {
    out.stages = {pass};
  } else if (name == "map2" || name == "map3") {
    out.stages = {down, pass};
  } else if (name == "ref") {
    out.stages = {down, pass, gauss};
  } else {
    throw ParameterError("unknown pipeline preset: " + name);
  }
  out.validate();
  return out;
}

FilterPipeline FilterPipeline::preset(const std::string& name) {
  return preset(name, PresetParams());
}

PointCloud apply_pipeline(const PointCloud& cloud, const FilterPipeline& pipeline) {
  pipeline.validate();
  PointCloud current = cloud;
  for (const FilterStage& stage : pipeline.stages) {
    current = std::visit(
        [&current](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, DownsampleStage>) {
            return voxel_downsample(current, s.leaf);
          } else if constexpr (std::is_same_v<T, PassThroughStage>) {
            return pass_through(current, s.axis, s.min, s.max);
          } else {
            return gaussian_smooth(current, s.sigma, s.radius);
          }
        },
        stage);
  }
  return current;
}

}  // namespace scanmap
