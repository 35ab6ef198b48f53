// Independent reference implementations the tests check the library against.
// Everything here recomputes results from first principles (rotation
// matrices, per-voxel queries, exhaustive scans) and must stay decoupled
// from the code paths under test.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "scanmap/geometry.hpp"
#include "scanmap/metrics.hpp"
#include "scanmap/octree.hpp"
#include "scanmap/simulator.hpp"

namespace oracles {

using scanmap::BoundingBox;
using scanmap::OccupancyOctree;
using scanmap::Point3;
using scanmap::ScannerPose;
using scanmap::ScanSample;
using scanmap::VoxelState;

// Scan-sample transform via an explicit z-rotation matrix applied to the
// local ray (0, L sin theta, L cos theta).
inline Point3 transform_by_rotation_matrix(const ScannerPose& pose, const ScanSample& sample) {
  const double yaw =
      sample.bearing <= M_PI ? pose.yaw : pose.yaw + sample.motor_step;
  const double local[3] = {0.0, sample.range * std::sin(sample.bearing),
                           sample.range * std::cos(sample.bearing)};
  const double rot[3][3] = {{std::cos(yaw), -std::sin(yaw), 0.0},
                            {std::sin(yaw), std::cos(yaw), 0.0},
                            {0.0, 0.0, 1.0}};
  double global[3] = {0, 0, 0};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) global[r] += rot[r][c] * local[c];
  }
  return Point3{pose.x + global[0], pose.y + global[1], pose.height + global[2]};
}

// Greedy nearest-unused matching by linear search.
struct BrutePair {
  std::size_t a, b;
};
inline std::vector<BrutePair> brute_match(const std::vector<double>& a,
                                          const std::vector<double>& b, double max_skew) {
  std::vector<BrutePair> out;
  std::vector<bool> used(b.size(), false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (used[j]) continue;
      if (!best) {
        best = j;
        continue;
      }
      const double cur = std::abs(a[i] - b[j]);
      const double seen = std::abs(a[i] - b[*best]);
      // Same tie rule as the implementation: earlier element wins.
      if (cur < seen) best = j;
    }
    if (best && std::abs(a[i] - b[*best]) <= max_skew) {
      used[*best] = true;
      out.push_back(BrutePair{i, *best});
    }
  }
  return out;
}

// Voxels touched by a segment, found by dense sampling. Catches every voxel
// whose chord is longer than the step; corner clips may be missed, so use it
// as a subset check.
inline std::set<std::array<std::int64_t, 3>> sampled_ray_voxels(const Point3& a, const Point3& b,
                                                                double resolution, double step) {
  std::set<std::array<std::int64_t, 3>> cells;
  const double len = scanmap::norm(b - a);
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    const double u = static_cast<double>(i) / n;
    const Point3 p = a + (b - a) * u;
    cells.insert({static_cast<std::int64_t>(std::floor(p.x / resolution)),
                  static_cast<std::int64_t>(std::floor(p.y / resolution)),
                  static_cast<std::int64_t>(std::floor(p.z / resolution))});
  }
  return cells;
}

// Shortest distance between a segment and an axis-aligned voxel cube. The
// squared point-to-box distance is convex along the segment, so a ternary
// search pins the minimum to machine precision.
inline double segment_to_voxel_distance(const Point3& a, const Point3& b,
                                        const std::array<std::int64_t, 3>& cell,
                                        double resolution) {
  const double lo[3] = {cell[0] * resolution, cell[1] * resolution, cell[2] * resolution};
  auto dist2_at = [&](double u) {
    const Point3 p = a + (b - a) * u;
    const double q[3] = {p.x, p.y, p.z};
    double d2 = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
      const double clamped = std::min(lo[axis] + resolution, std::max(lo[axis], q[axis]));
      d2 += (q[axis] - clamped) * (q[axis] - clamped);
    }
    return d2;
  };
  double lo_u = 0.0, hi_u = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double m1 = lo_u + (hi_u - lo_u) / 3.0;
    const double m2 = hi_u - (hi_u - lo_u) / 3.0;
    if (dist2_at(m1) <= dist2_at(m2)) {
      hi_u = m2;
    } else {
      lo_u = m1;
    }
  }
  return std::sqrt(dist2_at((lo_u + hi_u) / 2.0));
}

// Every metric recomputed per voxel with tree queries and explicit set
// arithmetic.
struct BruteMetrics {
  scanmap::NodeRatios ref_ratios;
  scanmap::NodeRatios tar_ratios;
  std::optional<double> iou_occ, iou_free, iou_no;
  std::optional<double> weighted_default, weighted_literal;
  std::optional<double> log_total, log_mean;
  std::optional<double> rho;
  std::optional<double> mean_probability, mean_deviation;
  std::uint64_t common = 0;
};

inline BruteMetrics brute_metrics(const OccupancyOctree& ref, const OccupancyOctree& tar,
                                  const BoundingBox& raw_box) {
  const double res = ref.resolution();
  const BoundingBox box = scanmap::snapped_outward(raw_box, res);
  const std::int64_t x0 = std::llround(box.min.x / res), x1 = std::llround(box.max.x / res);
  const std::int64_t y0 = std::llround(box.min.y / res), y1 = std::llround(box.max.y / res);
  const std::int64_t z0 = std::llround(box.min.z / res), z1 = std::llround(box.max.z / res);

  std::uint64_t ref_n[3] = {0, 0, 0}, tar_n[3] = {0, 0, 0};
  std::uint64_t inter[3] = {0, 0, 0}, uni[3] = {0, 0, 0};
  std::vector<std::pair<double, double>> common_probs;

  for (std::int64_t z = z0; z < z1; ++z) {
    for (std::int64_t y = y0; y < y1; ++y) {
      for (std::int64_t x = x0; x < x1; ++x) {
        const Point3 center{(x + 0.5) * res, (y + 0.5) * res, (z + 0.5) * res};
        const auto qa = ref.query(center);
        const auto qb = tar.query(center);
        const auto sa = static_cast<int>(qa.state);
        const auto sb = static_cast<int>(qb.state);
        ++ref_n[sa];
        ++tar_n[sb];
        for (int t = 0; t < 3; ++t) {
          if (sa == t && sb == t) ++inter[t];
          if (sa == t || sb == t) ++uni[t];
        }
        if (qa.probability && qb.probability) {
          common_probs.emplace_back(*qa.probability, *qb.probability);
        }
      }
    }
  }

  BruteMetrics m;
  const double total = static_cast<double>((x1 - x0) * (y1 - y0) * (z1 - z0));
  const int occ = static_cast<int>(VoxelState::Occupied);
  const int fre = static_cast<int>(VoxelState::Free);
  const int unk = static_cast<int>(VoxelState::Unknown);
  m.ref_ratios = {ref_n[occ] / total, ref_n[fre] / total, ref_n[unk] / total};
  m.tar_ratios = {tar_n[occ] / total, tar_n[fre] / total, tar_n[unk] / total};

  auto iou = [&](int t) -> std::optional<double> {
    if (uni[t] == 0) return std::nullopt;
    return static_cast<double>(inter[t]) / static_cast<double>(uni[t]);
  };
  m.iou_occ = iou(occ);
  m.iou_free = iou(fre);
  m.iou_no = iou(unk);

  if (m.iou_occ || m.iou_free || m.iou_no) {
    const double known = m.ref_ratios.occupied + m.ref_ratios.free;
    const double base = m.ref_ratios.occupied * m.iou_occ.value_or(0.0) +
                        m.ref_ratios.free * m.iou_free.value_or(0.0);
    if (known > 0.10) {
      const double full = base + m.ref_ratios.unknown * m.iou_no.value_or(0.0);
      m.weighted_default = full;
      m.weighted_literal = full;
    } else {
      m.weighted_literal = base;
      if (known > 0.0) m.weighted_default = base / known;
    }
  }

  m.common = common_probs.size();
  if (m.common > 0) {
    double log_total = 0.0, p_sum = 0.0, dev_sum = 0.0;
    for (const auto& [pr, pt] : common_probs) {
      log_total += scanmap::log_odds_pair_term(pr, pt);
      p_sum += pr + pt;
      dev_sum += std::abs(pr - pt);
    }
    m.log_total = log_total;
    m.log_mean = log_total / static_cast<double>(m.common);
    m.mean_probability = p_sum / (2.0 * static_cast<double>(m.common));
    m.mean_deviation = dev_sum / static_cast<double>(m.common);

    const double mean = *m.mean_probability;
    double num = 0.0, rs = 0.0, ts = 0.0;
    for (const auto& [pr, pt] : common_probs) {
      num += std::abs((pr - mean) * (pt - mean));
      rs += (pr - mean) * (pr - mean);
      ts += (pt - mean) * (pt - mean);
    }
    const double denom = std::sqrt(rs * ts);
    if (denom > 0.0) m.rho = num / denom;
  }
  return m;
}

// March along the ray in small steps until a primitive surface is crossed.
inline std::optional<double> marching_raycast(const scanmap::Scene& scene, const Point3& origin,
                                              const Point3& dir, double max_range, double step) {
  auto inside_material = [&](const Point3& p) {
    for (const auto& box : scene.boxes) {
      if (std::abs(p.x - box.center.x) <= box.size.x / 2 &&
          std::abs(p.y - box.center.y) <= box.size.y / 2 &&
          std::abs(p.z - box.center.z) <= box.size.z / 2) {
        return true;
      }
    }
    for (const auto& plane : scene.planes) {
      if (scanmap::dot(plane.normal, p) - plane.offset < 0.0) return true;
    }
    return false;
  };
  for (double t = step; t <= max_range; t += step) {
    if (inside_material(origin + dir * t)) return t;
  }
  return std::nullopt;
}

}  // namespace oracles
