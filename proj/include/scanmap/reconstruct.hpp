#pragma once

#include <span>

#include "scanmap/formats.hpp"
#include "scanmap/geometry.hpp"
#include "scanmap/pointcloud.hpp"

namespace scanmap {

struct BuildSummary {
  std::size_t points = 0;
  std::size_t dropouts = 0;   // records with no valid range
  std::size_t stream_gaps = 0;  // records without estimates within max_skew
};

/// Static-device reconstruction: each record is transformed with the device
/// position and its own logged motor yaw / pending step. The cloud carries
/// one ray origin (the scan center) per point.
PointCloud build_static_cloud(std::span<const ScanLogRecord> records, const ScannerPose& device,
                              BuildSummary* summary = nullptr);

/// Moving-platform reconstruction: the two yaw streams are matched by
/// timestamp and fused pairwise (covariance intersection, omega from the
/// pair variances); yaw and position are then linearly interpolated at each
/// scan timestamp. Records whose nearest estimate is farther than max_skew
/// are dropped and counted as stream gaps.
PointCloud build_moving_cloud(std::span<const ScanLogRecord> records,
                              std::span<const GaussianScalarEstimate> yaw_stream_a,
                              std::span<const GaussianScalarEstimate> yaw_stream_b,
                              std::span<const PositionSample> positions, double max_skew,
                              double scanner_height, BuildSummary* summary = nullptr);

}  // namespace scanmap
