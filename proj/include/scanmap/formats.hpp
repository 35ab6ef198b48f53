#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "scanmap/geometry.hpp"
#include "scanmap/pointcloud.hpp"

namespace scanmap {

/// Shortest-faithful decimal at 9 significant digits ("%.9g").
std::string fmt_g9(double value);

/// One line of a scan log:
/// `timestamp bearing_rad range_m motor_yaw_rad motor_step_rad`.
/// A non-positive range marks a dropout; the sample is kept in the log so
/// line counts stay aligned with the emission schedule.
struct ScanLogRecord {
  double timestamp = 0.0;
  double bearing = 0.0;
  double range = 0.0;
  double motor_yaw = 0.0;
  double motor_step = 0.0;

  bool dropout() const { return range <= 0.0; }
};

/// `timestamp x y` per line (noisy planar position fixes).
struct PositionSample {
  double timestamp = 0.0;
  double x = 0.0;
  double y = 0.0;
};

// All text formats are whitespace-separated decimal, one record per line,
// with `#` starting a comment. Floats are written with fmt_g9.

void write_scan_log(std::ostream& out, std::span<const ScanLogRecord> records);
std::vector<ScanLogRecord> read_scan_log(std::istream& in);

void write_estimate_stream(std::ostream& out, std::span<const GaussianScalarEstimate> stream);
std::vector<GaussianScalarEstimate> read_estimate_stream(std::istream& in);

void write_position_stream(std::ostream& out, std::span<const PositionSample> stream);
std::vector<PositionSample> read_position_stream(std::istream& in);

void write_pose_stream(std::ostream& out, std::span<const TrolleyPose> poses);
std::vector<TrolleyPose> read_pose_stream(std::istream& in);

/// Cloud file: header `n_points has_origins`, then `x y z [ox oy oz]` per
/// line. Writing then re-reading reproduces the file byte for byte.
void write_pointcloud(std::ostream& out, const PointCloud& cloud);
PointCloud read_pointcloud(std::istream& in);

// Path conveniences; throw IoError when the file cannot be opened.
std::string slurp_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace scanmap
