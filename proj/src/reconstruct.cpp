#include "scanmap/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "scanmap/errors.hpp"

namespace scanmap {

namespace {

template <typename T, typename GetTime>
void require_sorted_stream(std::span<const T> stream, GetTime time, const char* name) {
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (time(stream[i]) < time(stream[i - 1])) {
      throw InputDomainError(std::string("build: stream ") + name + " not sorted by timestamp");
    }
  }
}

// Linear interpolation on a sorted stream, requiring the nearest sample to be
// within max_skew. Angles interpolate along the shortest arc.
template <typename T, typename GetTime, typename GetValue>
bool interpolate_at(std::span<const T> stream, double t, double max_skew, bool angular,
                    GetTime time, GetValue value, double* out) {
  if (stream.empty()) return false;
  auto it = std::lower_bound(stream.begin(), stream.end(), t,
                             [&](const T& s, double v) { return time(s) < v; });
  if (it == stream.begin()) {
    if (time(*it) - t > max_skew) return false;
    *out = value(*it);
    return true;
  }
  if (it == stream.end()) {
    const T& last = stream.back();
    if (t - time(last) > max_skew) return false;
    *out = value(last);
    return true;
  }
  const T& hi = *it;
  const T& lo = *(it - 1);
  if (std::min(t - time(lo), time(hi) - t) > max_skew) return false;
  const double span = time(hi) - time(lo);
  const double u = span > 0.0 ? (t - time(lo)) / span : 0.0;
  if (angular) {
    *out = wrap_two_pi(value(lo) + u * wrap_pi(value(hi) - value(lo)));
  } else {
    *out = value(lo) + u * (value(hi) - value(lo));
  }
  return true;
}

}  // namespace

PointCloud build_static_cloud(std::span<const ScanLogRecord> records, const ScannerPose& device,
                              BuildSummary* summary) {
  BuildSummary local;
  PointCloud cloud;
  const Point3 origin{device.x, device.y, device.height};
  for (const ScanLogRecord& r : records) {
    if (r.dropout()) {
      ++local.dropouts;
      continue;
    }
    ScannerPose pose = device;
    pose.yaw = wrap_two_pi(r.motor_yaw);
    ScanSample sample;
    sample.bearing = r.bearing;
    sample.range = r.range;
    sample.timestamp = r.timestamp;
    sample.motor_step = r.motor_step;
    cloud.points.push_back(transform_scan_sample(pose, sample));
    cloud.origins.push_back(origin);
    ++local.points;
  }
  if (summary) *summary = local;
  return cloud;
}

PointCloud build_moving_cloud(std::span<const ScanLogRecord> records,
                              std::span<const GaussianScalarEstimate> yaw_stream_a,
                              std::span<const GaussianScalarEstimate> yaw_stream_b,
                              std::span<const PositionSample> positions, double max_skew,
                              double scanner_height, BuildSummary* summary) {
  require_sorted_stream(yaw_stream_a, [](const auto& e) { return e.timestamp; }, "yaw A");
  require_sorted_stream(yaw_stream_b, [](const auto& e) { return e.timestamp; }, "yaw B");
  require_sorted_stream(positions, [](const auto& p) { return p.timestamp; }, "positions");

  // Pairwise fusion of the two yaw sources at the matched timestamps.
  std::vector<GaussianScalarEstimate> fused;
  const auto pairs = match_streams(yaw_stream_a, yaw_stream_b, max_skew);
  fused.reserve(pairs.size());
  for (const MatchedPair& pair : pairs) {
    const GaussianScalarEstimate& a = yaw_stream_a[pair.a_index];
    const GaussianScalarEstimate& b = yaw_stream_b[pair.b_index];
    fused.push_back(ci_fuse(a, b, select_omega(a.variance, b.variance)));
  }

  BuildSummary local;
  PointCloud cloud;
  for (const ScanLogRecord& r : records) {
    if (r.dropout()) {
      ++local.dropouts;
      continue;
    }
    double yaw = 0.0, x = 0.0, y = 0.0;
    const bool have_yaw = interpolate_at(
        std::span<const GaussianScalarEstimate>(fused), r.timestamp, max_skew, true,
        [](const auto& e) { return e.timestamp; }, [](const auto& e) { return e.mean; }, &yaw);
    const bool have_x = interpolate_at(
        positions, r.timestamp, max_skew, false, [](const auto& p) { return p.timestamp; },
        [](const auto& p) { return p.x; }, &x);
    const bool have_y = interpolate_at(
        positions, r.timestamp, max_skew, false, [](const auto& p) { return p.timestamp; },
        [](const auto& p) { return p.y; }, &y);
    if (!have_yaw || !have_x || !have_y) {
      ++local.stream_gaps;
      continue;
    }

    ScannerPose pose;
    pose.x = x;
    pose.y = y;
    pose.yaw = yaw;
    pose.height = scanner_height;
    ScanSample sample;
    sample.bearing = r.bearing;
    sample.range = r.range;
    sample.timestamp = r.timestamp;
    sample.motor_step = 0.0;
    cloud.points.push_back(transform_scan_sample(pose, sample));
    cloud.origins.push_back(Point3{x, y, scanner_height});
    ++local.points;
  }
  if (summary) *summary = local;
  return cloud;
}

}  // namespace scanmap
