#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace scanmap {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Point3 operator*(const Point3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }

double norm(const Point3& p);
double dot(const Point3& a, const Point3& b);
bool is_finite(const Point3& p);

/// Static scanner placement: ground position, accumulated motor yaw and the
/// height of the scan center above the ground plane.
struct ScannerPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;     // accumulated external yaw, kept in [0, 2*pi)
  double height = 0.0;  // z offset of the scan center
};

/// One lidar return in the scanner's local frame. The motor step is the yaw
/// increment that the turntable applies while the beam points downward, so it
/// affects only bearings in the second half-revolution.
struct ScanSample {
  double bearing = 0.0;     // [0, 2*pi), measured from +z toward +y
  double range = 0.0;       // > 0
  double timestamp = 0.0;   // monotonic session clock, seconds
  double motor_step = 0.0;  // pending yaw step, >= 0
};

/// Scalar angle estimate with variance, e.g. one yaw sample of an
/// orientation-filter or scan-matcher stream.
struct GaussianScalarEstimate {
  double mean = 0.0;      // radians
  double variance = 0.0;  // radians^2, > 0
  double timestamp = 0.0;
};

struct TrolleyPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double timestamp = 0.0;
};

/// Wrap an angle into [0, 2*pi).
double wrap_two_pi(double angle);

/// Wrap an angle into (-pi, pi].
double wrap_pi(double angle);

/// Map one scan sample to a global-frame 3D point. Bearings in [0, pi] are
/// transformed with the pose yaw; bearings in (pi, 2*pi) with yaw + motor
/// step, matching the half-revolution at which the turntable advances.
Point3 transform_scan_sample(const ScannerPose& pose, const ScanSample& sample);

/// Accumulate a turntable step into the pose yaw (mod 2*pi). Position is
/// unchanged.
ScannerPose advance_motor_yaw(const ScannerPose& pose, double dphi);

/// Covariance-intersection weight for fusing (mean,P) with (mean',Q):
/// omega = min(0.5, Q / (P + Q)). Decreases as P grows.
double select_omega(double p_var, double q_var);

/// Covariance-intersection fusion of two angle estimates:
///   fused_var^-1  = (1-omega)/P + omega/Q
///   fused_mean    = fused_var * ((1-omega)*mean/P + omega*mean'/Q)
/// Means are compared on the circle: the difference is wrapped into
/// (-pi, pi] before fusing and the result is re-wrapped. omega must lie in
/// (0, 0.5]; the fused timestamp is taken from `a`.
GaussianScalarEstimate ci_fuse(const GaussianScalarEstimate& a,
                               const GaussianScalarEstimate& b,
                               double omega);

namespace detail {
// Same update with omega anywhere in (0, 1); used by ci_fuse and by the
// symmetry checks (swapping sources maps omega to 1-omega).
GaussianScalarEstimate ci_fuse_convex(const GaussianScalarEstimate& a,
                                      const GaussianScalarEstimate& b,
                                      double omega);
}  // namespace detail

struct MatchedPair {
  std::size_t a_index = 0;
  std::size_t b_index = 0;
  double skew = 0.0;  // t_a - t_b
};

/// Pair every element of `a` with the nearest-timestamp unused element of `b`
/// when |t_a - t_b| <= max_skew; elements of `a` without such a partner are
/// dropped. Both inputs must be sorted by timestamp; the output is sorted by
/// the timestamp of `a`.
std::vector<MatchedPair> match_streams(std::span<const double> a_times,
                                       std::span<const double> b_times,
                                       double max_skew);

std::vector<MatchedPair> match_streams(std::span<const GaussianScalarEstimate> a,
                                       std::span<const GaussianScalarEstimate> b,
                                       double max_skew);

}  // namespace scanmap
