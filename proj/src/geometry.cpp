#include "scanmap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scanmap/errors.hpp"

namespace scanmap {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double norm(const Point3& p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }

double dot(const Point3& a, const Point3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

bool is_finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

double wrap_two_pi(double angle) {
  double a = std::fmod(angle, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  // fmod can land exactly on 2*pi after the correction
  if (a >= kTwoPi) a = 0.0;
  return a;
}

double wrap_pi(double angle) {
  double a = std::fmod(angle + std::numbers::pi, kTwoPi);
  if (a <= 0.0) a += kTwoPi;
  return a - std::numbers::pi;
}

Point3 transform_scan_sample(const ScannerPose& pose, const ScanSample& sample) {
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.yaw) ||
      !std::isfinite(pose.height)) {
    throw InputDomainError("transform_scan_sample: non-finite pose");
  }
  if (!std::isfinite(sample.bearing) || !std::isfinite(sample.range) ||
      !std::isfinite(sample.motor_step)) {
    throw InputDomainError("transform_scan_sample: non-finite sample");
  }
  if (sample.range <= 0.0) {
    throw InputDomainError("transform_scan_sample: range must be positive");
  }
  if (sample.motor_step < 0.0) {
    throw InputDomainError("transform_scan_sample: negative motor step");
  }

  const double theta = sample.bearing;
  // Bearings up to and including pi use the pre-step yaw; the turntable moves
  // while the beam points downward, so the second half-revolution sees
  // yaw + step. At theta = 0 or pi the yaw term vanishes either way.
  const double yaw = (theta <= std::numbers::pi) ? pose.yaw : pose.yaw + sample.motor_step;

  const double planar = sample.range * std::sin(theta);
  return Point3{pose.x - planar * std::sin(yaw),
                pose.y + planar * std::cos(yaw),
                sample.range * std::cos(theta) + pose.height};
}

ScannerPose advance_motor_yaw(const ScannerPose& pose, double dphi) {
  if (!std::isfinite(dphi) || dphi < 0.0) {
    throw InputDomainError("advance_motor_yaw: step must be finite and >= 0");
  }
  ScannerPose out = pose;
  out.yaw = wrap_two_pi(pose.yaw + dphi);
  return out;
}

double select_omega(double p_var, double q_var) {
  if (!(p_var > 0.0) || !(q_var > 0.0)) {
    throw InputDomainError("select_omega: variances must be positive");
  }
  return std::min(0.5, q_var / (p_var + q_var));
}

namespace detail {

GaussianScalarEstimate ci_fuse_convex(const GaussianScalarEstimate& a,
                                      const GaussianScalarEstimate& b,
                                      double omega) {
  if (!(a.variance > 0.0) || !(b.variance > 0.0)) {
    throw InputDomainError("ci_fuse: variances must be positive");
  }
  const double wa = (1.0 - omega) / a.variance;
  const double wb = omega / b.variance;
  const double fused_var = 1.0 / (wa + wb);
  // Fuse in a frame centered on a.mean so the circle wrap is well defined.
  const double delta = wrap_pi(b.mean - a.mean);
  const double fused_mean = a.mean + fused_var * (wb * delta);

  GaussianScalarEstimate out;
  out.mean = wrap_pi(fused_mean);
  out.variance = fused_var;
  out.timestamp = a.timestamp;
  return out;
}

}  // namespace detail

GaussianScalarEstimate ci_fuse(const GaussianScalarEstimate& a,
                               const GaussianScalarEstimate& b,
                               double omega) {
  if (!(omega > 0.0) || !(omega <= 0.5)) {
    throw ParameterError("ci_fuse: omega must lie in (0, 0.5]");
  }
  return detail::ci_fuse_convex(a, b, omega);
}

namespace {

void require_sorted(std::span<const double> times, const char* which) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] < times[i - 1]) {
      throw InputDomainError(std::string("match_streams: stream ") + which +
                             " is not sorted by timestamp");
    }
  }
}

}  // namespace

std::vector<MatchedPair> match_streams(std::span<const double> a_times,
                                       std::span<const double> b_times,
                                       double max_skew) {
  if (!(max_skew >= 0.0)) {
    throw ParameterError("match_streams: max_skew must be >= 0");
  }
  require_sorted(a_times, "a");
  require_sorted(b_times, "b");

  std::vector<MatchedPair> pairs;
  if (a_times.empty() || b_times.empty()) return pairs;
  pairs.reserve(std::min(a_times.size(), b_times.size()));

  std::vector<bool> used(b_times.size(), false);
  // Every b element below this index is used; skipped ones above it are
  // still probed by the outward walk.
  std::size_t low = 0;

  for (std::size_t i = 0; i < a_times.size(); ++i) {
    const double t = a_times[i];
    // First unused candidate at or after t.
    std::size_t hi = std::lower_bound(b_times.begin() + static_cast<std::ptrdiff_t>(low),
                                      b_times.end(), t) -
                     b_times.begin();
    while (hi < b_times.size() && used[hi]) ++hi;

    // Nearest unused candidate strictly before.
    std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(std::min(hi, b_times.size())) - 1;
    while (lo >= static_cast<std::ptrdiff_t>(low) && used[static_cast<std::size_t>(lo)]) --lo;

    const bool has_hi = hi < b_times.size();
    const bool has_lo = lo >= static_cast<std::ptrdiff_t>(low);
    if (!has_hi && !has_lo) break;

    std::size_t best;
    if (!has_hi) {
      best = static_cast<std::size_t>(lo);
    } else if (!has_lo) {
      best = hi;
    } else {
      // Tie goes to the earlier element.
      best = (t - b_times[static_cast<std::size_t>(lo)] <= b_times[hi] - t)
                 ? static_cast<std::size_t>(lo)
                 : hi;
    }

    const double skew = t - b_times[best];
    if (std::abs(skew) <= max_skew) {
      pairs.push_back(MatchedPair{i, best, skew});
      used[best] = true;
      while (low < b_times.size() && used[low]) ++low;
    }
  }
  return pairs;
}

std::vector<MatchedPair> match_streams(std::span<const GaussianScalarEstimate> a,
                                       std::span<const GaussianScalarEstimate> b,
                                       double max_skew) {
  std::vector<double> ta(a.size());
  std::vector<double> tb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ta[i] = a[i].timestamp;
  for (std::size_t i = 0; i < b.size(); ++i) tb[i] = b[i].timestamp;
  return match_streams(std::span<const double>(ta), std::span<const double>(tb), max_skew);
}

}  // namespace scanmap
