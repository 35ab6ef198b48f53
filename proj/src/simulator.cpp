#include "scanmap/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "scanmap/errors.hpp"

namespace scanmap {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRayEps = 1e-9;

}  // namespace

// --- scene ---

Scene read_scene(std::istream& in) {
  Scene scene;
  bool have_world = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;

    auto need = [&](double& v) {
      if (!(ss >> v) || !std::isfinite(v)) {
        throw IoError("scene line " + std::to_string(line_no) + ": malformed " + kind);
      }
    };
    if (kind == "box") {
      SceneBox box;
      need(box.center.x); need(box.center.y); need(box.center.z);
      need(box.size.x); need(box.size.y); need(box.size.z);
      if (!(box.size.x > 0 && box.size.y > 0 && box.size.z > 0)) {
        throw IoError("scene line " + std::to_string(line_no) + ": degenerate box");
      }
      scene.boxes.push_back(box);
    } else if (kind == "plane") {
      ScenePlane plane;
      need(plane.normal.x); need(plane.normal.y); need(plane.normal.z);
      need(plane.offset);
      const double n = norm(plane.normal);
      if (!(n > 0.0)) {
        throw IoError("scene line " + std::to_string(line_no) + ": zero plane normal");
      }
      plane.normal = plane.normal * (1.0 / n);
      plane.offset /= n;
      scene.planes.push_back(plane);
    } else if (kind == "world") {
      need(scene.world.min.x); need(scene.world.min.y); need(scene.world.min.z);
      need(scene.world.max.x); need(scene.world.max.y); need(scene.world.max.z);
      have_world = true;
    } else {
      throw IoError("scene line " + std::to_string(line_no) + ": unknown record '" + kind + "'");
    }
  }
  if (scene.empty()) throw IoError("scene: no primitives");
  if (!have_world) {
    // Derive bounds from the boxes, with a margin for planes-only scenes.
    if (!scene.boxes.empty()) {
      Point3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
      for (const SceneBox& b : scene.boxes) {
        lo.x = std::min(lo.x, b.center.x - b.size.x / 2);
        lo.y = std::min(lo.y, b.center.y - b.size.y / 2);
        lo.z = std::min(lo.z, b.center.z - b.size.z / 2);
        hi.x = std::max(hi.x, b.center.x + b.size.x / 2);
        hi.y = std::max(hi.y, b.center.y + b.size.y / 2);
        hi.z = std::max(hi.z, b.center.z + b.size.z / 2);
      }
      scene.world = BoundingBox{lo - Point3{1, 1, 1}, hi + Point3{1, 1, 1}};
    }
  }
  return scene;
}

void write_scene(std::ostream& out, const Scene& scene) {
  out << "# scene: box cx cy cz sx sy sz | plane nx ny nz d | world min... max...\n";
  out << "world " << fmt_g9(scene.world.min.x) << ' ' << fmt_g9(scene.world.min.y) << ' '
      << fmt_g9(scene.world.min.z) << ' ' << fmt_g9(scene.world.max.x) << ' '
      << fmt_g9(scene.world.max.y) << ' ' << fmt_g9(scene.world.max.z) << '\n';
  for (const SceneBox& b : scene.boxes) {
    out << "box " << fmt_g9(b.center.x) << ' ' << fmt_g9(b.center.y) << ' '
        << fmt_g9(b.center.z) << ' ' << fmt_g9(b.size.x) << ' ' << fmt_g9(b.size.y) << ' '
        << fmt_g9(b.size.z) << '\n';
  }
  for (const ScenePlane& p : scene.planes) {
    out << "plane " << fmt_g9(p.normal.x) << ' ' << fmt_g9(p.normal.y) << ' '
        << fmt_g9(p.normal.z) << ' ' << fmt_g9(p.offset) << '\n';
  }
}

std::optional<double> raycast(const Scene& scene, const Point3& origin, const Point3& direction) {
  if (!is_finite(origin) || !is_finite(direction)) {
    throw InputDomainError("raycast: non-finite input");
  }
  if (std::abs(norm(direction) - 1.0) > 1e-9) {
    throw InputDomainError("raycast: direction must be unit length");
  }

  double best = std::numeric_limits<double>::infinity();

  for (const SceneBox& box : scene.boxes) {
    const double lo[3] = {box.center.x - box.size.x / 2, box.center.y - box.size.y / 2,
                          box.center.z - box.size.z / 2};
    const double hi[3] = {box.center.x + box.size.x / 2, box.center.y + box.size.y / 2,
                          box.center.z + box.size.z / 2};
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {direction.x, direction.y, direction.z};

    double t_enter = -std::numeric_limits<double>::infinity();
    double t_exit = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (d[a] == 0.0) {
        if (o[a] < lo[a] || o[a] > hi[a]) miss = true;
        continue;
      }
      double t1 = (lo[a] - o[a]) / d[a];
      double t2 = (hi[a] - o[a]) / d[a];
      if (t1 > t2) std::swap(t1, t2);
      t_enter = std::max(t_enter, t1);
      t_exit = std::min(t_exit, t2);
    }
    if (miss || t_exit < t_enter || t_exit <= kRayEps) continue;
    const double t = t_enter > kRayEps ? t_enter : t_exit;  // inside: exit face
    best = std::min(best, t);
  }

  for (const ScenePlane& plane : scene.planes) {
    const double denom = dot(plane.normal, direction);
    if (std::abs(denom) < 1e-12) continue;
    const double t = (plane.offset - dot(plane.normal, origin)) / denom;
    if (t > kRayEps) best = std::min(best, t);
  }

  if (std::isinf(best)) return std::nullopt;
  return best;
}

double distance_to_surface(const Scene& scene, const Point3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const SceneBox& box : scene.boxes) {
    // Distance to the box surface: outside it is the AABB distance, inside
    // the smallest face distance.
    const double hx = box.size.x / 2, hy = box.size.y / 2, hz = box.size.z / 2;
    const double dx = std::abs(p.x - box.center.x) - hx;
    const double dy = std::abs(p.y - box.center.y) - hy;
    const double dz = std::abs(p.z - box.center.z) - hz;
    double d;
    if (dx <= 0 && dy <= 0 && dz <= 0) {
      d = -std::max(dx, std::max(dy, dz));
    } else {
      const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0), oz = std::max(dz, 0.0);
      d = std::sqrt(ox * ox + oy * oy + oz * oz);
    }
    best = std::min(best, d);
  }
  for (const ScenePlane& plane : scene.planes) {
    best = std::min(best, std::abs(dot(plane.normal, p) - plane.offset));
  }
  return best;
}

// --- sensor model ---

void SensorModel::validate() const {
  if (!(min_range > 0.0) || !(min_range < max_range)) {
    throw ParameterError("sensor: need 0 < min_range < max_range");
  }
  if (samples_per_rev < 1) throw ParameterError("sensor: samples_per_rev must be >= 1");
  if (!(rev_hz > 0.0)) throw ParameterError("sensor: rev_hz must be > 0");
  if (relative_sigma < 0.0 || absolute_sigma_floor < 0.0) {
    throw ParameterError("sensor: negative noise parameter");
  }
}

SensorModel SensorModel::sweep_like(double rev_hz) {
  if (rev_hz < 1.0 || rev_hz > 10.0) {
    throw ParameterError("sweep_like: rotation frequency must be in [1, 10] Hz");
  }
  SensorModel m;
  m.min_range = 0.1;
  m.max_range = 10.0;  // usable range is capped well below the advertised maximum
  m.samples_per_rev = static_cast<int>(std::lround(1000.0 / rev_hz));
  m.rev_hz = rev_hz;
  m.relative_sigma = 0.02;
  m.absolute_sigma_floor = 0.03;
  return m;
}

SensorModel SensorModel::rplidar_like(double rev_hz) {
  if (rev_hz < 1.0 || rev_hz > 11.0) {
    throw ParameterError("rplidar_like: rotation frequency must be in [1, 11] Hz");
  }
  SensorModel m;
  m.min_range = 0.15;
  m.max_range = 6.0;
  m.samples_per_rev = static_cast<int>(std::lround(4000.0 / rev_hz));
  m.rev_hz = rev_hz;
  m.relative_sigma = 0.015;
  m.absolute_sigma_floor = 0.02;
  return m;
}

// --- rng ---

SubstreamRng::SubstreamRng(std::uint64_t seed, std::uint64_t substream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(substream),
                    static_cast<std::uint32_t>(substream >> 32)};
  engine_.seed(seq);
}

double SubstreamRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SubstreamRng::gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  cached_ = r * std::sin(kTwoPi * u2);
  has_cached_ = true;
  return r * std::cos(kTwoPi * u2);
}

std::optional<double> apply_noise(const SensorModel& model, double true_range,
                                  SubstreamRng& rng) {
  if (!(true_range > 0.0)) throw InputDomainError("apply_noise: true range must be > 0");
  if (true_range < model.min_range || true_range > model.max_range) return std::nullopt;
  const double sigma =
      std::max(model.absolute_sigma_floor, model.relative_sigma * true_range);
  if (sigma == 0.0) return true_range;
  return true_range + sigma * rng.gaussian();
}

// --- static scan ---

StaticScanResult simulate_static_scan(const Scene& scene, const ScannerPose& start_pose,
                                      const SensorModel& model, double motor_step,
                                      int revolutions, SubstreamRng& range_rng) {
  model.validate();
  if (scene.empty()) throw ParameterError("simulate_static_scan: empty scene");
  if (!(motor_step > 0.0)) throw ParameterError("simulate_static_scan: motor step must be > 0");
  const double turns = kTwoPi / motor_step;
  if (std::abs(turns - std::round(turns)) > 1e-9) {
    throw ParameterError("simulate_static_scan: motor step must divide 2*pi evenly");
  }
  if (revolutions < 1) throw ParameterError("simulate_static_scan: revolutions must be >= 1");

  StaticScanResult result;
  result.records.reserve(static_cast<std::size_t>(revolutions) *
                         static_cast<std::size_t>(model.samples_per_rev));

  ScannerPose pose = start_pose;
  pose.yaw = wrap_two_pi(pose.yaw);
  const double sample_dt = 1.0 / (model.rev_hz * model.samples_per_rev);
  const Point3 origin{pose.x, pose.y, pose.height};

  std::size_t n = 0;
  for (int rev = 0; rev < revolutions; ++rev) {
    for (int j = 0; j < model.samples_per_rev; ++j, ++n) {
      const double bearing = kTwoPi * j / model.samples_per_rev;
      const double yaw =
          bearing <= std::numbers::pi ? pose.yaw : wrap_two_pi(pose.yaw + motor_step);
      const double s = std::sin(bearing);
      const Point3 dir{-s * std::sin(yaw), s * std::cos(yaw), std::cos(bearing)};

      double measured = 0.0;
      if (const auto hit = raycast(scene, origin, dir)) {
        if (const auto noisy = apply_noise(model, *hit, range_rng)) measured = *noisy;
      }
      result.records.push_back(
          ScanLogRecord{static_cast<double>(n) * sample_dt, bearing, measured, pose.yaw,
                        motor_step});
    }
    pose = advance_motor_yaw(pose, motor_step);
  }
  result.final_pose = pose;
  return result;
}

// --- trajectory ---

TrolleyPose sample_trajectory(const TrajectorySpec& traj, double t) {
  if (traj.waypoints.empty()) throw ParameterError("trajectory: no waypoints");
  for (std::size_t i = 1; i < traj.waypoints.size(); ++i) {
    if (!(traj.waypoints[i].time > traj.waypoints[i - 1].time)) {
      throw ParameterError("trajectory: waypoint times must be strictly increasing");
    }
  }
  const auto& wps = traj.waypoints;
  TrolleyPose pose;
  pose.timestamp = t;
  if (t <= wps.front().time) {
    pose.x = wps.front().x;
    pose.y = wps.front().y;
    pose.yaw = wrap_two_pi(wps.front().yaw);
    return pose;
  }
  if (t >= wps.back().time) {
    pose.x = wps.back().x;
    pose.y = wps.back().y;
    pose.yaw = wrap_two_pi(wps.back().yaw);
    return pose;
  }
  std::size_t hi = 1;
  while (wps[hi].time < t) ++hi;
  const auto& a = wps[hi - 1];
  const auto& b = wps[hi];
  const double u = (t - a.time) / (b.time - a.time);
  pose.x = a.x + u * (b.x - a.x);
  pose.y = a.y + u * (b.y - a.y);
  pose.yaw = wrap_two_pi(a.yaw + u * wrap_pi(b.yaw - a.yaw));
  return pose;
}

// --- trolley run ---

TrolleyRun simulate_trolley_run(const Scene& scene, const TrajectorySpec& traj,
                                const TrolleyConfig& config, std::uint64_t seed) {
  config.sensor.validate();
  if (scene.empty()) throw ParameterError("simulate_trolley_run: empty scene");
  if (traj.waypoints.size() < 1) throw ParameterError("simulate_trolley_run: no waypoints");
  if (!(config.stream_rate_hz > 0.0)) {
    throw ParameterError("simulate_trolley_run: stream rate must be > 0");
  }
  for (const auto& wp : traj.waypoints) {
    if (wp.x < scene.world.min.x || wp.x > scene.world.max.x || wp.y < scene.world.min.y ||
        wp.y > scene.world.max.y) {
      throw ParameterError("simulate_trolley_run: trajectory leaves the world bounds");
    }
  }
  (void)sample_trajectory(traj, traj.waypoints.front().time);  // validates ordering

  SubstreamRng range_rng(seed, 0);
  SubstreamRng yaw_a_rng(seed, 1);
  SubstreamRng yaw_b_rng(seed, 2);
  SubstreamRng position_rng(seed, 4);

  const double t0 = traj.waypoints.front().time;
  const double t1 = traj.waypoints.back().time;
  const double stream_dt = 1.0 / config.stream_rate_hz;

  TrolleyRun run;

  // Estimate and truth streams on the stream clock.
  for (std::size_t k = 0;; ++k) {
    const double t = t0 + static_cast<double>(k) * stream_dt;
    if (t > t1 + 1e-12) break;
    const TrolleyPose truth = sample_trajectory(traj, t);
    run.true_poses.push_back(truth);

    GaussianScalarEstimate a;
    a.timestamp = t;
    a.mean = wrap_pi(truth.yaw + config.yaw_sigma_a * yaw_a_rng.gaussian());
    a.variance = std::max(config.yaw_sigma_a * config.yaw_sigma_a, 1e-12);
    run.yaw_stream_a.push_back(a);

    const double tb = t + config.stream_b_phase;
    const TrolleyPose truth_b = sample_trajectory(traj, tb);
    GaussianScalarEstimate b;
    b.timestamp = tb;
    b.mean = wrap_pi(truth_b.yaw + config.yaw_sigma_b * yaw_b_rng.gaussian());
    b.variance = std::max(config.yaw_sigma_b * config.yaw_sigma_b, 1e-12);
    run.yaw_stream_b.push_back(b);

    // Integrating the true rate recovers the truth; the sensor bias alone
    // separates the estimate, growing linearly without bound.
    GaussianScalarEstimate drift;
    drift.timestamp = t;
    drift.mean = truth.yaw + config.gyro_drift_rate * (t - t0);
    drift.variance = std::max(config.gyro_drift_rate * config.gyro_drift_rate *
                                  (t - t0) * (t - t0),
                              1e-12);
    run.drift_stream.push_back(drift);

    PositionSample p;
    p.timestamp = t;
    p.x = truth.x + config.position_sigma * position_rng.gaussian();
    p.y = truth.y + config.position_sigma * position_rng.gaussian();
    run.position_stream.push_back(p);
  }

  // Scan log on the sensor clock. The scan plane rides with the trolley:
  // same bearing geometry as the static device with the trolley yaw and no
  // pending motor step.
  const double sample_dt = 1.0 / (config.sensor.rev_hz * config.sensor.samples_per_rev);
  const std::size_t total =
      static_cast<std::size_t>(std::floor((t1 - t0) / sample_dt)) + 1;
  run.scan_log.reserve(total);
  for (std::size_t n = 0; n < total; ++n) {
    const double t = t0 + static_cast<double>(n) * sample_dt;
    const TrolleyPose truth = sample_trajectory(traj, t);
    const double bearing =
        kTwoPi * static_cast<double>(n % static_cast<std::size_t>(config.sensor.samples_per_rev)) /
        config.sensor.samples_per_rev;
    const double s = std::sin(bearing);
    const Point3 dir{-s * std::sin(truth.yaw), s * std::cos(truth.yaw), std::cos(bearing)};
    const Point3 origin{truth.x, truth.y, config.scanner_height};

    double measured = 0.0;
    if (const auto hit = raycast(scene, origin, dir)) {
      if (const auto noisy = apply_noise(config.sensor, *hit, range_rng)) measured = *noisy;
    }
    run.scan_log.push_back(ScanLogRecord{t, bearing, measured, 0.0, 0.0});
  }
  return run;
}

// --- ground truth ---

namespace {

// Half-open voxel [a, a+res) against the primitives. Grid-aligned faces end
// up in exactly one voxel layer.
bool voxel_cut_by_box(const double a[3], double res, const SceneBox& box) {
  const double lo[3] = {box.center.x - box.size.x / 2, box.center.y - box.size.y / 2,
                        box.center.z - box.size.z / 2};
  const double hi[3] = {box.center.x + box.size.x / 2, box.center.y + box.size.y / 2,
                        box.center.z + box.size.z / 2};
  bool overlap = true;
  bool inside = true;
  for (int i = 0; i < 3; ++i) {
    overlap = overlap && (hi[i] >= a[i]) && (lo[i] < a[i] + res);
    inside = inside && (lo[i] < a[i]) && (a[i] + res <= hi[i]);
  }
  return overlap && !inside;
}

bool voxel_inside_box(const double a[3], double res, const SceneBox& box) {
  const double lo[3] = {box.center.x - box.size.x / 2, box.center.y - box.size.y / 2,
                        box.center.z - box.size.z / 2};
  const double hi[3] = {box.center.x + box.size.x / 2, box.center.y + box.size.y / 2,
                        box.center.z + box.size.z / 2};
  for (int i = 0; i < 3; ++i) {
    if (!(lo[i] < a[i] && a[i] + res <= hi[i])) return false;
  }
  return true;
}

bool voxel_cut_by_plane(const double a[3], double res, const ScenePlane& plane) {
  double s_min = std::numeric_limits<double>::infinity();
  double s_max = -std::numeric_limits<double>::infinity();
  for (int corner = 0; corner < 8; ++corner) {
    const Point3 c{a[0] + ((corner & 1) ? res : 0.0), a[1] + ((corner & 2) ? res : 0.0),
                   a[2] + ((corner & 4) ? res : 0.0)};
    const double s = dot(plane.normal, c) - plane.offset;
    s_min = std::min(s_min, s);
    s_max = std::max(s_max, s);
  }
  return s_min <= 0.0 && s_max > 0.0;
}

}  // namespace

OccupancyOctree ground_truth_octree(const Scene& scene, double resolution,
                                    const BoundingBox& box, OctreeParams params) {
  if (scene.empty()) throw ParameterError("ground_truth_octree: empty scene");
  const BoundingBox snapped = snapped_outward(box, resolution);
  OccupancyOctree tree = OccupancyOctree::fit(resolution, snapped, params);

  const double lo_occ = logit(params.clamp_max_prob);
  const double lo_free = logit(params.clamp_min_prob);

  const std::int64_t x0 = tree.boundary_index(snapped.min.x);
  const std::int64_t x1 = tree.boundary_index(snapped.max.x);
  const std::int64_t y0 = tree.boundary_index(snapped.min.y);
  const std::int64_t y1 = tree.boundary_index(snapped.max.y);
  const std::int64_t z0 = tree.boundary_index(snapped.min.z);
  const std::int64_t z1 = tree.boundary_index(snapped.max.z);

  for (std::int64_t iz = z0; iz < z1; ++iz) {
    for (std::int64_t iy = y0; iy < y1; ++iy) {
      for (std::int64_t ix = x0; ix < x1; ++ix) {
        const double a[3] = {ix * resolution, iy * resolution, iz * resolution};
        const Point3 center{tree.voxel_center(ix), tree.voxel_center(iy), tree.voxel_center(iz)};

        bool occupied = false;
        for (const SceneBox& b : scene.boxes) {
          if (voxel_cut_by_box(a, resolution, b)) {
            occupied = true;
            break;
          }
        }
        if (!occupied) {
          for (const ScenePlane& p : scene.planes) {
            if (voxel_cut_by_plane(a, resolution, p)) {
              occupied = true;
              break;
            }
          }
        }
        if (occupied) {
          tree.set_leaf(center, lo_occ);
          continue;
        }

        bool material = false;
        for (const SceneBox& b : scene.boxes) {
          if (voxel_inside_box(a, resolution, b)) {
            material = true;
            break;
          }
        }
        if (!material) {
          for (const ScenePlane& p : scene.planes) {
            if (dot(p.normal, center) - p.offset < 0.0) {
              material = true;
              break;
            }
          }
        }
        if (!material) tree.set_leaf(center, lo_free);
      }
    }
  }
  tree.prune();
  return tree;
}

}  // namespace scanmap
