#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "scanmap/formats.hpp"
#include "scanmap/geometry.hpp"
#include "scanmap/octree.hpp"

namespace scanmap {

/// Solid axis-aligned obstacle.
struct SceneBox {
  Point3 center;
  Point3 size;  // full side lengths, all > 0
};

/// Infinite wall/floor. `normal` is unit length and points toward free
/// space; material lies on the `dot(normal, x) < offset` side.
struct ScenePlane {
  Point3 normal;
  double offset = 0.0;  // dot(normal, x) = offset on the surface
};

/// Synthetic world: boxes and planes plus the region a trolley may occupy.
struct Scene {
  std::vector<SceneBox> boxes;
  std::vector<ScenePlane> planes;
  BoundingBox world{{-10, -10, -10}, {10, 10, 10}};

  bool empty() const { return boxes.empty() && planes.empty(); }
};

/// Records: `box cx cy cz sx sy sz`, `plane nx ny nz d`,
/// `world minx miny minz maxx maxy maxz`; `#` comments.
Scene read_scene(std::istream& in);
void write_scene(std::ostream& out, const Scene& scene);

/// Nearest positive intersection of a unit-direction ray with any primitive;
/// empty on a miss. A ray starting inside a box hits its far face.
std::optional<double> raycast(const Scene& scene, const Point3& origin, const Point3& direction);

/// Range-measurement model: Gaussian noise whose sigma is the larger of an
/// absolute floor and a fraction of the true range (the relative error
/// plateau), with hard dropout outside [min_range, max_range].
struct SensorModel {
  double min_range = 0.1;
  double max_range = 10.0;
  int samples_per_rev = 500;
  double rev_hz = 2.0;
  double relative_sigma = 0.02;
  double absolute_sigma_floor = 0.03;

  /// ToF scanner: 1000 samples/s, usable to ~10 m, 1-10 Hz.
  static SensorModel sweep_like(double rev_hz = 2.0);
  /// Triangulation scanner: 4000 samples/s, 0.15-6 m, 1-11 Hz.
  static SensorModel rplidar_like(double rev_hz = 10.0);

  void validate() const;
};

/// Deterministic substreamed randomness: one (seed, substream) pair fully
/// determines the sequence. mt19937_64 with Box-Muller normals, so the raw
/// draws are identical on every standard library.
///
/// Substream assignment: 0 range noise, 1 yaw stream A, 2 yaw stream B,
/// 3 drift bias, 4 position noise.
class SubstreamRng {
 public:
  SubstreamRng(std::uint64_t seed, std::uint64_t substream);

  double uniform();   // [0, 1)
  double gaussian();  // standard normal

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Measured range for a true range, or empty for a dropout.
std::optional<double> apply_noise(const SensorModel& model, double true_range, SubstreamRng& rng);

struct StaticScanResult {
  std::vector<ScanLogRecord> records;  // one per emitted sample, dropouts included
  ScannerPose final_pose;
};

/// Turntable scan: per revolution the bearing sweeps [0, 2*pi) in
/// samples_per_rev steps and the yaw advances by `motor_step` at the
/// half-revolution, so the second half of every sweep already sees the new
/// orientation. motor_step must divide 2*pi evenly.
StaticScanResult simulate_static_scan(const Scene& scene, const ScannerPose& start_pose,
                                      const SensorModel& model, double motor_step,
                                      int revolutions, SubstreamRng& range_rng);

struct TrajectorySpec {
  struct Waypoint {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
    double time = 0.0;
  };
  std::vector<Waypoint> waypoints;  // times strictly increasing
};

/// Linear interpolation between waypoints (yaw along the shortest arc);
/// clamps outside the time span.
TrolleyPose sample_trajectory(const TrajectorySpec& traj, double t);

struct TrolleyConfig {
  SensorModel sensor = SensorModel::sweep_like(2.0);
  double scanner_height = 0.3;
  double stream_rate_hz = 50.0;  // estimate/position/truth sampling rate
  double stream_b_phase = 0.0;   // timestamp offset of yaw stream B
  double yaw_sigma_a = 0.05;     // orientation-filter-like white noise
  double yaw_sigma_b = 0.05;     // scan-matcher-like white noise
  double gyro_drift_rate = 0.01; // rad/s bias of the integrated-rate stream
  double position_sigma = 0.02;
};

struct TrolleyRun {
  std::vector<ScanLogRecord> scan_log;
  std::vector<GaussianScalarEstimate> yaw_stream_a;
  std::vector<GaussianScalarEstimate> yaw_stream_b;
  std::vector<GaussianScalarEstimate> drift_stream;
  std::vector<PositionSample> position_stream;
  std::vector<TrolleyPose> true_poses;
};

/// Push the mapping scanner along the trajectory. The scan plane is vertical
/// and rigidly attached to the trolley (it contains the trolley's lateral
/// axis), so the sweep covers the volume as the trolley advances. Emits the
/// scan log plus the estimate streams a reconstruction consumes: two noisy
/// yaw sources, an integrated-rate drift baseline, noisy positions and the
/// ground-truth poses.
TrolleyRun simulate_trolley_run(const Scene& scene, const TrajectorySpec& traj,
                                const TrolleyConfig& config, std::uint64_t seed);

/// Analytic reference map: voxels cut by a primitive surface are occupied at
/// the upper clamp, free-space voxels free at the lower clamp, voxels inside
/// solid material (or behind a wall) unknown.
OccupancyOctree ground_truth_octree(const Scene& scene, double resolution,
                                    const BoundingBox& box, OctreeParams params = {});

/// Distance from a point to the nearest primitive surface (test oracle for
/// reconstruction error).
double distance_to_surface(const Scene& scene, const Point3& p);

}  // namespace scanmap
