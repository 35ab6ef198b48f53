#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "scanmap/errors.hpp"
#include "scanmap/metrics.hpp"
#include "scanmap/reconstruct.hpp"
#include "scanmap/simulator.hpp"

using namespace scanmap;

namespace {

constexpr double kPi = std::numbers::pi;

// Rectangular room out of six inward-facing planes.
Scene plane_room(double hx = 4.0, double hy = 3.0, double height = 3.0) {
  Scene scene;
  scene.planes = {
      {{0, 0, 1}, 0.0},        // floor
      {{0, 0, -1}, -height},   // ceiling
      {{1, 0, 0}, -hx},        // x = -hx wall
      {{-1, 0, 0}, -hx},       // x = +hx wall
      {{0, 1, 0}, -hy},
      {{0, -1, 0}, -hy},
  };
  scene.world = BoundingBox{{-hx, -hy, 0}, {hx, hy, height}};
  return scene;
}

SensorModel noiseless_sweep(double rev_hz = 2.0) {
  SensorModel m = SensorModel::sweep_like(rev_hz);
  m.relative_sigma = 0.0;
  m.absolute_sigma_floor = 0.0;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("simulator");

TEST_CASE("ray casting against primitives") {
  SUBCASE("from the center of a cube to its wall") {
    Scene scene;
    scene.boxes = {{{0, 0, 0}, {2, 2, 2}}};
    const auto t = raycast(scene, Point3{0, 0, 0}, Point3{1, 0, 0});
    REQUIRE(t.has_value());
    CHECK(*t == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("parallel ray misses a plane") {
    Scene scene;
    scene.planes = {{{0, 0, 1}, 0.0}};
    CHECK_FALSE(raycast(scene, Point3{0, 0, 1}, Point3{1, 0, 0}).has_value());
  }
  SUBCASE("direction must be unit length") {
    Scene scene = plane_room();
    CHECK_THROWS_AS(raycast(scene, Point3{0, 0, 1}, Point3{2, 0, 0}), InputDomainError);
  }
  SUBCASE("randomized rays agree with a marching oracle") {
    Scene scene = plane_room();
    scene.boxes = {{{1.5, -1.0, 0.6}, {1.0, 0.8, 1.2}}};
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> pos(-2.0, 2.0);
    std::uniform_real_distribution<double> angle(0.0, 2 * kPi);
    int checked = 0;
    for (int i = 0; i < 60; ++i) {
      const Point3 origin{pos(rng) * 0.5, pos(rng) * 0.5, 1.0 + 0.3 * pos(rng) / 2};
      const double az = angle(rng), el = angle(rng) / 4 - kPi / 4;
      const Point3 dir{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
      if (distance_to_surface(scene, origin) < 0.05) continue;
      const auto fast = raycast(scene, origin, dir);
      const auto slow = oracles::marching_raycast(scene, origin, dir, 20.0, 1e-4);
      REQUIRE(fast.has_value() == slow.has_value());
      if (fast) {
        CHECK(std::abs(*fast - *slow) < 1e-3);
        ++checked;
      }
    }
    CHECK(checked > 30);
  }
}

TEST_CASE("range noise model") {
  SensorModel model = SensorModel::sweep_like(2.0);
  SubstreamRng rng(9, 0);

  SUBCASE("dropouts outside the working band") {
    CHECK_FALSE(apply_noise(model, 11.0, rng).has_value());
    CHECK_FALSE(apply_noise(model, 0.05, rng).has_value());
    CHECK_THROWS_AS(apply_noise(model, -1.0, rng), InputDomainError);
  }
  SUBCASE("zero-noise model returns the exact range") {
    const auto quiet = noiseless_sweep();
    const auto r = apply_noise(quiet, 5.0, rng);
    REQUIRE(r.has_value());
    CHECK(*r == 5.0);
  }
  SUBCASE("sigma follows max(floor, relative * range)") {
    // At 5 m the relative term dominates: sigma = 0.10 m.
    double sum_sq = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
      const auto r = apply_noise(model, 5.0, rng);
      REQUIRE(r.has_value());
      sum_sq += (*r - 5.0) * (*r - 5.0);
    }
    CHECK(std::sqrt(sum_sq / n) == doctest::Approx(0.10).epsilon(0.03));

    // At 0.5 m the floor dominates: sigma = 0.03 m.
    sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto r = apply_noise(model, 0.5, rng);
      REQUIRE(r.has_value());
      sum_sq += (*r - 0.5) * (*r - 0.5);
    }
    CHECK(std::sqrt(sum_sq / n) == doctest::Approx(0.03).epsilon(0.03));
  }
  SUBCASE("relative error plateau near two percent") {
    double total_rel = 0.0;
    int count = 0;
    for (double range : {2.0, 3.5, 5.0, 8.0}) {
      for (int i = 0; i < 2500; ++i) {
        const auto r = apply_noise(model, range, rng);
        REQUIRE(r.has_value());
        total_rel += std::abs(*r - range) / range;
        ++count;
      }
    }
    const double mean_rel = total_rel / count;
    CHECK(mean_rel > 0.015);
    CHECK(mean_rel < 0.025);
  }
}

TEST_CASE("substreams are deterministic and independent") {
  SubstreamRng a1(42, 1), a2(42, 1), b(42, 2);
  bool all_equal = true;
  bool any_cross_equal = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a1.gaussian();
    const double y = a2.gaussian();
    const double z = b.gaussian();
    all_equal = all_equal && (x == y);
    any_cross_equal = any_cross_equal || (x == z);
  }
  CHECK(all_equal);
  CHECK_FALSE(any_cross_equal);
}

TEST_CASE("static scan emission schedule") {
  Scene scene = plane_room();

  SUBCASE("four samples per revolution hit the cardinal bearings") {
    SensorModel model = noiseless_sweep(1.0);
    model.samples_per_rev = 4;
    SubstreamRng rng(1, 0);
    const auto result =
        simulate_static_scan(scene, {0, 0, 0, 1.0}, model, kPi / 2, 2, rng);
    REQUIRE(result.records.size() == 8);
    for (int rev = 0; rev < 2; ++rev) {
      CHECK(result.records[rev * 4 + 0].bearing == doctest::Approx(0.0));
      CHECK(result.records[rev * 4 + 1].bearing == doctest::Approx(kPi / 2));
      CHECK(result.records[rev * 4 + 2].bearing == doctest::Approx(kPi));
      CHECK(result.records[rev * 4 + 3].bearing == doctest::Approx(3 * kPi / 2));
    }
    // Yaw column carries the revolution-start yaw.
    CHECK(result.records[4].motor_yaw == doctest::Approx(kPi / 2));
  }

  SUBCASE("line count equals samples per revolution times revolutions") {
    SubstreamRng rng(1, 0);
    const auto result = simulate_static_scan(scene, {0, 0, 0, 1.0}, noiseless_sweep(2.0),
                                             kPi / 9, 4, rng);
    CHECK(result.records.size() == 4u * 500u);
  }

  SUBCASE("full sweep closes the yaw loop") {
    SensorModel model = noiseless_sweep(2.0);
    model.samples_per_rev = 8;
    SubstreamRng rng(1, 0);
    const int revolutions = 36;
    const auto result =
        simulate_static_scan(scene, {0, 0, 0, 1.0}, model, 2 * kPi / revolutions, revolutions,
                             rng);
    CHECK(std::abs(wrap_pi(result.final_pose.yaw)) < 1e-9);
  }

  SUBCASE("motor step must divide the full turn") {
    SubstreamRng rng(1, 0);
    CHECK_THROWS_AS(
        simulate_static_scan(scene, {0, 0, 0, 1.0}, noiseless_sweep(), 1.0, 1, rng),
        ParameterError);
    CHECK_THROWS_AS(
        simulate_static_scan(scene, {0, 0, 0, 1.0}, noiseless_sweep(), kPi / 9, 0, rng),
        ParameterError);
  }
}

TEST_CASE("zero-noise static scans reconstruct onto the scene surfaces") {
  Scene scene = plane_room(3.0, 3.0, 3.0);
  SensorModel model = noiseless_sweep(2.0);
  model.samples_per_rev = 90;
  SubstreamRng rng(1, 0);
  const ScannerPose pose{0.5, -0.25, 0.0, 1.2};
  const auto result = simulate_static_scan(scene, pose, model, kPi / 9, 18, rng);

  const PointCloud cloud = build_static_cloud(result.records, pose);
  REQUIRE(!cloud.empty());
  for (const Point3& p : cloud.points) {
    CHECK(distance_to_surface(scene, p) < 1e-6);
  }
}

TEST_CASE("zero-noise end-to-end map stays on the scene surfaces") {
  Scene scene = plane_room(3.0, 3.0, 3.0);
  SensorModel model = noiseless_sweep(2.0);
  model.samples_per_rev = 180;
  SubstreamRng rng(2, 0);
  const ScannerPose pose{0.0, 0.5, 0.0, 1.0};
  const auto scan = simulate_static_scan(scene, pose, model, kPi / 12, 24, rng);
  const PointCloud cloud = build_static_cloud(scan.records, pose);

  const double res = 0.15;
  const auto tree = from_pointcloud(cloud, res, {});
  REQUIRE(tree.leaf_count() > 100);
  const double limit = std::sqrt(3.0) * res;
  tree.for_each_leaf([&](const OccupancyOctree::Leaf& leaf) {
    if (*tree.query(leaf.center).probability > 0.5) {
      CHECK(distance_to_surface(scene, leaf.center) < limit);
    }
  });
}

TEST_CASE("trajectory sampling") {
  TrajectorySpec traj;
  traj.waypoints = {{0, 0, 0, 0}, {4, 0, kPi / 2, 10}, {4, 4, kPi / 2, 20}};

  const auto mid = sample_trajectory(traj, 5.0);
  CHECK(mid.x == doctest::Approx(2.0));
  CHECK(mid.yaw == doctest::Approx(kPi / 4));
  const auto before = sample_trajectory(traj, -1.0);
  CHECK(before.x == 0.0);
  const auto after = sample_trajectory(traj, 99.0);
  CHECK(after.y == doctest::Approx(4.0));

  TrajectorySpec bad;
  bad.waypoints = {{0, 0, 0, 5}, {1, 0, 0, 5}};
  CHECK_THROWS_AS(sample_trajectory(bad, 5.0), ParameterError);
}

TEST_CASE("trolley runs") {
  Scene scene = plane_room(4.0, 3.0, 3.0);

  TrolleyConfig config;
  config.sensor = noiseless_sweep(2.0);
  config.sensor.samples_per_rev = 100;
  config.scanner_height = 0.5;
  config.stream_rate_hz = 50.0;
  config.yaw_sigma_a = 0.0;
  config.yaw_sigma_b = 0.0;
  config.position_sigma = 0.0;
  config.gyro_drift_rate = 0.02;

  TrajectorySpec traj;
  traj.waypoints = {{-2, 0, 0, 0}, {2, 0, 0, 10}};

  SUBCASE("zero-noise truth streams rebuild onto the surfaces") {
    const TrolleyRun run = simulate_trolley_run(scene, traj, config, 5);
    REQUIRE(!run.scan_log.empty());
    const PointCloud cloud =
        build_moving_cloud(run.scan_log, run.yaw_stream_a, run.yaw_stream_b,
                           run.position_stream, 0.05, config.scanner_height);
    REQUIRE(!cloud.empty());
    for (const Point3& p : cloud.points) {
      CHECK(distance_to_surface(scene, p) < 1e-6);
    }
  }

  SUBCASE("drift stream error grows monotonically") {
    const TrolleyRun run = simulate_trolley_run(scene, traj, config, 5);
    double prev = -1.0;
    for (std::size_t i = 0; i < run.drift_stream.size(); ++i) {
      const double err = std::abs(run.drift_stream[i].mean - run.true_poses[i].yaw);
      CHECK(err >= prev - 1e-12);
      prev = err;
    }
    CHECK(prev == doctest::Approx(config.gyro_drift_rate * 10.0).epsilon(1e-9));
  }

  SUBCASE("stationary trajectory degenerates to a fixed vertical scan") {
    TrajectorySpec fixed;
    fixed.waypoints = {{1, 1, kPi / 2, 0}, {1, 1, kPi / 2, 5}};
    const TrolleyRun run = simulate_trolley_run(scene, fixed, config, 5);
    for (const auto& pose : run.true_poses) {
      CHECK(pose.x == 1.0);
      CHECK(pose.y == 1.0);
      CHECK(pose.yaw == doctest::Approx(kPi / 2));
    }
    // Scan ranges repeat with the revolution period.
    const auto spr = static_cast<std::size_t>(config.sensor.samples_per_rev);
    REQUIRE(run.scan_log.size() > 2 * spr);
    for (std::size_t i = 0; i + spr < run.scan_log.size(); ++i) {
      CHECK(run.scan_log[i].range == doctest::Approx(run.scan_log[i + spr].range));
    }
  }

  SUBCASE("identical seeds give identical output") {
    const TrolleyRun r1 = simulate_trolley_run(scene, traj, config, 21);
    const TrolleyRun r2 = simulate_trolley_run(scene, traj, config, 21);
    std::ostringstream s1, s2;
    write_scan_log(s1, r1.scan_log);
    write_scan_log(s2, r2.scan_log);
    write_estimate_stream(s1, r1.yaw_stream_a);
    write_estimate_stream(s2, r2.yaw_stream_a);
    write_position_stream(s1, r1.position_stream);
    write_position_stream(s2, r2.position_stream);
    CHECK(s1.str() == s2.str());
  }

  SUBCASE("trajectories outside the world bounds are rejected") {
    TrajectorySpec escape;
    escape.waypoints = {{0, 0, 0, 0}, {99, 0, 0, 10}};
    CHECK_THROWS_AS(simulate_trolley_run(scene, escape, config, 1), ParameterError);
  }
}

TEST_CASE("fused yaw beats both sources and the drift baseline") {
  Scene scene = plane_room(4.0, 3.0, 3.0);
  TrolleyConfig config;
  config.sensor = noiseless_sweep(2.0);
  config.sensor.samples_per_rev = 10;  // scan content irrelevant here
  config.stream_rate_hz = 20.0;
  config.yaw_sigma_a = 0.08;
  config.yaw_sigma_b = 0.05;
  config.gyro_drift_rate = 0.01;

  TrajectorySpec traj;
  traj.waypoints = {{-2, -1, 0, 0}, {2, -1, 1.2, 30}, {2, 1, 2.4, 60}};

  const TrolleyRun run = simulate_trolley_run(scene, traj, config, 77);
  const auto pairs = match_streams(run.yaw_stream_a, run.yaw_stream_b, 0.01);
  REQUIRE(pairs.size() == run.yaw_stream_a.size());

  auto rmse_vs_truth = [&](auto value_at, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [t, estimate] = value_at(i);
      const double truth = sample_trajectory(traj, t).yaw;
      const double e = wrap_pi(estimate - truth);
      sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(n));
  };

  const double rmse_a = rmse_vs_truth(
      [&](std::size_t i) {
        return std::pair<double, double>{run.yaw_stream_a[i].timestamp,
                                         run.yaw_stream_a[i].mean};
      },
      run.yaw_stream_a.size());
  const double rmse_b = rmse_vs_truth(
      [&](std::size_t i) {
        return std::pair<double, double>{run.yaw_stream_b[i].timestamp,
                                         run.yaw_stream_b[i].mean};
      },
      run.yaw_stream_b.size());
  const double rmse_drift = rmse_vs_truth(
      [&](std::size_t i) {
        return std::pair<double, double>{run.drift_stream[i].timestamp,
                                         run.drift_stream[i].mean};
      },
      run.drift_stream.size());
  const double rmse_fused = rmse_vs_truth(
      [&](std::size_t i) {
        const auto& pair = pairs[i];
        const auto fused =
            ci_fuse(run.yaw_stream_a[pair.a_index], run.yaw_stream_b[pair.b_index],
                    select_omega(run.yaw_stream_a[pair.a_index].variance,
                                 run.yaw_stream_b[pair.b_index].variance));
        return std::pair<double, double>{fused.timestamp, fused.mean};
      },
      pairs.size());

  CHECK(rmse_fused <= std::min(rmse_a, rmse_b) * 1.05);
  CHECK(rmse_fused < 0.5 * rmse_drift);
}

TEST_CASE("analytic ground-truth octrees") {
  SUBCASE("a region with no primitives is all free") {
    Scene scene = plane_room(4.0, 4.0, 4.0);
    const BoundingBox box{{-1, -1, 1}, {1, 1, 2}};
    const auto tree = ground_truth_octree(scene, 0.25, box);
    const auto counts = tree.count_voxels(box);
    CHECK(counts.occupied == 0);
    CHECK(counts.unknown == 0);
    CHECK(counts.free == counts.total());
  }
  SUBCASE("a single cube grows a plausible occupied shell") {
    Scene scene;
    scene.boxes = {{{0, 0, 0}, {2, 2, 2}}};
    scene.world = BoundingBox{{-3, -3, -3}, {3, 3, 3}};
    const double res = 0.2;
    const BoundingBox box{{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}};
    const auto tree = ground_truth_octree(scene, res, box);
    const auto counts = tree.count_voxels(box);

    const double analytic = 6.0 * (2.0 / res) * (2.0 / res);
    CHECK(static_cast<double>(counts.occupied) > 0.8 * analytic);
    CHECK(static_cast<double>(counts.occupied) < 1.2 * analytic);

    // Exact enumeration with an independent per-voxel classifier.
    std::uint64_t shell = 0;
    const int n = static_cast<int>(std::llround(3.0 / res));
    for (int z = -n; z < n; ++z) {
      for (int y = -n; y < n; ++y) {
        for (int x = -n; x < n; ++x) {
          const double lo[3] = {x * res, y * res, z * res};
          const double hi[3] = {lo[0] + res, lo[1] + res, lo[2] + res};
          bool overlap = true;
          bool inside = true;
          for (int a = 0; a < 3; ++a) {
            overlap = overlap && (1.0 >= lo[a]) && (-1.0 < hi[a]);
            inside = inside && (-1.0 < lo[a]) && (hi[a] <= 1.0);
          }
          if (overlap && !inside) ++shell;
        }
      }
    }
    CHECK(counts.occupied == shell);

    // Inside the cube is unexplored, not free.
    CHECK(tree.query(Point3{0, 0, 0}).state == VoxelState::Unknown);
  }
  SUBCASE("ground truth compared with itself is the identity") {
    Scene scene = plane_room(2.0, 2.0, 2.0);
    const BoundingBox box{{-2, -2, 0}, {2, 2, 2}};
    const auto tree = ground_truth_octree(scene, 0.2, box);
    const auto report = full_report(tree, tree, box, {});
    CHECK(*report.iou.weighted == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*report.log_odds_total == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(*report.rho == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("metrics rank a same-scene map above a different-scene map") {
  // Two noisy scans of one room (same position, independent noise), plus a
  // scan of a room with a large extra obstacle. Scored against the first
  // map, the same-scene reconstruction must win on every metric family;
  // only the noise differs there, while the altered scene disagrees
  // structurally.
  Scene room = plane_room(4.0, 3.0, 3.0);
  Scene altered = room;
  altered.boxes.push_back(SceneBox{{1.0, 0.0, 1.0}, {3.0, 2.0, 2.0}});

  // Noise kept well below the voxel size so the same-scene pair differs by
  // measurement jitter, not by whole re-classified boundary layers.
  auto scan_to_tree = [](const Scene& scene, const ScannerPose& pose, std::uint64_t seed) {
    SensorModel model = SensorModel::sweep_like(2.0);
    model.samples_per_rev = 400;
    model.relative_sigma = 0.005;
    model.absolute_sigma_floor = 0.0075;
    SubstreamRng rng(seed, 0);
    const auto scan = simulate_static_scan(scene, pose, model, kPi / 12, 24, rng);
    const PointCloud cloud = build_static_cloud(scan.records, pose);
    return from_pointcloud(cloud, 0.2, {});
  };

  const auto reference = scan_to_tree(room, {0.0, 0.0, 0.0, 1.0}, 1);
  const auto same_scene = scan_to_tree(room, {0.0, 0.0, 0.0, 1.0}, 2);
  const auto other_scene = scan_to_tree(altered, {0.0, 0.0, 0.0, 1.0}, 3);

  const BoundingBox box{{-4, -3, 0}, {4, 3, 3}};
  const MetricReport good = full_report(reference, same_scene, box, {});
  const MetricReport bad = full_report(reference, other_scene, box, {});

  REQUIRE(good.iou.weighted.has_value());
  REQUIRE(bad.iou.weighted.has_value());
  CHECK(*good.iou.weighted > *bad.iou.weighted);
  REQUIRE(good.rho.has_value());
  REQUIRE(bad.rho.has_value());
  CHECK(*good.rho > *bad.rho);
  REQUIRE(good.log_odds_mean.has_value());
  REQUIRE(bad.log_odds_mean.has_value());
  CHECK(*good.log_odds_mean < *bad.log_odds_mean);
}

TEST_CASE("scene files parse and reject garbage") {
  std::istringstream good("# room\nworld -1 -1 -1 1 1 1\nbox 0 0 0 1 1 1\nplane 0 0 2 0\n");
  const Scene scene = read_scene(good);
  CHECK(scene.boxes.size() == 1);
  REQUIRE(scene.planes.size() == 1);
  CHECK(norm(scene.planes[0].normal) == doctest::Approx(1.0));  // normalized on load

  std::ostringstream out;
  write_scene(out, scene);
  std::istringstream round(out.str());
  const Scene again = read_scene(round);
  CHECK(again.boxes.size() == scene.boxes.size());

  std::istringstream empty("# nothing\n");
  CHECK_THROWS_AS(read_scene(empty), IoError);
  std::istringstream bad_kind("sphere 0 0 0 1\n");
  CHECK_THROWS_AS(read_scene(bad_kind), IoError);
  std::istringstream bad_box("box 0 0 0 1 1\n");
  CHECK_THROWS_AS(read_scene(bad_box), IoError);
  std::istringstream degenerate("box 0 0 0 0 1 1\n");
  CHECK_THROWS_AS(read_scene(degenerate), IoError);
}

TEST_SUITE_END();
