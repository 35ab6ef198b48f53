// scanmap: simulate 2D-lidar scans, reconstruct 3D point clouds, convert them
// to occupancy octrees and score map pairs.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scanmap/errors.hpp"
#include "scanmap/formats.hpp"
#include "scanmap/geometry.hpp"
#include "scanmap/metrics.hpp"
#include "scanmap/octree.hpp"
#include "scanmap/pointcloud.hpp"
#include "scanmap/reconstruct.hpp"
#include "scanmap/simulator.hpp"

namespace {

using namespace scanmap;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<double> parse_doubles(const std::string& csv, std::size_t expect,
                                  const std::string& what) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ParameterError("cannot parse " + what + ": '" + csv + "'");
    }
  }
  if (expect != 0 && values.size() != expect) {
    throw ParameterError(what + " needs " + std::to_string(expect) + " comma-separated values");
  }
  return values;
}

BoundingBox parse_box(const std::string& csv) {
  const auto v = parse_doubles(csv, 6, "box");
  return BoundingBox{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

Scene load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file: " + path);
  return read_scene(in);
}

PointCloud load_cloud_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open point cloud: " + path);
  return read_pointcloud(in);
}

OccupancyOctree load_octree_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open octree: " + path);
  return OccupancyOctree::read_binary(in);
}

void save_octree_file(const std::string& path, const OccupancyOctree& tree) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path);
  tree.write_binary(out);
}

template <typename Writer>
void save_text_file(const std::string& path, Writer&& writer) {
  std::ostringstream buffer;
  writer(buffer);
  write_file(path, buffer.str());
}

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  return BoundingBox{{std::min(a.min.x, b.min.x), std::min(a.min.y, b.min.y),
                      std::min(a.min.z, b.min.z)},
                     {std::max(a.max.x, b.max.x), std::max(a.max.y, b.max.y),
                      std::max(a.max.z, b.max.z)}};
}

// --- shared option state ---

struct GlobalOptions {
  std::uint64_t seed = 1;
  double resolution = 0.2;
};

struct SimulateOptions {
  std::string mode = "static";
  std::string scene_path;
  std::string out_dir = ".";
  std::string sensor = "sweep";
  double rev_hz = 2.0;
  bool no_noise = false;
  // static
  double pose_x = 0.0, pose_y = 0.0, pose_yaw = 0.0, height = 0.3;
  double motor_step = std::numbers::pi / 18.0;  // 10 degrees
  int revolutions = 36;
  // trolley
  std::vector<std::string> waypoints;
  double stream_rate = 50.0;
  double stream_b_phase = 0.0;
  double yaw_sigma_a = 0.05;
  double yaw_sigma_b = 0.05;
  double drift_rate = 0.01;
  double position_sigma = 0.02;
};

struct BuildOptions {
  std::string mode = "static";
  std::string scan_path;
  std::string out_path;
  double pose_x = 0.0, pose_y = 0.0, height = 0.3;
  std::string yaw_a_path, yaw_b_path, positions_path;
  double max_skew = 0.05;
};

struct FilterOptions {
  std::string in_path, out_path;
  std::string preset;
  std::vector<std::string> stages;
  double leaf = 0.05;
  std::string axis = "x";
  double pass_min = -1e9, pass_max = 1e9;
  double sigma = 0.02, radius = 0.06;
};

struct ToOctreeOptions {
  std::string in_path, out_path;
  std::string fallback_origin;
  std::string pad_box;
  std::string debug_dump;
};

struct CompareOptions {
  std::string ref_path, tar_path;
  std::string box;
  bool literal_low_coverage = false;
  bool csv = false;
  std::string report_path;
};

struct SweepOptions {
  std::string in_path;
  std::string resolutions = "0.4,0.2,0.1";
  int trials = 5;
  std::string fallback_origin;
  std::string out_path;
};

SensorModel make_sensor(const SimulateOptions& opt) {
  SensorModel model = opt.sensor == "rplidar" ? SensorModel::rplidar_like(opt.rev_hz)
                                              : SensorModel::sweep_like(opt.rev_hz);
  if (opt.no_noise) {
    model.relative_sigma = 0.0;
    model.absolute_sigma_floor = 0.0;
  }
  return model;
}

int run_simulate(const GlobalOptions& global, const SimulateOptions& opt) {
  const Scene scene = load_scene_file(opt.scene_path);
  const SensorModel model = make_sensor(opt);
  std::filesystem::create_directories(opt.out_dir);
  const auto path = [&](const char* name) {
    return (std::filesystem::path(opt.out_dir) / name).string();
  };

  if (opt.mode == "static") {
    SubstreamRng rng(global.seed, 0);
    ScannerPose pose{opt.pose_x, opt.pose_y, opt.pose_yaw, opt.height};
    const StaticScanResult result =
        simulate_static_scan(scene, pose, model, opt.motor_step, opt.revolutions, rng);
    save_text_file(path("scan.txt"),
                   [&](std::ostream& out) { write_scan_log(out, result.records); });
    std::cout << "scan records: " << result.records.size() << "\n";
    std::cout << "final yaw: " << fmt_g9(result.final_pose.yaw) << "\n";
    return 0;
  }

  // trolley
  TrajectorySpec traj;
  for (const std::string& wp : opt.waypoints) {
    const auto v = parse_doubles(wp, 4, "waypoint");
    traj.waypoints.push_back(TrajectorySpec::Waypoint{v[0], v[1], v[2], v[3]});
  }
  if (traj.waypoints.empty()) throw ParameterError("trolley mode needs --waypoint x,y,yaw,t");

  TrolleyConfig config;
  config.sensor = model;
  config.scanner_height = opt.height;
  config.stream_rate_hz = opt.stream_rate;
  config.stream_b_phase = opt.stream_b_phase;
  config.yaw_sigma_a = opt.no_noise ? 0.0 : opt.yaw_sigma_a;
  config.yaw_sigma_b = opt.no_noise ? 0.0 : opt.yaw_sigma_b;
  config.gyro_drift_rate = opt.drift_rate;
  config.position_sigma = opt.no_noise ? 0.0 : opt.position_sigma;

  const TrolleyRun run = simulate_trolley_run(scene, traj, config, global.seed);
  save_text_file(path("scan.txt"), [&](std::ostream& out) { write_scan_log(out, run.scan_log); });
  save_text_file(path("yaw_a.txt"),
                 [&](std::ostream& out) { write_estimate_stream(out, run.yaw_stream_a); });
  save_text_file(path("yaw_b.txt"),
                 [&](std::ostream& out) { write_estimate_stream(out, run.yaw_stream_b); });
  save_text_file(path("drift.txt"),
                 [&](std::ostream& out) { write_estimate_stream(out, run.drift_stream); });
  save_text_file(path("positions.txt"),
                 [&](std::ostream& out) { write_position_stream(out, run.position_stream); });
  save_text_file(path("truth.txt"),
                 [&](std::ostream& out) { write_pose_stream(out, run.true_poses); });
  std::cout << "scan records: " << run.scan_log.size() << "\n";
  std::cout << "stream samples: " << run.yaw_stream_a.size() << "\n";
  return 0;
}

int run_build(const BuildOptions& opt) {
  std::ifstream scan_in(opt.scan_path);
  if (!scan_in) throw IoError("cannot open scan log: " + opt.scan_path);
  const auto records = read_scan_log(scan_in);

  BuildSummary summary;
  PointCloud cloud;
  if (opt.mode == "static") {
    ScannerPose device{opt.pose_x, opt.pose_y, 0.0, opt.height};
    cloud = build_static_cloud(records, device, &summary);
  } else {
    std::ifstream a_in(opt.yaw_a_path), b_in(opt.yaw_b_path), p_in(opt.positions_path);
    if (!a_in) throw IoError("cannot open yaw stream: " + opt.yaw_a_path);
    if (!b_in) throw IoError("cannot open yaw stream: " + opt.yaw_b_path);
    if (!p_in) throw IoError("cannot open position stream: " + opt.positions_path);
    const auto yaw_a = read_estimate_stream(a_in);
    const auto yaw_b = read_estimate_stream(b_in);
    const auto positions = read_position_stream(p_in);
    cloud = build_moving_cloud(records, yaw_a, yaw_b, positions, opt.max_skew, opt.height,
                               &summary);
  }

  std::cout << "points: " << summary.points << "\n";
  std::cout << "dropouts: " << summary.dropouts << "\n";
  std::cout << "stream gaps: " << summary.stream_gaps << "\n";
  if (cloud.empty()) {
    std::cerr << "error: empty cloud (no usable records)\n";
    return kExitData;
  }
  save_text_file(opt.out_path, [&](std::ostream& out) { write_pointcloud(out, cloud); });
  return 0;
}

int run_filter(const FilterOptions& opt) {
  const PointCloud cloud = load_cloud_file(opt.in_path);

  FilterPipeline::PresetParams params;
  params.leaf = opt.leaf;
  params.axis = axis_from_name(opt.axis);
  params.min = opt.pass_min;
  params.max = opt.pass_max;
  params.sigma = opt.sigma;
  params.radius = opt.radius;

  FilterPipeline pipeline;
  if (!opt.stages.empty()) {
    for (const std::string& stage : opt.stages) {
      if (stage == "down") {
        pipeline.stages.push_back(DownsampleStage{params.leaf});
      } else if (stage == "pass") {
        pipeline.stages.push_back(PassThroughStage{params.axis, params.min, params.max});
      } else if (stage == "gauss") {
        pipeline.stages.push_back(GaussianStage{params.sigma, params.radius});
      } else {
        throw ParameterError("unknown stage '" + stage + "' (down|pass|gauss)");
      }
    }
  } else {
    pipeline = FilterPipeline::preset(opt.preset.empty() ? "identity" : opt.preset, params);
  }

  const PointCloud filtered = apply_pipeline(cloud, pipeline);
  std::cout << "points before: " << cloud.size() << "\n";
  std::cout << "points after: " << filtered.size() << "\n";
  save_text_file(opt.out_path, [&](std::ostream& out) { write_pointcloud(out, filtered); });
  return 0;
}

int run_to_octree(const GlobalOptions& global, const ToOctreeOptions& opt) {
  const PointCloud cloud = load_cloud_file(opt.in_path);

  FromCloudOptions options;
  if (!opt.fallback_origin.empty()) {
    const auto v = parse_doubles(opt.fallback_origin, 3, "fallback origin");
    options.fallback_origin = Point3{v[0], v[1], v[2]};
  }
  if (!opt.pad_box.empty()) options.pad_box = parse_box(opt.pad_box);

  const auto start = std::chrono::steady_clock::now();
  const OccupancyOctree tree = from_pointcloud(cloud, global.resolution, options);
  const auto stop = std::chrono::steady_clock::now();
  const double ms =
      std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(stop - start).count();

  save_octree_file(opt.out_path, tree);
  if (!opt.debug_dump.empty()) {
    save_text_file(opt.debug_dump, [&](std::ostream& out) { tree.write_debug_text(out); });
  }
  std::cout << "leaves: " << tree.leaf_count() << "\n";
  std::cout << "build ms: " << fmt_g9(ms) << "\n";
  return 0;
}

int run_compare(const GlobalOptions&, const CompareOptions& opt) {
  const OccupancyOctree ref = load_octree_file(opt.ref_path);
  const OccupancyOctree tar = load_octree_file(opt.tar_path);

  BoundingBox box;
  if (!opt.box.empty()) {
    box = parse_box(opt.box);
  } else {
    const auto ref_extent = ref.known_extent();
    const auto tar_extent = tar.known_extent();
    if (ref_extent && tar_extent) {
      box = union_box(*ref_extent, *tar_extent);
    } else if (ref_extent) {
      box = *ref_extent;
    } else if (tar_extent) {
      box = *tar_extent;
    } else {
      box = union_box(ref.root_box(), tar.root_box());
    }
  }

  MetricConfig config;
  config.literal_low_coverage = opt.literal_low_coverage;
  const MetricReport report = full_report(ref, tar, box, config);

  std::ostringstream text;
  if (opt.csv) {
    text << report_csv_header() << "\n" << report_csv_row(report) << "\n";
  } else {
    write_report(text, report);
  }
  std::cout << text.str();
  if (!opt.report_path.empty()) write_file(opt.report_path, text.str());
  return 0;
}

int run_sweep(const SweepOptions& opt) {
  const PointCloud cloud = load_cloud_file(opt.in_path);
  const auto resolutions = parse_doubles(opt.resolutions, 0, "resolutions");
  if (resolutions.empty()) throw ParameterError("sweep: need at least one resolution");
  if (opt.trials < 1) throw ParameterError("sweep: trials must be >= 1");

  FromCloudOptions options;
  if (!opt.fallback_origin.empty()) {
    const auto v = parse_doubles(opt.fallback_origin, 3, "fallback origin");
    options.fallback_origin = Point3{v[0], v[1], v[2]};
  }

  std::ostringstream table;
  table << "resolution_m,conversion_ms,occupied_volume_m3,leaf_count,self_evaluation_ms\n";
  for (const double res : resolutions) {
    std::vector<double> times;
    OccupancyOctree tree = from_pointcloud(cloud, res, options);
    for (int trial = 0; trial < opt.trials; ++trial) {
      const auto start = std::chrono::steady_clock::now();
      OccupancyOctree rebuilt = from_pointcloud(cloud, res, options);
      const auto stop = std::chrono::steady_clock::now();
      times.push_back(
          std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(stop - start)
              .count());
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];

    const VoxelCounts counts = tree.count_voxels(tree.root_box());
    const double volume = static_cast<double>(counts.occupied) * res * res * res;

    const BoundingBox box = tree.known_extent().value_or(tree.root_box());
    const MetricReport self = full_report(tree, tree, box, {});

    table << fmt_g9(res) << ',' << fmt_g9(median) << ',' << fmt_g9(volume) << ','
          << tree.leaf_count() << ',' << fmt_g9(self.evaluation_ms) << "\n";
  }
  std::cout << table.str();
  if (!opt.out_path.empty()) write_file(opt.out_path, table.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D-lidar 3D mapping toolkit: simulation, reconstruction, octree conversion "
               "and map-quality metrics"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value configuration file; flags override it");

  GlobalOptions global;
  app.add_option("--seed", global.seed, "random seed for simulation noise");
  app.add_option("--resolution", global.resolution, "octree voxel size in meters");

  SimulateOptions sim;
  CLI::App* simulate = app.add_subcommand("simulate", "generate scan logs and estimate streams");
  simulate->add_option("--mode", sim.mode, "static|trolley")
      ->check(CLI::IsMember({"static", "trolley"}));
  simulate->add_option("--scene", sim.scene_path, "scene file")->required();
  simulate->add_option("--out-dir", sim.out_dir, "output directory");
  simulate->add_option("--sensor", sim.sensor, "sensor preset")
      ->check(CLI::IsMember({"sweep", "rplidar"}));
  simulate->add_option("--rev-hz", sim.rev_hz, "rotation frequency");
  simulate->add_flag("--no-noise", sim.no_noise, "disable measurement noise");
  simulate->add_option("--pose-x", sim.pose_x);
  simulate->add_option("--pose-y", sim.pose_y);
  simulate->add_option("--pose-yaw", sim.pose_yaw);
  simulate->add_option("--height", sim.height, "scan center height above ground");
  simulate->add_option("--motor-step", sim.motor_step, "turntable step in radians");
  simulate->add_option("--revolutions", sim.revolutions);
  simulate->add_option("--waypoint", sim.waypoints, "trolley waypoint x,y,yaw,t (repeatable)");
  simulate->add_option("--stream-rate", sim.stream_rate, "estimate stream rate in Hz");
  simulate->add_option("--stream-b-phase", sim.stream_b_phase, "timestamp offset of stream B");
  simulate->add_option("--yaw-sigma-a", sim.yaw_sigma_a);
  simulate->add_option("--yaw-sigma-b", sim.yaw_sigma_b);
  simulate->add_option("--drift-rate", sim.drift_rate, "gyro bias in rad/s");
  simulate->add_option("--position-sigma", sim.position_sigma);

  BuildOptions build;
  CLI::App* build_cmd = app.add_subcommand("build", "reconstruct a 3D cloud from a scan log");
  build_cmd->add_option("--mode", build.mode, "static|moving")
      ->check(CLI::IsMember({"static", "moving"}));
  build_cmd->add_option("--scan", build.scan_path, "scan log")->required();
  build_cmd->add_option("--out", build.out_path, "output cloud")->required();
  build_cmd->add_option("--pose-x", build.pose_x, "static device x");
  build_cmd->add_option("--pose-y", build.pose_y, "static device y");
  build_cmd->add_option("--height", build.height, "scan center height");
  build_cmd->add_option("--yaw-a", build.yaw_a_path, "yaw estimate stream A");
  build_cmd->add_option("--yaw-b", build.yaw_b_path, "yaw estimate stream B");
  build_cmd->add_option("--positions", build.positions_path, "position stream");
  build_cmd->add_option("--max-skew", build.max_skew, "timestamp matching window in seconds");

  FilterOptions filter;
  CLI::App* filter_cmd = app.add_subcommand("filter", "run a post-processing pipeline");
  filter_cmd->add_option("--in", filter.in_path)->required();
  filter_cmd->add_option("--out", filter.out_path)->required();
  filter_cmd->add_option("--preset", filter.preset, "map1|map2|map3|ref|identity")
      ->check(CLI::IsMember({"map1", "map2", "map3", "ref", "identity"}));
  filter_cmd->add_option("--stages", filter.stages,
                         "explicit stage list (down|pass|gauss), applied in order");
  filter_cmd->add_option("--leaf", filter.leaf, "down-sampling cube side");
  filter_cmd->add_option("--axis", filter.axis, "pass-through axis")
      ->check(CLI::IsMember({"x", "y", "z"}));
  filter_cmd->add_option("--pass-min", filter.pass_min);
  filter_cmd->add_option("--pass-max", filter.pass_max);
  filter_cmd->add_option("--sigma", filter.sigma, "gaussian sigma");
  filter_cmd->add_option("--radius", filter.radius, "gaussian neighborhood radius");

  ToOctreeOptions to_octree;
  CLI::App* to_octree_cmd = app.add_subcommand("to-octree", "convert a cloud to an octree");
  to_octree_cmd->add_option("--in", to_octree.in_path)->required();
  to_octree_cmd->add_option("--out", to_octree.out_path)->required();
  to_octree_cmd->add_option("--fallback-origin", to_octree.fallback_origin,
                            "x,y,z ray origin for clouds without per-point origins");
  to_octree_cmd->add_option("--pad-box", to_octree.pad_box,
                            "minx,miny,minz,maxx,maxy,maxz extra extent");
  to_octree_cmd->add_option("--debug-dump", to_octree.debug_dump, "ASCII leaf dump path");

  CompareOptions compare;
  CLI::App* compare_cmd = app.add_subcommand("compare", "score two octrees");
  compare_cmd->add_option("ref", compare.ref_path, "reference octree")->required();
  compare_cmd->add_option("tar", compare.tar_path, "target octree")->required();
  compare_cmd->add_option("--box", compare.box, "minx,miny,minz,maxx,maxy,maxz evaluation box");
  compare_cmd->add_flag("--literal-low-coverage", compare.literal_low_coverage,
                        "use the verbatim low-coverage weighted IoU branch");
  compare_cmd->add_flag("--csv", compare.csv, "emit a CSV row instead of key: value lines");
  compare_cmd->add_option("--report", compare.report_path, "also write the report here");

  SweepOptions sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "resolution vs time/volume sweep");
  sweep_cmd->add_option("--in", sweep.in_path, "point cloud")->required();
  sweep_cmd->add_option("--resolutions", sweep.resolutions, "comma-separated voxel sizes");
  sweep_cmd->add_option("--trials", sweep.trials, "conversion timing trials (median)");
  sweep_cmd->add_option("--fallback-origin", sweep.fallback_origin, "x,y,z ray origin");
  sweep_cmd->add_option("--out", sweep.out_path, "also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) return run_simulate(global, sim);
    if (build_cmd->parsed()) return run_build(build);
    if (filter_cmd->parsed()) return run_filter(filter);
    if (to_octree_cmd->parsed()) return run_to_octree(global, to_octree);
    if (compare_cmd->parsed()) return run_compare(global, compare);
    if (sweep_cmd->parsed()) return run_sweep(sweep);
  } catch (const ParameterError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputDomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
