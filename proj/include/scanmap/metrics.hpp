#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "scanmap/octree.hpp"

namespace scanmap {

enum class RatioMode : std::uint8_t {
  FullBox,    // denominator = every voxel of the box, unknown included
  KnownOnly,  // denominator = occupied + free only
};

/// Per-type voxel proportions inside a bounding box. In FullBox mode the
/// three values sum to 1.
struct NodeRatios {
  double occupied = 0.0;
  double free = 0.0;
  double unknown = 0.0;
};

/// Per-type intersection-over-union scores. A component is empty when its
/// union is empty (the type appears in neither map).
struct IoUScores {
  std::optional<double> occupied;
  std::optional<double> free;
  std::optional<double> unknown;
  std::optional<double> weighted;
};

struct LogOddsErrorResult {
  double total = 0.0;
  double mean = 0.0;
  std::uint64_t common_count = 0;
};

struct CommonNodeStats {
  double mean_probability = 0.0;
  double mean_deviation = 0.0;
  std::uint64_t count = 0;
};

struct MetricConfig {
  /// Low-coverage branch of the weighted IoU: when the reference map's
  /// occupied+free share of the box is <= 0.10 the unknown term is dropped.
  /// Verbatim that leaves the weights summing below 1 (identical maps score
  /// the coverage, not 1); the default renormalizes by the dropped weight.
  bool literal_low_coverage = false;
  RatioMode ratio_mode = RatioMode::FullBox;
};

NodeRatios node_ratios(const OccupancyOctree& tree, const BoundingBox& box, RatioMode mode);

/// Throws IncompatibleMapsError unless both trees share the resolution (and
/// with it the origin-anchored voxel grid).
IoUScores iou_per_type(const OccupancyOctree& ref, const OccupancyOctree& tar,
                       const BoundingBox& box);

double weighted_iou(const OccupancyOctree& ref, const OccupancyOctree& tar,
                    const BoundingBox& box, bool literal_low_coverage = false);

/// Per-voxel term of the log-odds error. The reference probability selects
/// the case (>= 0.9999 occupied-only, <= 0.0001 free-only, both otherwise);
/// only the target probability is clamped into [1e-4, 1 - 1e-4].
double log_odds_pair_term(double p_ref, double p_tar);

/// Sum over voxels known in BOTH maps of the probability-ratio log loss;
/// the target probability is clamped into [1e-4, 1 - 1e-4] first.
LogOddsErrorResult log_odds_error(const OccupancyOctree& ref, const OccupancyOctree& tar,
                                  const BoundingBox& box);

/// Normalized cross-correlation over common voxels with a shared mean and a
/// per-term absolute value; in [0, 1]. Throws UndefinedScoreError when every
/// deviation is zero.
double correlation(const OccupancyOctree& ref, const OccupancyOctree& tar,
                   const BoundingBox& box);

CommonNodeStats common_node_stats(const OccupancyOctree& ref, const OccupancyOctree& tar,
                                  const BoundingBox& box);

/// Everything the comparison produces in one pass over the two maps. Fields
/// whose metric is undefined on the inputs stay empty instead of throwing.
struct MetricReport {
  NodeRatios ref_ratios;  // FullBox
  NodeRatios tar_ratios;  // FullBox
  std::optional<NodeRatios> ref_ratios_known;
  std::optional<NodeRatios> tar_ratios_known;
  IoUScores iou;
  std::optional<double> log_odds_total;
  std::optional<double> log_odds_mean;
  std::optional<double> rho;
  bool rho_degenerate = false;  // fewer than 2 common voxels
  std::optional<double> mean_common_probability;
  std::optional<double> mean_probability_deviation;
  std::uint64_t common_node_count = 0;
  std::uint64_t ref_leaf_count = 0;
  std::uint64_t tar_leaf_count = 0;
  double resolution = 0.0;
  BoundingBox box{};
  double evaluation_ms = 0.0;
};

MetricReport full_report(const OccupancyOctree& ref, const OccupancyOctree& tar,
                         const BoundingBox& box, const MetricConfig& config = {});

/// `key: value` lines, floats at 9 significant digits, `undefined` for empty
/// fields.
void write_report(std::ostream& out, const MetricReport& report);

/// Single comma-separated row (plus a matching header) for batch sweeps.
std::string report_csv_header();
std::string report_csv_row(const MetricReport& report);

namespace detail {

/// Dense per-voxel classification of a snapped box, for synchronized
/// per-voxel passes over two maps.
struct VoxelField {
  std::int64_t x0 = 0, y0 = 0, z0 = 0;  // global voxel index of the min corner
  std::size_t nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> state;  // VoxelState per voxel
  std::vector<float> log_odds;      // valid where state != Unknown

  std::size_t size() const { return nx * ny * nz; }
};

VoxelField rasterize(const OccupancyOctree& tree, const BoundingBox& snapped_box);

}  // namespace detail

}  // namespace scanmap
