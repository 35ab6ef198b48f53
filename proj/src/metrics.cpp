#include "scanmap/metrics.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "scanmap/errors.hpp"
#include "scanmap/formats.hpp"

namespace scanmap {

namespace detail {

VoxelField rasterize(const OccupancyOctree& tree, const BoundingBox& snapped_box) {
  VoxelField field;
  field.x0 = tree.boundary_index(snapped_box.min.x);
  field.y0 = tree.boundary_index(snapped_box.min.y);
  field.z0 = tree.boundary_index(snapped_box.min.z);
  field.nx = static_cast<std::size_t>(tree.boundary_index(snapped_box.max.x) - field.x0);
  field.ny = static_cast<std::size_t>(tree.boundary_index(snapped_box.max.y) - field.y0);
  field.nz = static_cast<std::size_t>(tree.boundary_index(snapped_box.max.z) - field.z0);
  field.state.assign(field.size(), static_cast<std::uint8_t>(VoxelState::Unknown));
  field.log_odds.assign(field.size(), 0.0f);

  tree.for_each_leaf_region(snapped_box, [&](const OccupancyOctree::VoxelRegion& region) {
    const auto cls = static_cast<std::uint8_t>(tree.classify(region.log_odds));
    for (std::int64_t z = region.z0; z < region.z1; ++z) {
      for (std::int64_t y = region.y0; y < region.y1; ++y) {
        const std::size_t row =
            (static_cast<std::size_t>(z - field.z0) * field.ny +
             static_cast<std::size_t>(y - field.y0)) *
            field.nx;
        for (std::int64_t x = region.x0; x < region.x1; ++x) {
          const std::size_t idx = row + static_cast<std::size_t>(x - field.x0);
          field.state[idx] = cls;
          field.log_odds[idx] = region.log_odds;
        }
      }
    }
  });
  return field;
}

}  // namespace detail

namespace {

void check_compatible(const OccupancyOctree& ref, const OccupancyOctree& tar) {
  const double a = ref.resolution();
  const double b = tar.resolution();
  if (std::abs(a - b) > 1e-12 * std::max(a, b)) {
    throw IncompatibleMapsError("maps differ in resolution: " + fmt_g9(a) + " vs " + fmt_g9(b));
  }
}

NodeRatios ratios_from_counts(const VoxelCounts& counts, RatioMode mode) {
  NodeRatios ratios;
  if (mode == RatioMode::KnownOnly) {
    const double denom = static_cast<double>(counts.occupied + counts.free);
    if (denom == 0.0) {
      throw UndefinedScoreError("node_ratios: no known voxels in the box");
    }
    ratios.occupied = static_cast<double>(counts.occupied) / denom;
    ratios.free = static_cast<double>(counts.free) / denom;
    ratios.unknown = 0.0;
  } else {
    const double denom = static_cast<double>(counts.total());
    ratios.occupied = static_cast<double>(counts.occupied) / denom;
    ratios.free = static_cast<double>(counts.free) / denom;
    ratios.unknown = static_cast<double>(counts.unknown) / denom;
  }
  return ratios;
}

// Joint per-voxel tallies of two rasterized fields plus the accumulators all
// common-voxel metrics need. One fixed-order pass, so results are identical
// from run to run.
struct PairTallies {
  std::uint64_t joint[3][3] = {};  // [ref state][tar state]
  double sum_probability = 0.0;    // sum over common voxels of p_ref + p_tar
  double sum_abs_deviation = 0.0;  // sum of |p_ref - p_tar|
  double log_odds_total = 0.0;
  std::uint64_t common = 0;

  std::uint64_t by_ref(VoxelState s) const {
    const auto i = static_cast<std::size_t>(s);
    return joint[i][0] + joint[i][1] + joint[i][2];
  }
  std::uint64_t by_tar(VoxelState s) const {
    const auto i = static_cast<std::size_t>(s);
    return joint[0][i] + joint[1][i] + joint[2][i];
  }
};

double clamp01(double p, double lo, double hi) { return std::min(hi, std::max(lo, p)); }

PairTallies tally_pair(const detail::VoxelField& ref, const detail::VoxelField& tar) {
  PairTallies t;
  const std::size_t n = ref.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto rs = ref.state[i];
    const auto ts = tar.state[i];
    ++t.joint[rs][ts];
    if (rs != static_cast<std::uint8_t>(VoxelState::Unknown) &&
        ts != static_cast<std::uint8_t>(VoxelState::Unknown)) {
      const double pr = probability_from_log_odds(ref.log_odds[i]);
      const double pt = probability_from_log_odds(tar.log_odds[i]);
      t.sum_probability += pr + pt;
      t.sum_abs_deviation += std::abs(pr - pt);
      t.log_odds_total += log_odds_pair_term(pr, pt);
      ++t.common;
    }
  }
  return t;
}

IoUScores iou_from_tallies(const PairTallies& t) {
  IoUScores scores;
  const VoxelState types[3] = {VoxelState::Occupied, VoxelState::Free, VoxelState::Unknown};
  for (VoxelState type : types) {
    const auto i = static_cast<std::size_t>(type);
    const std::uint64_t intersection = t.joint[i][i];
    const std::uint64_t uni = t.by_ref(type) + t.by_tar(type) - intersection;
    std::optional<double> value;
    if (uni > 0) value = static_cast<double>(intersection) / static_cast<double>(uni);
    switch (type) {
      case VoxelState::Occupied: scores.occupied = value; break;
      case VoxelState::Free: scores.free = value; break;
      case VoxelState::Unknown: scores.unknown = value; break;
    }
  }
  return scores;
}

// Weighted sum of the per-type IoUs with the reference map's full-box ratios
// as weights. A type with an empty union has zero reference weight, so those
// terms drop out; when no type has a defined IoU there is nothing to score.
std::optional<double> weighted_from_parts(const NodeRatios& ref_ratios, const IoUScores& iou,
                                          bool literal_low_coverage) {
  if (!iou.occupied && !iou.free && !iou.unknown) return std::nullopt;
  const double known_share = ref_ratios.occupied + ref_ratios.free;
  double sum = ref_ratios.occupied * iou.occupied.value_or(0.0) +
               ref_ratios.free * iou.free.value_or(0.0);
  if (known_share > 0.10) {
    return sum + ref_ratios.unknown * iou.unknown.value_or(0.0);
  }
  if (literal_low_coverage) return sum;
  if (known_share == 0.0) return std::nullopt;
  return sum / known_share;
}

std::optional<double> correlation_from_fields(const detail::VoxelField& ref,
                                              const detail::VoxelField& tar,
                                              const PairTallies& t) {
  if (t.common == 0) return std::nullopt;
  const double mean = t.sum_probability / (2.0 * static_cast<double>(t.common));
  double numerator = 0.0;
  double ref_sq = 0.0;
  double tar_sq = 0.0;
  const std::size_t n = ref.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (ref.state[i] == static_cast<std::uint8_t>(VoxelState::Unknown) ||
        tar.state[i] == static_cast<std::uint8_t>(VoxelState::Unknown)) {
      continue;
    }
    const double dr = probability_from_log_odds(ref.log_odds[i]) - mean;
    const double dt = probability_from_log_odds(tar.log_odds[i]) - mean;
    numerator += std::abs(dr * dt);
    ref_sq += dr * dr;
    tar_sq += dt * dt;
  }
  const double denom = std::sqrt(ref_sq * tar_sq);
  if (denom == 0.0) return std::nullopt;
  return numerator / denom;
}

BoundingBox snap_for(const OccupancyOctree& tree, const BoundingBox& box) {
  return snapped_outward(box, tree.resolution());
}

}  // namespace

double log_odds_pair_term(double p_ref, double p_tar) {
  const double t = clamp01(p_tar, 1e-4, 1.0 - 1e-4);
  if (p_ref >= 0.9999) return std::log(p_ref / t) * p_ref;
  if (p_ref <= 0.0001) return std::log((1.0 - p_ref) / (1.0 - t)) * (1.0 - p_ref);
  return std::log((1.0 - p_ref) / (1.0 - t)) * (1.0 - p_ref) + std::log(p_ref / t) * p_ref;
}

NodeRatios node_ratios(const OccupancyOctree& tree, const BoundingBox& box, RatioMode mode) {
  return ratios_from_counts(tree.count_voxels(box), mode);
}

IoUScores iou_per_type(const OccupancyOctree& ref, const OccupancyOctree& tar,
                       const BoundingBox& box) {
  check_compatible(ref, tar);
  const BoundingBox snapped = snap_for(ref, box);
  const auto fa = detail::rasterize(ref, snapped);
  const auto fb = detail::rasterize(tar, snapped);
  return iou_from_tallies(tally_pair(fa, fb));
}

double weighted_iou(const OccupancyOctree& ref, const OccupancyOctree& tar,
                    const BoundingBox& box, bool literal_low_coverage) {
  const IoUScores iou = iou_per_type(ref, tar, box);
  const NodeRatios ref_ratios = node_ratios(ref, box, RatioMode::FullBox);
  const auto value = weighted_from_parts(ref_ratios, iou, literal_low_coverage);
  if (!value) throw UndefinedScoreError("weighted_iou: no defined component");
  return *value;
}

LogOddsErrorResult log_odds_error(const OccupancyOctree& ref, const OccupancyOctree& tar,
                                  const BoundingBox& box) {
  check_compatible(ref, tar);
  const BoundingBox snapped = snap_for(ref, box);
  const auto fa = detail::rasterize(ref, snapped);
  const auto fb = detail::rasterize(tar, snapped);
  const PairTallies t = tally_pair(fa, fb);
  if (t.common == 0) throw UndefinedScoreError("log_odds_error: no common voxels");
  LogOddsErrorResult result;
  result.total = t.log_odds_total;
  result.mean = t.log_odds_total / static_cast<double>(t.common);
  result.common_count = t.common;
  return result;
}

double correlation(const OccupancyOctree& ref, const OccupancyOctree& tar,
                   const BoundingBox& box) {
  check_compatible(ref, tar);
  const BoundingBox snapped = snap_for(ref, box);
  const auto fa = detail::rasterize(ref, snapped);
  const auto fb = detail::rasterize(tar, snapped);
  const PairTallies t = tally_pair(fa, fb);
  if (t.common == 0) throw UndefinedScoreError("correlation: no common voxels");
  const auto rho = correlation_from_fields(fa, fb, t);
  if (!rho) throw UndefinedScoreError("correlation: all deviations are zero");
  return *rho;
}

CommonNodeStats common_node_stats(const OccupancyOctree& ref, const OccupancyOctree& tar,
                                  const BoundingBox& box) {
  check_compatible(ref, tar);
  const BoundingBox snapped = snap_for(ref, box);
  const auto fa = detail::rasterize(ref, snapped);
  const auto fb = detail::rasterize(tar, snapped);
  const PairTallies t = tally_pair(fa, fb);
  if (t.common == 0) throw UndefinedScoreError("common_node_stats: no common voxels");
  CommonNodeStats stats;
  stats.count = t.common;
  stats.mean_probability = t.sum_probability / (2.0 * static_cast<double>(t.common));
  stats.mean_deviation = t.sum_abs_deviation / static_cast<double>(t.common);
  return stats;
}

MetricReport full_report(const OccupancyOctree& ref, const OccupancyOctree& tar,
                         const BoundingBox& box, const MetricConfig& config) {
  check_compatible(ref, tar);
  const auto start = std::chrono::steady_clock::now();

  const BoundingBox snapped = snap_for(ref, box);
  MetricReport report;
  report.resolution = ref.resolution();
  report.box = snapped;

  const auto fa = detail::rasterize(ref, snapped);
  const auto fb = detail::rasterize(tar, snapped);
  const PairTallies t = tally_pair(fa, fb);

  VoxelCounts rc, tc;
  rc.occupied = t.by_ref(VoxelState::Occupied);
  rc.free = t.by_ref(VoxelState::Free);
  rc.unknown = t.by_ref(VoxelState::Unknown);
  tc.occupied = t.by_tar(VoxelState::Occupied);
  tc.free = t.by_tar(VoxelState::Free);
  tc.unknown = t.by_tar(VoxelState::Unknown);

  report.ref_ratios = ratios_from_counts(rc, RatioMode::FullBox);
  report.tar_ratios = ratios_from_counts(tc, RatioMode::FullBox);
  if (rc.occupied + rc.free > 0) {
    report.ref_ratios_known = ratios_from_counts(rc, RatioMode::KnownOnly);
  }
  if (tc.occupied + tc.free > 0) {
    report.tar_ratios_known = ratios_from_counts(tc, RatioMode::KnownOnly);
  }

  report.iou = iou_from_tallies(t);
  report.iou.weighted = weighted_from_parts(report.ref_ratios, report.iou,
                                            config.literal_low_coverage);

  report.common_node_count = t.common;
  if (t.common > 0) {
    report.log_odds_total = t.log_odds_total;
    report.log_odds_mean = t.log_odds_total / static_cast<double>(t.common);
    report.mean_common_probability = t.sum_probability / (2.0 * static_cast<double>(t.common));
    report.mean_probability_deviation = t.sum_abs_deviation / static_cast<double>(t.common);
    report.rho = correlation_from_fields(fa, fb, t);
    report.rho_degenerate = t.common < 2;
  }

  report.ref_leaf_count = ref.count_voxels(snapped).leaf_count;
  report.tar_leaf_count = tar.count_voxels(snapped).leaf_count;

  const auto stop = std::chrono::steady_clock::now();
  report.evaluation_ms =
      std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(stop - start).count();
  return report;
}

namespace {

std::string opt_g9(const std::optional<double>& v) {
  return v ? fmt_g9(*v) : std::string("undefined");
}

}  // namespace

void write_report(std::ostream& out, const MetricReport& r) {
  out << "resolution_m: " << fmt_g9(r.resolution) << '\n';
  out << "box_min: " << fmt_g9(r.box.min.x) << ' ' << fmt_g9(r.box.min.y) << ' '
      << fmt_g9(r.box.min.z) << '\n';
  out << "box_max: " << fmt_g9(r.box.max.x) << ' ' << fmt_g9(r.box.max.y) << ' '
      << fmt_g9(r.box.max.z) << '\n';
  out << "ref_ratio_occupied: " << fmt_g9(r.ref_ratios.occupied) << '\n';
  out << "ref_ratio_free: " << fmt_g9(r.ref_ratios.free) << '\n';
  out << "ref_ratio_unknown: " << fmt_g9(r.ref_ratios.unknown) << '\n';
  out << "tar_ratio_occupied: " << fmt_g9(r.tar_ratios.occupied) << '\n';
  out << "tar_ratio_free: " << fmt_g9(r.tar_ratios.free) << '\n';
  out << "tar_ratio_unknown: " << fmt_g9(r.tar_ratios.unknown) << '\n';
  out << "ref_known_ratio_occupied: "
      << (r.ref_ratios_known ? fmt_g9(r.ref_ratios_known->occupied) : "undefined") << '\n';
  out << "ref_known_ratio_free: "
      << (r.ref_ratios_known ? fmt_g9(r.ref_ratios_known->free) : "undefined") << '\n';
  out << "tar_known_ratio_occupied: "
      << (r.tar_ratios_known ? fmt_g9(r.tar_ratios_known->occupied) : "undefined") << '\n';
  out << "tar_known_ratio_free: "
      << (r.tar_ratios_known ? fmt_g9(r.tar_ratios_known->free) : "undefined") << '\n';
  out << "iou_occupied: " << opt_g9(r.iou.occupied) << '\n';
  out << "iou_free: " << opt_g9(r.iou.free) << '\n';
  out << "iou_unknown: " << opt_g9(r.iou.unknown) << '\n';
  out << "iou_weighted: " << opt_g9(r.iou.weighted) << '\n';
  out << "log_odds_error_total: " << opt_g9(r.log_odds_total) << '\n';
  out << "log_odds_error_mean: " << opt_g9(r.log_odds_mean) << '\n';
  out << "correlation: " << opt_g9(r.rho) << '\n';
  out << "correlation_degenerate: " << (r.rho_degenerate ? 1 : 0) << '\n';
  out << "mean_common_probability: " << opt_g9(r.mean_common_probability) << '\n';
  out << "mean_probability_deviation: " << opt_g9(r.mean_probability_deviation) << '\n';
  out << "common_node_count: " << r.common_node_count << '\n';
  out << "ref_leaf_count: " << r.ref_leaf_count << '\n';
  out << "tar_leaf_count: " << r.tar_leaf_count << '\n';
  out << "evaluation_ms: " << fmt_g9(r.evaluation_ms) << '\n';
}

std::string report_csv_header() {
  return "resolution_m,iou_occupied,iou_free,iou_unknown,iou_weighted,"
         "log_odds_error_total,log_odds_error_mean,correlation,"
         "mean_common_probability,mean_probability_deviation,common_node_count,"
         "ref_leaf_count,tar_leaf_count,evaluation_ms";
}

std::string report_csv_row(const MetricReport& r) {
  std::ostringstream ss;
  ss << fmt_g9(r.resolution) << ',' << opt_g9(r.iou.occupied) << ',' << opt_g9(r.iou.free) << ','
     << opt_g9(r.iou.unknown) << ',' << opt_g9(r.iou.weighted) << ',' << opt_g9(r.log_odds_total)
     << ',' << opt_g9(r.log_odds_mean) << ',' << opt_g9(r.rho) << ','
     << opt_g9(r.mean_common_probability) << ',' << opt_g9(r.mean_probability_deviation) << ','
     << r.common_node_count << ',' << r.ref_leaf_count << ',' << r.tar_leaf_count << ','
     << fmt_g9(r.evaluation_ms);
  return ss.str();
}

}  // namespace scanmap
