#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "scanmap/geometry.hpp"
#include "scanmap/pointcloud.hpp"

namespace scanmap {

/// Occupancy-update constants. Defaults follow the usual occupancy-mapping
/// conventions: hits add ln(0.7/0.3), misses add ln(0.4/0.6), probabilities
/// clamp to [0.12, 0.97], cells above 0.5 count as occupied.
struct OctreeParams {
  double prob_hit = 0.7;
  double prob_miss = 0.4;
  double clamp_min_prob = 0.12;
  double clamp_max_prob = 0.97;
  double occupancy_threshold = 0.5;
};

struct BoundingBox {
  Point3 min;
  Point3 max;
};

/// Grow a box outward so every face lies on the global `resolution` grid.
BoundingBox snapped_outward(const BoundingBox& box, double resolution);

enum class VoxelState : std::uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

/// Finest-resolution voxel tallies inside a bounding box. A pruned leaf of
/// side k*resolution contributes k^3 voxels. `leaf_count` is the number of
/// structural leaves touching the box.
struct VoxelCounts {
  std::uint64_t occupied = 0;
  std::uint64_t free = 0;
  std::uint64_t unknown = 0;
  std::uint64_t leaf_count = 0;

  std::uint64_t total() const { return occupied + free + unknown; }
};

double logit(double probability);
double probability_from_log_odds(double log_odds);

/// Cubical-subdivision occupancy map. Leaves store log-odds occupancy; space
/// not covered by any node is unknown. The root cube side is a power-of-two
/// multiple of the resolution and its corners lie on the global resolution
/// grid, so voxel boundaries of any two trees with equal resolution coincide.
///
/// Construction is single-writer; once built (and optionally pruned) the tree
/// is safe to share across threads read-only.
class OccupancyOctree {
 public:
  /// root_half_size must equal resolution * 2^k / 2 for some k >= 0, and the
  /// root corner must lie on the resolution grid.
  OccupancyOctree(double resolution, Point3 root_center, double root_half_size,
                  OctreeParams params = {});

  /// Smallest grid-aligned power-of-two root cube covering `extent`.
  static OccupancyOctree fit(double resolution, const BoundingBox& extent,
                             OctreeParams params = {});

  double resolution() const { return resolution_; }
  Point3 root_center() const { return center_; }
  double root_half_size() const { return half_size_; }
  int depth() const { return depth_; }
  const OctreeParams& params() const { return params_; }
  BoundingBox root_box() const;

  float log_odds_hit() const { return lo_hit_; }
  float log_odds_miss() const { return lo_miss_; }
  float log_odds_min() const { return lo_min_; }
  float log_odds_max() const { return lo_max_; }

  /// Integrate one beam: every voxel the segment crosses before the endpoint
  /// voxel receives the miss update, the endpoint voxel the hit update.
  /// Both points must lie inside the root cube.
  void insert_ray(const Point3& origin, const Point3& endpoint);

  /// Add `delta` to the finest voxel containing p (clamped).
  void update_leaf(const Point3& p, double delta);

  /// Overwrite the finest voxel containing p (clamped).
  void set_leaf(const Point3& p, double log_odds);

  /// Merge sibling leaves with bit-identical values. Queries are unaffected.
  void prune();

  struct QueryResult {
    VoxelState state = VoxelState::Unknown;
    std::optional<double> probability;  // set for known voxels
    float log_odds = 0.0f;              // valid for known voxels
  };
  QueryResult query(const Point3& p) const;

  /// Counts over the snapped box; portions outside the root cube are unknown.
  VoxelCounts count_voxels(const BoundingBox& box) const;

  /// Tight bounding box of all leaves; empty for an unknown-only tree.
  std::optional<BoundingBox> known_extent() const;

  struct Leaf {
    Point3 center;
    double side = 0.0;
    float log_odds = 0.0f;
    double probability() const { return probability_from_log_odds(log_odds); }
  };

  /// Depth-first, children in ascending index order.
  template <typename F>
  void for_each_leaf(F&& fn) const;

  std::vector<Leaf> leaves() const;
  std::size_t leaf_count() const;

  /// Half-open global-voxel-index range of a leaf region clipped to a box.
  struct VoxelRegion {
    std::int64_t x0, y0, z0;
    std::int64_t x1, y1, z1;
    float log_odds;
    std::uint64_t volume() const {
      return static_cast<std::uint64_t>(x1 - x0) * static_cast<std::uint64_t>(y1 - y0) *
             static_cast<std::uint64_t>(z1 - z0);
    }
  };

  /// Visit every known (leaf) region intersecting `snapped_box`, clipped to
  /// it. One call per structural leaf, depth-first order.
  template <typename F>
  void for_each_leaf_region(const BoundingBox& snapped_box, F&& fn) const;

  VoxelState classify(float log_odds) const {
    return log_odds > lo_threshold_ ? VoxelState::Occupied : VoxelState::Free;
  }

  /// Global voxel index of a coordinate (half-open cells anchored at the
  /// world origin).
  std::int64_t voxel_index(double coordinate) const;
  /// Index of a coordinate known to sit on a voxel boundary (snapped box
  /// corners); rounds instead of flooring so it is immune to representation
  /// error.
  std::int64_t boundary_index(double coordinate) const;
  /// World center of the voxel with the given global index.
  double voxel_center(std::int64_t index) const;

  // Binary image: "OCTQ1" magic, header, then depth-first node records with
  // 2-bit child masks and float32 leaf values. Round trips bit-exactly.
  void write_binary(std::ostream& out) const;
  static OccupancyOctree read_binary(std::istream& in);

  /// One leaf per line: `cx cy cz side log_odds probability`.
  void write_debug_text(std::ostream& out) const;

 private:
  struct Node {
    std::array<std::unique_ptr<Node>, 8> child;
    float log_odds = 0.0f;
    bool leaf = false;
  };

  struct Cursor {  // node cube in local voxel coordinates
    std::int64_t x0, y0, z0;
    std::int64_t size;  // voxels per side
  };

  float clamp_lo(double lo) const;
  Node* descend_to_voxel(std::int64_t ix, std::int64_t iy, std::int64_t iz);
  void apply_update(std::int64_t ix, std::int64_t iy, std::int64_t iz, float delta, bool absolute);
  bool inside_root(const Point3& p) const;
  void local_voxel(const Point3& p, std::int64_t& ix, std::int64_t& iy, std::int64_t& iz) const;

  static bool prune_rec(Node& node);

  template <typename F>
  void leaves_rec(const Node& node, const Cursor& cur, F& fn) const;

  template <typename F>
  void regions_rec(const Node* node, const Cursor& cur, std::int64_t bx0, std::int64_t by0,
                   std::int64_t bz0, std::int64_t bx1, std::int64_t by1, std::int64_t bz1,
                   F& fn) const;

  static void write_node(std::ostream& out, const Node& node);
  static std::unique_ptr<Node> read_node(std::istream& in);

  double resolution_ = 0.0;
  Point3 center_;
  double half_size_ = 0.0;
  int depth_ = 0;                  // root side = resolution * 2^depth
  std::int64_t corner_index_[3];   // global voxel index of the root min corner
  OctreeParams params_;
  float lo_hit_ = 0, lo_miss_ = 0, lo_min_ = 0, lo_max_ = 0, lo_threshold_ = 0;
  std::unique_ptr<Node> root_;     // null: fully unknown
};

/// Conversion options for building a map from a cloud. A cloud without
/// per-point origins needs `fallback_origin`; `pad_box` extends the fitted
/// root so later evaluation boxes stay inside it.
struct FromCloudOptions {
  std::optional<Point3> fallback_origin;
  std::optional<BoundingBox> pad_box;
  OctreeParams params;
};

/// One ray per point (origin -> point), then prune. Deterministic: the same
/// cloud yields a bit-identical serialized tree.
OccupancyOctree from_pointcloud(const PointCloud& cloud, double resolution,
                                const FromCloudOptions& options = {});

// --- template bodies ---

template <typename F>
void OccupancyOctree::leaves_rec(const Node& node, const Cursor& cur, F& fn) const {
  if (node.leaf) {
    Leaf leaf;
    const double corner_x = (corner_index_[0] + cur.x0) * resolution_;
    const double corner_y = (corner_index_[1] + cur.y0) * resolution_;
    const double corner_z = (corner_index_[2] + cur.z0) * resolution_;
    const double side = cur.size * resolution_;
    leaf.center = Point3{corner_x + side / 2.0, corner_y + side / 2.0, corner_z + side / 2.0};
    leaf.side = side;
    leaf.log_odds = node.log_odds;
    fn(leaf);
    return;
  }
  const std::int64_t h = cur.size / 2;
  for (int i = 0; i < 8; ++i) {
    if (!node.child[i]) continue;
    Cursor sub{cur.x0 + ((i & 1) ? h : 0), cur.y0 + ((i & 2) ? h : 0),
               cur.z0 + ((i & 4) ? h : 0), h};
    leaves_rec(*node.child[i], sub, fn);
  }
}

template <typename F>
void OccupancyOctree::for_each_leaf(F&& fn) const {
  if (!root_) return;
  Cursor cur{0, 0, 0, std::int64_t{1} << depth_};
  leaves_rec(*root_, cur, fn);
}

template <typename F>
void OccupancyOctree::regions_rec(const Node* node, const Cursor& cur, std::int64_t bx0,
                                  std::int64_t by0, std::int64_t bz0, std::int64_t bx1,
                                  std::int64_t by1, std::int64_t bz1, F& fn) const {
  const std::int64_t x0 = std::max(cur.x0, bx0), x1 = std::min(cur.x0 + cur.size, bx1);
  const std::int64_t y0 = std::max(cur.y0, by0), y1 = std::min(cur.y0 + cur.size, by1);
  const std::int64_t z0 = std::max(cur.z0, bz0), z1 = std::min(cur.z0 + cur.size, bz1);
  if (x0 >= x1 || y0 >= y1 || z0 >= z1 || !node) return;
  if (node->leaf) {
    VoxelRegion region{corner_index_[0] + x0, corner_index_[1] + y0, corner_index_[2] + z0,
                       corner_index_[0] + x1, corner_index_[1] + y1, corner_index_[2] + z1,
                       node->log_odds};
    fn(region);
    return;
  }
  const std::int64_t h = cur.size / 2;
  for (int i = 0; i < 8; ++i) {
    Cursor sub{cur.x0 + ((i & 1) ? h : 0), cur.y0 + ((i & 2) ? h : 0),
               cur.z0 + ((i & 4) ? h : 0), h};
    regions_rec(node->child[i].get(), sub, bx0, by0, bz0, bx1, by1, bz1, fn);
  }
}

template <typename F>
void OccupancyOctree::for_each_leaf_region(const BoundingBox& snapped_box, F&& fn) const {
  if (!root_) return;
  // Box corners in local voxel coordinates (may extend past the root).
  const std::int64_t bx0 = boundary_index(snapped_box.min.x) - corner_index_[0];
  const std::int64_t by0 = boundary_index(snapped_box.min.y) - corner_index_[1];
  const std::int64_t bz0 = boundary_index(snapped_box.min.z) - corner_index_[2];
  const std::int64_t bx1 = boundary_index(snapped_box.max.x) - corner_index_[0];
  const std::int64_t by1 = boundary_index(snapped_box.max.y) - corner_index_[1];
  const std::int64_t bz1 = boundary_index(snapped_box.max.z) - corner_index_[2];
  Cursor cur{0, 0, 0, std::int64_t{1} << depth_};
  regions_rec(root_.get(), cur, bx0, by0, bz0, bx1, by1, bz1, fn);
}

}  // namespace scanmap
