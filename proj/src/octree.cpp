#include "scanmap/octree.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "scanmap/errors.hpp"
#include "scanmap/formats.hpp"

namespace scanmap {

double logit(double probability) { return std::log(probability / (1.0 - probability)); }

double probability_from_log_odds(double log_odds) { return 1.0 / (1.0 + std::exp(-log_odds)); }

BoundingBox snapped_outward(const BoundingBox& box, double resolution) {
  if (!(resolution > 0.0)) throw ParameterError("snapped_outward: resolution must be > 0");
  if (!is_finite(box.min) || !is_finite(box.max) || !(box.min.x < box.max.x) ||
      !(box.min.y < box.max.y) || !(box.min.z < box.max.z)) {
    throw InputDomainError("snapped_outward: box must be finite with min < max");
  }
  const double eps = 1e-9 * resolution;
  auto down = [&](double v) { return std::floor(v / resolution + eps) * resolution; };
  auto up = [&](double v) { return std::ceil(v / resolution - eps) * resolution; };
  BoundingBox out{{down(box.min.x), down(box.min.y), down(box.min.z)},
                  {up(box.max.x), up(box.max.y), up(box.max.z)}};
  // A face landing exactly on the grid stays put; keep min < max regardless.
  if (out.max.x <= out.min.x) out.max.x = out.min.x + resolution;
  if (out.max.y <= out.min.y) out.max.y = out.min.y + resolution;
  if (out.max.z <= out.min.z) out.max.z = out.min.z + resolution;
  return out;
}

float OccupancyOctree::clamp_lo(double lo) const {
  return std::min(lo_max_, std::max(lo_min_, static_cast<float>(lo)));
}

OccupancyOctree::OccupancyOctree(double resolution, Point3 root_center, double root_half_size,
                                 OctreeParams params)
    : resolution_(resolution), center_(root_center), half_size_(root_half_size), params_(params) {
  if (!(resolution > 0.0)) throw ParameterError("octree: resolution must be > 0");
  if (!is_finite(root_center) || !(root_half_size > 0.0)) {
    throw ParameterError("octree: bad root cube");
  }
  if (!(params.prob_hit > 0.0 && params.prob_hit < 1.0) ||
      !(params.prob_miss > 0.0 && params.prob_miss < 1.0) ||
      !(params.clamp_min_prob > 0.0 && params.clamp_min_prob < params.clamp_max_prob &&
        params.clamp_max_prob < 1.0) ||
      !(params.occupancy_threshold > 0.0 && params.occupancy_threshold < 1.0)) {
    throw ParameterError("octree: bad occupancy parameters");
  }

  const double side = 2.0 * root_half_size;
  const double levels = std::log2(side / resolution);
  depth_ = static_cast<int>(std::llround(levels));
  if (depth_ < 0 || depth_ > 40 || std::abs(levels - depth_) > 1e-6) {
    throw ParameterError("octree: root side must be resolution * 2^k");
  }
  for (int axis = 0; axis < 3; ++axis) {
    const double c = (axis == 0 ? center_.x : axis == 1 ? center_.y : center_.z);
    const double corner = (c - half_size_) / resolution_;
    corner_index_[axis] = std::llround(corner);
    if (std::abs(corner - corner_index_[axis]) > 1e-6) {
      throw ParameterError("octree: root corner must lie on the resolution grid");
    }
  }

  lo_hit_ = static_cast<float>(logit(params.prob_hit));
  lo_miss_ = static_cast<float>(logit(params.prob_miss));
  lo_min_ = static_cast<float>(logit(params.clamp_min_prob));
  lo_max_ = static_cast<float>(logit(params.clamp_max_prob));
  lo_threshold_ = static_cast<float>(logit(params.occupancy_threshold));
}

OccupancyOctree OccupancyOctree::fit(double resolution, const BoundingBox& extent,
                                     OctreeParams params) {
  if (!(resolution > 0.0)) throw ParameterError("octree: resolution must be > 0");
  if (!is_finite(extent.min) || !is_finite(extent.max)) {
    throw InputDomainError("octree: non-finite extent");
  }
  double span = resolution;
  span = std::max(span, extent.max.x - extent.min.x);
  span = std::max(span, extent.max.y - extent.min.y);
  span = std::max(span, extent.max.z - extent.min.z);

  // One spare voxel on each side keeps boundary points strictly interior
  // after the center is rounded onto the grid.
  const double target = span + 2.0 * resolution;
  int k = 0;
  while (resolution * static_cast<double>(std::int64_t{1} << k) < target) ++k;
  const double side = resolution * static_cast<double>(std::int64_t{1} << k);

  auto grid_center = [&](double lo, double hi) {
    return std::round((lo + hi) / 2.0 / resolution) * resolution;
  };
  Point3 center{grid_center(extent.min.x, extent.max.x), grid_center(extent.min.y, extent.max.y),
                grid_center(extent.min.z, extent.max.z)};
  return OccupancyOctree(resolution, center, side / 2.0, params);
}

BoundingBox OccupancyOctree::root_box() const {
  return BoundingBox{{center_.x - half_size_, center_.y - half_size_, center_.z - half_size_},
                     {center_.x + half_size_, center_.y + half_size_, center_.z + half_size_}};
}

std::int64_t OccupancyOctree::voxel_index(double coordinate) const {
  return static_cast<std::int64_t>(std::floor(coordinate / resolution_));
}

std::int64_t OccupancyOctree::boundary_index(double coordinate) const {
  return std::llround(coordinate / resolution_);
}

double OccupancyOctree::voxel_center(std::int64_t index) const {
  return (static_cast<double>(index) + 0.5) * resolution_;
}

bool OccupancyOctree::inside_root(const Point3& p) const {
  const std::int64_t n = std::int64_t{1} << depth_;
  std::int64_t ix, iy, iz;
  local_voxel(p, ix, iy, iz);
  return ix >= 0 && iy >= 0 && iz >= 0 && ix < n && iy < n && iz < n;
}

void OccupancyOctree::local_voxel(const Point3& p, std::int64_t& ix, std::int64_t& iy,
                                  std::int64_t& iz) const {
  ix = voxel_index(p.x) - corner_index_[0];
  iy = voxel_index(p.y) - corner_index_[1];
  iz = voxel_index(p.z) - corner_index_[2];
}

OccupancyOctree::Node* OccupancyOctree::descend_to_voxel(std::int64_t ix, std::int64_t iy,
                                                         std::int64_t iz) {
  if (!root_) {
    root_ = std::make_unique<Node>();
    root_->leaf = (depth_ == 0);
  }
  Node* node = root_.get();
  for (int level = 0; level < depth_; ++level) {
    if (node->leaf) {
      // Expand a pruned leaf so a finer update can land inside it.
      node->leaf = false;
      for (auto& c : node->child) {
        c = std::make_unique<Node>();
        c->leaf = true;
        c->log_odds = node->log_odds;
      }
    }
    const int shift = depth_ - 1 - level;
    const int idx = static_cast<int>(((ix >> shift) & 1) | (((iy >> shift) & 1) << 1) |
                                     (((iz >> shift) & 1) << 2));
    if (!node->child[idx]) {
      node->child[idx] = std::make_unique<Node>();
      node->child[idx]->leaf = (level == depth_ - 1);
    }
    node = node->child[idx].get();
  }
  if (!node->leaf && depth_ > 0) node->leaf = true;  // freshly created finest node
  return node;
}

void OccupancyOctree::apply_update(std::int64_t ix, std::int64_t iy, std::int64_t iz, float delta,
                                   bool absolute) {
  Node* node = descend_to_voxel(ix, iy, iz);
  const float base = absolute ? 0.0f : node->log_odds;
  node->log_odds = clamp_lo(static_cast<double>(base) + static_cast<double>(delta));
}

void OccupancyOctree::update_leaf(const Point3& p, double delta) {
  if (!is_finite(p)) throw InputDomainError("update_leaf: non-finite point");
  if (!inside_root(p)) throw ParameterError("update_leaf: point outside root cube");
  std::int64_t ix, iy, iz;
  local_voxel(p, ix, iy, iz);
  apply_update(ix, iy, iz, static_cast<float>(delta), false);
}

void OccupancyOctree::set_leaf(const Point3& p, double log_odds) {
  if (!is_finite(p)) throw InputDomainError("set_leaf: non-finite point");
  if (!inside_root(p)) throw ParameterError("set_leaf: point outside root cube");
  std::int64_t ix, iy, iz;
  local_voxel(p, ix, iy, iz);
  apply_update(ix, iy, iz, static_cast<float>(log_odds), true);
}

void OccupancyOctree::insert_ray(const Point3& origin, const Point3& endpoint) {
  if (!is_finite(origin) || !is_finite(endpoint)) {
    throw InputDomainError("insert_ray: non-finite endpoints");
  }
  const Point3 d = endpoint - origin;
  if (d.x == 0.0 && d.y == 0.0 && d.z == 0.0) {
    throw InputDomainError("insert_ray: zero-length ray");
  }
  if (!inside_root(origin) || !inside_root(endpoint)) {
    throw ParameterError("insert_ray: ray leaves the root cube");
  }

  // Amanatides–Woo walk in voxel units.
  const double inv_res = 1.0 / resolution_;
  const double px = origin.x * inv_res, py = origin.y * inv_res, pz = origin.z * inv_res;
  const double dx = d.x * inv_res, dy = d.y * inv_res, dz = d.z * inv_res;

  std::int64_t cx = voxel_index(origin.x), cy = voxel_index(origin.y), cz = voxel_index(origin.z);
  const std::int64_t ex = voxel_index(endpoint.x), ey = voxel_index(endpoint.y),
                     ez = voxel_index(endpoint.z);

  const double inf = std::numeric_limits<double>::infinity();
  std::int64_t step[3] = {dx > 0 ? 1 : (dx < 0 ? -1 : 0), dy > 0 ? 1 : (dy < 0 ? -1 : 0),
                          dz > 0 ? 1 : (dz < 0 ? -1 : 0)};
  double t_max[3], t_delta[3];
  const double pos[3] = {px, py, pz};
  const double dir[3] = {dx, dy, dz};
  std::int64_t cell[3] = {cx, cy, cz};
  const std::int64_t end[3] = {ex, ey, ez};
  for (int a = 0; a < 3; ++a) {
    if (step[a] == 0 || cell[a] == end[a]) {
      t_max[a] = inf;
      t_delta[a] = inf;
    } else {
      const double boundary = static_cast<double>(cell[a]) + (step[a] > 0 ? 1.0 : 0.0);
      t_max[a] = (boundary - pos[a]) / dir[a];
      t_delta[a] = 1.0 / std::abs(dir[a]);
    }
  }

  const std::int64_t cbase[3] = {corner_index_[0], corner_index_[1], corner_index_[2]};
  auto miss = [&](const std::int64_t c[3]) {
    apply_update(c[0] - cbase[0], c[1] - cbase[1], c[2] - cbase[2], lo_miss_, false);
  };

  while (cell[0] != end[0] || cell[1] != end[1] || cell[2] != end[2]) {
    miss(cell);
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    cell[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    // An axis that reached its final coordinate never steps again; segment
    // motion per axis is monotone, so this is exact and guarantees
    // termination after at most the Manhattan distance in steps.
    if (cell[axis] == end[axis]) t_max[axis] = inf;
  }
  apply_update(end[0] - cbase[0], end[1] - cbase[1], end[2] - cbase[2], lo_hit_, false);
}

OccupancyOctree::QueryResult OccupancyOctree::query(const Point3& p) const {
  QueryResult result;
  if (!is_finite(p) || !root_ || !inside_root(p)) return result;

  std::int64_t ix, iy, iz;
  local_voxel(p, ix, iy, iz);
  const Node* node = root_.get();
  for (int level = 0; level < depth_ && !node->leaf; ++level) {
    const int shift = depth_ - 1 - level;
    const int idx = static_cast<int>(((ix >> shift) & 1) | (((iy >> shift) & 1) << 1) |
                                     (((iz >> shift) & 1) << 2));
    node = node->child[idx].get();
    if (!node) return result;
  }
  if (!node->leaf) return result;  // structurally impossible, defensive for depth_==0 roots

  result.state = classify(node->log_odds);
  result.log_odds = node->log_odds;
  result.probability = probability_from_log_odds(node->log_odds);
  return result;
}

bool OccupancyOctree::prune_rec(Node& node) {
  if (node.leaf) return true;
  bool all_leaves = true;
  for (auto& c : node.child) {
    if (!c) {
      all_leaves = false;
      continue;
    }
    if (!prune_rec(*c)) all_leaves = false;
  }
  if (!all_leaves) return false;
  const float value = node.child[0]->log_odds;
  for (const auto& c : node.child) {
    if (c->log_odds != value) return false;
  }
  for (auto& c : node.child) c.reset();
  node.leaf = true;
  node.log_odds = value;
  return true;
}

void OccupancyOctree::prune() {
  if (root_) prune_rec(*root_);
}

std::vector<OccupancyOctree::Leaf> OccupancyOctree::leaves() const {
  std::vector<Leaf> out;
  for_each_leaf([&](const Leaf& leaf) { out.push_back(leaf); });
  return out;
}

std::size_t OccupancyOctree::leaf_count() const {
  std::size_t n = 0;
  for_each_leaf([&](const Leaf&) { ++n; });
  return n;
}

std::optional<BoundingBox> OccupancyOctree::known_extent() const {
  std::optional<BoundingBox> extent;
  for_each_leaf([&](const Leaf& leaf) {
    const double h = leaf.side / 2.0;
    const Point3 lo{leaf.center.x - h, leaf.center.y - h, leaf.center.z - h};
    const Point3 hi{leaf.center.x + h, leaf.center.y + h, leaf.center.z + h};
    if (!extent) {
      extent = BoundingBox{lo, hi};
      return;
    }
    extent->min.x = std::min(extent->min.x, lo.x);
    extent->min.y = std::min(extent->min.y, lo.y);
    extent->min.z = std::min(extent->min.z, lo.z);
    extent->max.x = std::max(extent->max.x, hi.x);
    extent->max.y = std::max(extent->max.y, hi.y);
    extent->max.z = std::max(extent->max.z, hi.z);
  });
  return extent;
}

VoxelCounts OccupancyOctree::count_voxels(const BoundingBox& box) const {
  const BoundingBox snapped = snapped_outward(box, resolution_);
  const std::uint64_t nx = static_cast<std::uint64_t>(boundary_index(snapped.max.x) -
                                                      boundary_index(snapped.min.x));
  const std::uint64_t ny = static_cast<std::uint64_t>(boundary_index(snapped.max.y) -
                                                      boundary_index(snapped.min.y));
  const std::uint64_t nz = static_cast<std::uint64_t>(boundary_index(snapped.max.z) -
                                                      boundary_index(snapped.min.z));

  VoxelCounts counts;
  for_each_leaf_region(snapped, [&](const VoxelRegion& region) {
    ++counts.leaf_count;
    if (classify(region.log_odds) == VoxelState::Occupied) {
      counts.occupied += region.volume();
    } else {
      counts.free += region.volume();
    }
  });
  counts.unknown = nx * ny * nz - counts.occupied - counts.free;
  return counts;
}

// --- serialization ---

namespace {

constexpr char kMagic[5] = {'O', 'C', 'T', 'Q', '1'};

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) throw IoError("octree: truncated stream");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

enum ChildKind : unsigned { kAbsent = 0, kLeaf = 1, kInner = 2 };

}  // namespace

void OccupancyOctree::write_node(std::ostream& out, const Node& node) {
  std::uint16_t mask = 0;
  for (int i = 0; i < 8; ++i) {
    unsigned kind = kAbsent;
    if (node.child[i]) kind = node.child[i]->leaf ? kLeaf : kInner;
    mask |= static_cast<std::uint16_t>(kind << (2 * i));
  }
  write_raw(out, mask);
  for (int i = 0; i < 8; ++i) {
    if (!node.child[i]) continue;
    if (node.child[i]->leaf) {
      write_raw(out, node.child[i]->log_odds);
    } else {
      write_node(out, *node.child[i]);
    }
  }
}

std::unique_ptr<OccupancyOctree::Node> OccupancyOctree::read_node(std::istream& in) {
  auto node = std::make_unique<Node>();
  const auto mask = read_raw<std::uint16_t>(in);
  for (int i = 0; i < 8; ++i) {
    const unsigned kind = (mask >> (2 * i)) & 3u;
    if (kind == kAbsent) continue;
    if (kind == kLeaf) {
      node->child[i] = std::make_unique<Node>();
      node->child[i]->leaf = true;
      node->child[i]->log_odds = read_raw<float>(in);
    } else if (kind == kInner) {
      node->child[i] = read_node(in);
    } else {
      throw IoError("octree: corrupt child mask");
    }
  }
  return node;
}

void OccupancyOctree::write_binary(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_raw(out, resolution_);
  write_raw(out, center_.x);
  write_raw(out, center_.y);
  write_raw(out, center_.z);
  write_raw(out, half_size_);
  write_raw(out, params_.clamp_min_prob);
  write_raw(out, params_.clamp_max_prob);
  write_raw(out, params_.occupancy_threshold);

  std::uint8_t root_kind = 0;
  if (root_) root_kind = root_->leaf ? 1 : 2;
  write_raw(out, root_kind);
  if (root_kind == 1) {
    write_raw(out, root_->log_odds);
  } else if (root_kind == 2) {
    write_node(out, *root_);
  }
  if (!out) throw IoError("octree: write failed");
}

OccupancyOctree OccupancyOctree::read_binary(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("octree: bad magic");
  }
  const double resolution = read_raw<double>(in);
  Point3 center;
  center.x = read_raw<double>(in);
  center.y = read_raw<double>(in);
  center.z = read_raw<double>(in);
  const double half_size = read_raw<double>(in);
  OctreeParams params;
  params.clamp_min_prob = read_raw<double>(in);
  params.clamp_max_prob = read_raw<double>(in);
  params.occupancy_threshold = read_raw<double>(in);

  OccupancyOctree tree(resolution, center, half_size, params);
  const auto root_kind = read_raw<std::uint8_t>(in);
  if (root_kind == 1) {
    tree.root_ = std::make_unique<Node>();
    tree.root_->leaf = true;
    tree.root_->log_odds = read_raw<float>(in);
  } else if (root_kind == 2) {
    tree.root_ = read_node(in);
  } else if (root_kind != 0) {
    throw IoError("octree: corrupt root descriptor");
  }
  return tree;
}

void OccupancyOctree::write_debug_text(std::ostream& out) const {
  out << "# leaves: cx cy cz side log_odds probability\n";
  for_each_leaf([&](const Leaf& leaf) {
    out << fmt_g9(leaf.center.x) << ' ' << fmt_g9(leaf.center.y) << ' ' << fmt_g9(leaf.center.z)
        << ' ' << fmt_g9(leaf.side) << ' ' << fmt_g9(leaf.log_odds) << ' '
        << fmt_g9(leaf.probability()) << '\n';
  });
}

OccupancyOctree from_pointcloud(const PointCloud& cloud, double resolution,
                                const FromCloudOptions& options) {
  if (!cloud.has_origins() && !options.fallback_origin && !cloud.empty()) {
    throw ParameterError("from_pointcloud: cloud has no ray origins and no fallback origin");
  }
  if (!cloud.origins.empty() && cloud.origins.size() != cloud.points.size()) {
    throw InputDomainError("from_pointcloud: origins length differs from points");
  }

  BoundingBox extent{{-resolution, -resolution, -resolution},
                     {resolution, resolution, resolution}};
  bool seeded = false;
  auto grow = [&](const Point3& p) {
    if (!seeded) {
      extent = BoundingBox{p, p};
      seeded = true;
      return;
    }
    extent.min.x = std::min(extent.min.x, p.x);
    extent.min.y = std::min(extent.min.y, p.y);
    extent.min.z = std::min(extent.min.z, p.z);
    extent.max.x = std::max(extent.max.x, p.x);
    extent.max.y = std::max(extent.max.y, p.y);
    extent.max.z = std::max(extent.max.z, p.z);
  };
  for (const Point3& p : cloud.points) grow(p);
  for (const Point3& o : cloud.origins) grow(o);
  if (!cloud.empty() && !cloud.has_origins()) grow(*options.fallback_origin);
  if (options.pad_box) {
    grow(options.pad_box->min);
    grow(options.pad_box->max);
  }

  OccupancyOctree tree = OccupancyOctree::fit(resolution, extent, options.params);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point3& origin = cloud.has_origins() ? cloud.origins[i] : *options.fallback_origin;
    tree.insert_ray(origin, cloud.points[i]);
  }
  tree.prune();
  return tree;
}

}  // namespace scanmap
