#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "growfem/core.hpp"
#include "growfem/octree.hpp"
#include "growfem/status.hpp"

namespace growfem {

/// Oriented box: center, orthonormal axes and positive half extents (mm).
struct Cuboid {
  Vec3 center;
  std::array<Vec3, 3> axes{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
  Vec3 half_extents{1, 1, 1};

  static Cuboid axis_aligned(const Vec3& lo, const Vec3& hi) {
    Cuboid c;
    c.center = (lo + hi) * 0.5;
    c.half_extents = (hi - lo) * 0.5;
    return c;
  }

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out;
    for (int i = 0; i < 8; ++i) {
      const double sx = (i & 1) ? 1.0 : -1.0;
      const double sy = (i & 2) ? 1.0 : -1.0;
      const double sz = (i & 4) ? 1.0 : -1.0;
      out[static_cast<std::size_t>(i)] = center + axes[0] * (sx * half_extents.x) +
                                         axes[1] * (sy * half_extents.y) +
                                         axes[2] * (sz * half_extents.z);
    }
    return out;
  }

  /// Axis-aligned bounding box, for cheap pre-filters.
  std::pair<Vec3, Vec3> bounds() const {
    Vec3 r{std::abs(axes[0].x) * half_extents.x + std::abs(axes[1].x) * half_extents.y +
               std::abs(axes[2].x) * half_extents.z,
           std::abs(axes[0].y) * half_extents.x + std::abs(axes[1].y) * half_extents.y +
               std::abs(axes[2].y) * half_extents.z,
           std::abs(axes[0].z) * half_extents.x + std::abs(axes[1].z) * half_extents.y +
               std::abs(axes[2].z) * half_extents.z};
    return {center - r, center + r};
  }
};

inline constexpr double kAxisTolerance = 1e-12;

inline void validate_cuboid(const Cuboid& c) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(norm(c.axes[static_cast<std::size_t>(i)]) - 1.0) > 1e-12)
      throw InvalidArgument("cuboid axes must be unit length");
    for (int j = i + 1; j < 3; ++j)
      if (std::abs(dot(c.axes[static_cast<std::size_t>(i)], c.axes[static_cast<std::size_t>(j)])) >
          1e-12)
        throw InvalidArgument("cuboid axes must be orthogonal");
  }
  if (c.half_extents.x <= 0 || c.half_extents.y <= 0 || c.half_extents.z <= 0)
    throw InvalidArgument("cuboid half extents must be positive");
}

/// Separating-axis test for two cuboids. Tests the 15 candidate axes (3 face
/// normals each plus the 9 edge-direction cross products) and reports true iff
/// some axis strictly separates the projection intervals; boxes sharing only a
/// boundary therefore count as intersecting. Degenerate cross products from
/// parallel edges are skipped. Exact for cuboids.
inline bool separating_axis_disjoint(const Cuboid& a, const Cuboid& b) {
  validate_cuboid(a);
  validate_cuboid(b);

  const Vec3 t = b.center - a.center;
  std::array<Vec3, 15> axes;
  int n = 0;
  for (int i = 0; i < 3; ++i) axes[static_cast<std::size_t>(n++)] = a.axes[static_cast<std::size_t>(i)];
  for (int i = 0; i < 3; ++i) axes[static_cast<std::size_t>(n++)] = b.axes[static_cast<std::size_t>(i)];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      axes[static_cast<std::size_t>(n++)] =
          cross(a.axes[static_cast<std::size_t>(i)], b.axes[static_cast<std::size_t>(j)]);

  for (int k = 0; k < n; ++k) {
    const Vec3& v = axes[static_cast<std::size_t>(k)];
    if (dot(v, v) < kAxisTolerance * kAxisTolerance) continue;  // parallel edges
    const double ra = std::abs(dot(v, a.axes[0])) * a.half_extents.x +
                      std::abs(dot(v, a.axes[1])) * a.half_extents.y +
                      std::abs(dot(v, a.axes[2])) * a.half_extents.z;
    const double rb = std::abs(dot(v, b.axes[0])) * b.half_extents.x +
                      std::abs(dot(v, b.axes[1])) * b.half_extents.y +
                      std::abs(dot(v, b.axes[2])) * b.half_extents.z;
    if (std::abs(dot(v, t)) > ra + rb) return true;
  }
  return false;
}

inline bool cuboids_intersect(const Cuboid& a, const Cuboid& b) {
  return !separating_axis_disjoint(a, b);
}

/// Search volume swept by the laser during one increment: an oriented box
/// aligned with the scan segment, one layer thick, optionally inflated in the
/// xy-plane to absorb arithmetic-precision misses.
struct HeatAffectedVolume {
  Vec3 previous_laser_position;
  Vec3 current_laser_position;
  double laser_width = 0.0;
  double layer_thickness = 0.0;
  double xy_scale = 1.0;

  Cuboid box;
  std::array<Vec3, 8> vertices;
  Vec3 centroid;
};

/// Builds the HAV for a scan subsegment. Axis 1 follows the segment (length
/// and width scaled by xy_scale), axis 3 is vertical with the unscaled layer
/// thickness; the top face sits at the segment's top height.
inline HeatAffectedVolume build_hav(const Vec3& prev, const Vec3& cur, double width,
                                    double thickness, double xy_scale = 1.0) {
  if (width <= 0 || thickness <= 0) throw InvalidArgument("build_hav: width/thickness must be > 0");
  if (xy_scale < 1.0) throw InvalidArgument("build_hav: xy_scale must be >= 1");
  const Vec3 d = cur - prev;
  const double len = norm(d);
  if (len <= 0) throw InvalidArgument("build_hav: zero-length segment");

  HeatAffectedVolume h;
  h.previous_laser_position = prev;
  h.current_laser_position = cur;
  h.laser_width = width;
  h.layer_thickness = thickness;
  h.xy_scale = xy_scale;

  const Vec3 axis1 = d / len;
  const Vec3 up{0, 0, 1};
  const Vec3 side = cross(up, axis1);
  const double sn = norm(side);
  if (sn < 1e-12) throw InvalidArgument("build_hav: vertical scan segment");

  h.box.axes = {axis1, side / sn, up};
  h.box.half_extents = {0.5 * len * xy_scale, 0.5 * width * xy_scale, 0.5 * thickness};
  const double top = std::max(prev.z, cur.z);
  h.box.center = (prev + cur) * 0.5;
  h.box.center.z = top - 0.5 * thickness;
  h.vertices = h.box.corners();
  h.centroid = Vec3{0, 0, 0};
  for (const Vec3& v : h.vertices) h.centroid += v;
  h.centroid = h.centroid / 8.0;
  return h;
}

/// Oriented box of a mesh cell. The identity (or any affine) map yields the
/// exact box; under a curved map the best-fit box through the 8 mapped corners
/// is returned, with axes from the averaged edge midlines and extents from the
/// corner projections, so it always contains all 8 corners.
inline Cuboid cell_obb(const OctreeMesh& mesh, std::size_t leaf_index) {
  const std::array<Vec3, 8> c = mesh.leaf_box(leaf_index);

  // Average the four edges along each local direction.
  Vec3 ex = (c[1] - c[0]) + (c[3] - c[2]) + (c[5] - c[4]) + (c[7] - c[6]);
  Vec3 ey = (c[2] - c[0]) + (c[3] - c[1]) + (c[6] - c[4]) + (c[7] - c[5]);
  Vec3 ez = (c[4] - c[0]) + (c[5] - c[1]) + (c[6] - c[2]) + (c[7] - c[3]);
  if (dot(cross(ex, ey), ez) <= 0.0)
    throw NumericalError("cell_obb: degenerate or inverted mapped cell");

  Cuboid obb;
  obb.axes[0] = normalized(ex);
  // Gram-Schmidt to keep the axes orthonormal under skewed maps.
  ey = ey - obb.axes[0] * dot(ey, obb.axes[0]);
  obb.axes[1] = normalized(ey);
  ez = ez - obb.axes[0] * dot(ez, obb.axes[0]) - obb.axes[1] * dot(ez, obb.axes[1]);
  obb.axes[2] = normalized(ez);

  Vec3 centroid{0, 0, 0};
  for (const Vec3& v : c) centroid += v;
  centroid = centroid / 8.0;

  Vec3 lo{0, 0, 0}, hi{0, 0, 0};
  for (int i = 0; i < 8; ++i) {
    const Vec3 r = c[static_cast<std::size_t>(i)] - centroid;
    for (int d = 0; d < 3; ++d) {
      const double p = dot(r, obb.axes[static_cast<std::size_t>(d)]);
      if (i == 0 || p < lo[d]) lo[d] = p;
      if (i == 0 || p > hi[d]) hi[d] = p;
    }
  }
  for (int d = 0; d < 3; ++d) {
    obb.center += obb.axes[static_cast<std::size_t>(d)] * (0.5 * (lo[d] + hi[d]));
    obb.half_extents[d] = 0.5 * (hi[d] - lo[d]);
  }
  obb.center += centroid;
  return obb;
}

/// Callbacks invoked by transform_to_hav in pipeline order: field projection
/// after each refine/coarsen or balance sweep, then repartition/redistribute.
struct TransformHooks {
  /// Extra veto for merging a sibling octet, on top of the built-in
  /// status-uniform rule.
  std::function<bool(std::span<const std::size_t>)> coarsen_filter;
  /// Called after every mesh transformation with the provenance of the sweep.
  std::function<void(const OctreeMesh& old_mesh, const OctreeMesh& new_mesh,
                     const std::vector<LeafOrigin>&)>
      on_transform;
  /// Called once per outer iteration so the caller can repartition.
  std::function<void(const OctreeMesh&)> on_repartition;
};

struct TransformToHavResult {
  OctreeMesh mesh;
  std::vector<std::size_t> activated;        // all max-level leaves touching the HAV
  std::vector<std::size_t> newly_activated;  // K_acd: the previously inactive ones
  int iterations = 0;
};

/// Iteratively refines every leaf intersecting the HAV to max_level and
/// coarsens the rest toward the minimum levels, keeping 2:1 balance. Leaves
/// overlapping the HAV's z-band are never coarsened below search_min_level so
/// their oriented boxes stay quasi-rectangular under curved maps. The loop is
/// bounded by (max_level - min_level) + 1 iterations.
inline TransformToHavResult transform_to_hav(const OctreeMesh& mesh, StatusField& status,
                                             const HeatAffectedVolume& hav, int max_level,
                                             int search_min_level, TransformHooks hooks = {}) {
  if (max_level < search_min_level || search_min_level < mesh.min_level() ||
      max_level > mesh.max_level())
    throw InvalidArgument("transform_to_hav: level bounds out of order");

  const auto [hav_lo, hav_hi] = hav.box.bounds();
  const int max_iters = (max_level - mesh.min_level()) + 1;

  TransformToHavResult res;
  res.mesh = mesh;

  auto leaf_bounds = [&](const OctreeMesh& m, std::size_t i) {
    const auto corners = m.leaf_box(i);
    Vec3 lo = corners[0], hi = corners[0];
    for (const Vec3& v : corners)
      for (int d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], v[d]);
        hi[d] = std::max(hi[d], v[d]);
      }
    return std::pair<Vec3, Vec3>{lo, hi};
  };
  auto bbox_overlap = [&](const std::pair<Vec3, Vec3>& b) {
    for (int d = 0; d < 3; ++d)
      if (b.second[d] < hav_lo[d] || b.first[d] > hav_hi[d]) return false;
    return true;
  };

  auto octet_may_merge = [&](std::span<const std::size_t> octet) {
    std::array<CellStatus, 8> sts;
    for (std::size_t c = 0; c < 8; ++c) sts[c] = status[octet[c]];
    if (!coarsen_admissible(sts)) return false;
    return !hooks.coarsen_filter || hooks.coarsen_filter(octet);
  };

  bool found = true;
  while (found) {
    if (res.iterations++ >= max_iters)
      throw NumericalError("transform_to_hav: iteration bound exceeded");
    found = false;

    const OctreeMesh& cur = res.mesh;
    RefinementFlags flags{std::vector<int>(cur.size(), 0)};
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const int level = cur.leaf(i).level;
      const auto bb = leaf_bounds(cur, i);
      const bool near = bbox_overlap(bb);  // subdomain-style pre-filter
      const bool overlaps = near && cuboids_intersect(cell_obb(cur, i), hav.box);
      const bool in_band = bb.second.z >= hav_lo.z && bb.first.z <= hav_hi.z;
      if (overlaps) {
        if (level < max_level) {
          flags.action[i] = 1;
          found = true;
        }
      } else if (in_band && level < search_min_level) {
        flags.action[i] = 1;
        found = true;
      } else {
        const int floor_level = in_band ? search_min_level : cur.min_level();
        if (level > floor_level) flags.action[i] = -1;
      }
    }

    TransformResult tr = refine_and_coarsen(res.mesh, flags, octet_may_merge);
    status = project_status(status, tr.origins);
    if (hooks.on_transform) hooks.on_transform(res.mesh, tr.mesh, tr.origins);
    res.mesh = std::move(tr.mesh);

    res.mesh = enforce_2to1_balance(
        res.mesh, [&](const OctreeMesh& before, const TransformResult& sweep) {
          status = project_status(status, sweep.origins);
          if (hooks.on_transform) hooks.on_transform(before, sweep.mesh, sweep.origins);
        });

    if (hooks.on_repartition) hooks.on_repartition(res.mesh);
  }

  for (std::size_t i = 0; i < res.mesh.size(); ++i) {
    if (res.mesh.leaf(i).level != max_level) continue;
    const auto bb = leaf_bounds(res.mesh, i);
    if (!bbox_overlap(bb)) continue;
    if (cuboids_intersect(cell_obb(res.mesh, i), hav.box)) {
      res.activated.push_back(i);
      if (!status[i].active) res.newly_activated.push_back(i);
    }
  }
  activate_cells(status, res.activated);
  return res;
}

}  // namespace growfem
