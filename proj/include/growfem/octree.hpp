#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "growfem/core.hpp"
#include "growfem/geometry_map.hpp"

namespace growfem {

/// Deepest admissible refinement level. Three interleaved coordinates of
/// MAX_LEVEL bits fit a 64-bit Morton value with headroom.
inline constexpr int MAX_LEVEL = 19;

inline constexpr std::int64_t root_extent() { return std::int64_t{1} << MAX_LEVEL; }

/// One octant of the single-root linear octree. The anchor is the lexicographic
/// minimum corner in finest-level quanta; components are multiples of the
/// octant extent 2^(MAX_LEVEL - level).
struct OctantKey {
  int level = 0;
  IVec3 anchor;

  std::int64_t extent() const { return std::int64_t{1} << (MAX_LEVEL - level); }
  bool operator==(const OctantKey& o) const = default;
};

inline bool is_valid_key(const OctantKey& k) {
  if (k.level < 0 || k.level > MAX_LEVEL) return false;
  const std::int64_t ext = k.extent();
  for (int d = 0; d < 3; ++d) {
    if (k.anchor[d] < 0 || k.anchor[d] + ext > root_extent()) return false;
    if (k.anchor[d] % ext != 0) return false;
  }
  return true;
}

namespace detail {

inline std::uint64_t interleave_bits(std::uint64_t x, std::uint64_t y, std::uint64_t z, int bits) {
  std::uint64_t out = 0;
  for (int b = 0; b < bits; ++b) {
    out |= ((x >> b) & 1u) << (3 * b);
    out |= ((y >> b) & 1u) << (3 * b + 1);
    out |= ((z >> b) & 1u) << (3 * b + 2);
  }
  return out;
}

}  // namespace detail

/// Morton index of an octant within its own level: one octal digit per level,
/// most significant level first, with child index c = x + 2y + 4z.
inline std::uint64_t morton_encode(const OctantKey& key) {
  if (!is_valid_key(key))
    throw InvalidArgument("morton_encode: misaligned or out-of-root octant anchor");
  const int shift = MAX_LEVEL - key.level;
  return detail::interleave_bits(static_cast<std::uint64_t>(key.anchor.x) >> shift,
                                 static_cast<std::uint64_t>(key.anchor.y) >> shift,
                                 static_cast<std::uint64_t>(key.anchor.z) >> shift, key.level);
}

/// Morton index of the anchor at the finest level. Strictly increasing along
/// the depth-first leaf traversal for any set of octants with disjoint
/// interiors, so it is the sort key of the linear octree.
inline std::uint64_t dfs_key(const OctantKey& key) {
  return detail::interleave_bits(static_cast<std::uint64_t>(key.anchor.x),
                                 static_cast<std::uint64_t>(key.anchor.y),
                                 static_cast<std::uint64_t>(key.anchor.z), MAX_LEVEL);
}

/// Number of finest-level voxels covered by one octant at `level`.
inline std::uint64_t dfs_span(int level) { return std::uint64_t{1} << (3 * (MAX_LEVEL - level)); }

inline OctantKey child_of(const OctantKey& parent, int child_index) {
  const std::int64_t half = parent.extent() / 2;
  return OctantKey{parent.level + 1,
                   {parent.anchor.x + ((child_index >> 0) & 1) * half,
                    parent.anchor.y + ((child_index >> 1) & 1) * half,
                    parent.anchor.z + ((child_index >> 2) & 1) * half}};
}

inline OctantKey parent_of(const OctantKey& k) {
  const std::int64_t ext2 = k.extent() * 2;
  return OctantKey{k.level - 1, {(k.anchor.x / ext2) * ext2, (k.anchor.y / ext2) * ext2,
                                 (k.anchor.z / ext2) * ext2}};
}

/// Per-leaf action: -1 coarsen, 0 keep, +1 refine.
struct RefinementFlags {
  std::vector<int> action;
};

/// Provenance of a leaf of the transformed mesh relative to the input mesh.
struct LeafOrigin {
  enum class Kind { unchanged, refined, coarsened };
  Kind kind = Kind::unchanged;
  /// unchanged: old index of the same leaf. refined: old index of the parent.
  /// coarsened: old index of the first of the 8 merged siblings.
  std::size_t old_index = 0;
  int child_index = 0;  // refined only: which child of the parent this is
};

class OctreeMesh;
struct TransformResult;

/// Linear single-root octree: the leaves, sorted ascending by dfs_key, tile
/// the root box exactly. Geometry is attached through a smooth map from the
/// unit reference cube.
class OctreeMesh {
 public:
  OctreeMesh() : leaves_{OctantKey{}}, keys_{0} {}

  OctreeMesh(std::vector<OctantKey> leaves, int min_level, int max_level,
             GeometryMap map = GeometryMap())
      : leaves_(std::move(leaves)), min_level_(min_level), max_level_(max_level),
        map_(std::move(map)) {
    if (min_level_ < 0 || max_level_ > MAX_LEVEL || min_level_ > max_level_)
      throw InvalidArgument("OctreeMesh: invalid level bounds");
    sort_and_check();
  }

  static OctreeMesh root(int min_level = 0, int max_level = MAX_LEVEL,
                         GeometryMap map = GeometryMap()) {
    return OctreeMesh({OctantKey{}}, min_level, max_level, std::move(map));
  }

  /// Uniformly refined mesh at the given level.
  static OctreeMesh uniform(int level, int min_level, int max_level,
                            GeometryMap map = GeometryMap()) {
    if (level < min_level || level > max_level)
      throw InvalidArgument("OctreeMesh::uniform: level out of bounds");
    std::vector<OctantKey> leaves;
    const std::int64_t n = std::int64_t{1} << level;
    const std::int64_t ext = root_extent() / n;
    leaves.reserve(static_cast<std::size_t>(n * n * n));
    for (std::int64_t x = 0; x < n; ++x)
      for (std::int64_t y = 0; y < n; ++y)
        for (std::int64_t z = 0; z < n; ++z)
          leaves.push_back(OctantKey{level, {x * ext, y * ext, z * ext}});
    return OctreeMesh(std::move(leaves), min_level, max_level, std::move(map));
  }

  std::size_t size() const { return leaves_.size(); }
  const std::vector<OctantKey>& leaves() const { return leaves_; }
  const OctantKey& leaf(std::size_t i) const { return leaves_[i]; }
  int min_level() const { return min_level_; }
  int max_level() const { return max_level_; }
  const GeometryMap& geometry_map() const { return map_; }
  const std::vector<std::uint64_t>& sort_keys() const { return keys_; }

  /// Index of the leaf whose octant contains the given finest-level voxel.
  std::size_t leaf_containing_voxel(const IVec3& voxel) const {
    for (int d = 0; d < 3; ++d)
      if (voxel[d] < 0 || voxel[d] >= root_extent())
        throw InvalidArgument("leaf_containing_voxel: voxel outside root box");
    const std::uint64_t m = detail::interleave_bits(static_cast<std::uint64_t>(voxel.x),
                                                    static_cast<std::uint64_t>(voxel.y),
                                                    static_cast<std::uint64_t>(voxel.z), MAX_LEVEL);
    auto it = std::upper_bound(keys_.begin(), keys_.end(), m);
    const std::size_t i = static_cast<std::size_t>(it - keys_.begin()) - 1;
    return i;
  }

  std::size_t find_leaf(const OctantKey& k) const {
    const std::uint64_t m = dfs_key(k);
    auto it = std::lower_bound(keys_.begin(), keys_.end(), m);
    if (it == keys_.end() || *it != m) throw InvalidArgument("find_leaf: leaf not in mesh");
    const std::size_t i = static_cast<std::size_t>(it - keys_.begin());
    if (!(leaves_[i] == k)) throw InvalidArgument("find_leaf: leaf not in mesh");
    return i;
  }

  bool contains_leaf(const OctantKey& k) const {
    const std::uint64_t m = dfs_key(k);
    auto it = std::lower_bound(keys_.begin(), keys_.end(), m);
    return it != keys_.end() && *it == m &&
           leaves_[static_cast<std::size_t>(it - keys_.begin())] == k;
  }

  /// All leaves sharing at least a vertex with the given leaf.
  std::vector<std::size_t> adjacent_leaves(std::size_t leaf_index) const {
    if (leaf_index >= leaves_.size()) throw InvalidArgument("adjacent_leaves: bad leaf index");
    const OctantKey& L = leaves_[leaf_index];
    const std::int64_t ext = L.extent();
    std::vector<std::size_t> out;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          OctantKey nb{L.level,
                       {L.anchor.x + dx * ext, L.anchor.y + dy * ext, L.anchor.z + dz * ext}};
          bool inside = true;
          for (int d = 0; d < 3; ++d)
            if (nb.anchor[d] < 0 || nb.anchor[d] + ext > root_extent()) inside = false;
          if (!inside) continue;
          collect_leaves_in(nb, out);
        }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    // Same-size neighbor boxes can pick up leaves that only touch the box,
    // not L itself; keep the genuinely touching ones.
    std::erase_if(out, [&](std::size_t i) { return i == leaf_index || !boxes_touch(L, leaves_[i]); });
    return out;
  }

  /// Physical corners of a leaf box, local-node order (x fastest, then y, z).
  std::array<Vec3, 8> leaf_box(std::size_t leaf_index) const {
    const OctantKey& k = leaves_.at(leaf_index);
    const double inv = 1.0 / static_cast<double>(root_extent());
    std::array<Vec3, 8> out;
    for (int c = 0; c < 8; ++c) {
      Vec3 ref{static_cast<double>(k.anchor.x + ((c >> 0) & 1) * k.extent()) * inv,
               static_cast<double>(k.anchor.y + ((c >> 1) & 1) * k.extent()) * inv,
               static_cast<double>(k.anchor.z + ((c >> 2) & 1) * k.extent()) * inv};
      out[static_cast<std::size_t>(c)] = map_(ref);
    }
    return out;
  }

  /// Total volume in finest-level voxel units; equals root_extent()^3 for a
  /// valid tiling.
  std::uint64_t voxel_volume() const {
    std::uint64_t v = 0;
    for (const auto& l : leaves_) v += dfs_span(l.level);
    return v;
  }

  /// One leaf per line: "level morton x y z".
  std::string dump() const {
    std::ostringstream os;
    for (const auto& l : leaves_)
      os << l.level << ' ' << morton_encode(l) << ' ' << l.anchor.x << ' ' << l.anchor.y << ' '
         << l.anchor.z << '\n';
    return os.str();
  }

 private:
  friend TransformResult refine_and_coarsen(
      const OctreeMesh&, const RefinementFlags&,
      const std::function<bool(std::span<const std::size_t>)>&);

  void sort_and_check() {
    keys_.resize(leaves_.size());
    std::vector<std::size_t> order(leaves_.size());
    for (std::size_t i = 0; i < leaves_.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dfs_key(leaves_[a]) < dfs_key(leaves_[b]);
    });
    std::vector<OctantKey> sorted(leaves_.size());
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
      sorted[i] = leaves_[order[i]];
      if (!is_valid_key(sorted[i])) throw InvalidArgument("OctreeMesh: invalid octant key");
      keys_[i] = dfs_key(sorted[i]);
      if (i > 0 && keys_[i] <= keys_[i - 1])
        throw InvalidArgument("OctreeMesh: leaves overlap (duplicate dfs keys)");
    }
    leaves_ = std::move(sorted);
    if (voxel_volume() != dfs_span(0)) throw InvalidArgument("OctreeMesh: leaves do not tile root");
  }

  void collect_leaves_in(const OctantKey& box, std::vector<std::size_t>& out) const {
    const std::uint64_t lo = dfs_key(box);
    const std::uint64_t hi = lo + dfs_span(box.level);
    auto it = std::lower_bound(keys_.begin(), keys_.end(), lo);
    std::size_t i = static_cast<std::size_t>(it - keys_.begin());
    if (i < keys_.size() && keys_[i] < hi) {
      for (; i < keys_.size() && keys_[i] < hi; ++i) out.push_back(i);
    } else if (i > 0) {
      // box lies inside a coarser leaf
      const std::size_t j = i - 1;
      if (keys_[j] + dfs_span(leaves_[j].level) > lo) out.push_back(j);
    }
  }

  static bool boxes_touch(const OctantKey& a, const OctantKey& b) {
    for (int d = 0; d < 3; ++d) {
      if (a.anchor[d] + a.extent() < b.anchor[d]) return false;
      if (b.anchor[d] + b.extent() < a.anchor[d]) return false;
    }
    return true;
  }

  std::vector<OctantKey> leaves_;
  std::vector<std::uint64_t> keys_;
  int min_level_ = 0;
  int max_level_ = MAX_LEVEL;
  GeometryMap map_;
};

struct TransformResult {
  OctreeMesh mesh;
  std::vector<LeafOrigin> origins;
  int clamped_flags = 0;
  int refined = 0;
  int coarsened = 0;  // number of merged octets
};

/// Applies one refine/coarsen sweep. Each +1 leaf is replaced by its 8
/// children; a sibling octet is merged only when all 8 siblings carry -1 and
/// the optional filter accepts the octet (partial octets are left unchanged).
/// Flags outside the level bounds are clamped and counted.
inline TransformResult refine_and_coarsen(
    const OctreeMesh& mesh, const RefinementFlags& flags,
    const std::function<bool(std::span<const std::size_t>)>& coarsen_filter = {}) {
  if (flags.action.size() != mesh.size())
    throw InvalidArgument("refine_and_coarsen: flag array length mismatch");

  TransformResult res;
  std::vector<OctantKey> out;
  out.reserve(mesh.size());
  res.origins.reserve(mesh.size());

  const auto& leaves = mesh.leaves();
  std::size_t i = 0;
  while (i < leaves.size()) {
    int a = flags.action[i];
    if (a > 0 && leaves[i].level >= mesh.max_level()) {
      a = 0;
      ++res.clamped_flags;
    }
    if (a < 0 && leaves[i].level <= mesh.min_level()) {
      a = 0;
      ++res.clamped_flags;
    }

    if (a < 0 && leaves[i].level > 0) {
      // Try to merge a full sibling octet starting here.
      const OctantKey parent = parent_of(leaves[i]);
      bool octet = leaves[i] == child_of(parent, 0) && i + 7 < leaves.size();
      std::array<std::size_t, 8> idx{};
      if (octet) {
        for (int c = 0; c < 8 && octet; ++c) {
          idx[static_cast<std::size_t>(c)] = i + static_cast<std::size_t>(c);
          int ac = flags.action[i + static_cast<std::size_t>(c)];
          if (!(leaves[i + static_cast<std::size_t>(c)] == child_of(parent, c)) || ac >= 0)
            octet = false;
        }
      }
      if (octet && coarsen_filter && !coarsen_filter(std::span<const std::size_t>(idx)))
        octet = false;
      if (octet) {
        out.push_back(parent);
        res.origins.push_back({LeafOrigin::Kind::coarsened, i, 0});
        ++res.coarsened;
        i += 8;
        continue;
      }
      a = 0;  // partial octet: silent no-op
    }

    if (a > 0) {
      for (int c = 0; c < 8; ++c) {
        out.push_back(child_of(leaves[i], c));
        res.origins.push_back({LeafOrigin::Kind::refined, i, c});
      }
      ++res.refined;
    } else {
      out.push_back(leaves[i]);
      res.origins.push_back({LeafOrigin::Kind::unchanged, i, 0});
    }
    ++i;
  }

  res.mesh = OctreeMesh(std::move(out), mesh.min_level(), mesh.max_level(), mesh.geometry_map());
  return res;
}

/// Refines until any two leaves sharing a vertex, edge, or face differ by at
/// most one level (full 2:1 balance). Only refinements are applied; each one
/// is forced by an actual violation, so the result is the minimal balanced
/// refinement. The optional observer sees every intermediate sweep together
/// with the mesh it started from.
inline OctreeMesh enforce_2to1_balance(
    const OctreeMesh& mesh,
    const std::function<void(const OctreeMesh& before, const TransformResult&)>& on_sweep = {}) {
  OctreeMesh cur = mesh;
  while (true) {
    RefinementFlags flags{std::vector<int>(cur.size(), 0)};
    bool any = false;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const int li = cur.leaf(i).level;
      for (std::size_t j : cur.adjacent_leaves(i)) {
        if (cur.leaf(j).level > li + 1) {
          flags.action[i] = 1;
          any = true;
          break;
        }
      }
    }
    if (!any) return cur;
    TransformResult r = refine_and_coarsen(cur, flags);
    if (on_sweep) on_sweep(cur, r);
    cur = std::move(r.mesh);
  }
}

inline bool is_2to1_balanced(const OctreeMesh& mesh) {
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const int li = mesh.leaf(i).level;
    for (std::size_t j : mesh.adjacent_leaves(i))
      if (std::abs(mesh.leaf(j).level - li) > 1) return false;
  }
  return true;
}

}  // namespace growfem
