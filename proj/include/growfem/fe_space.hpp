#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "growfem/octree.hpp"
#include "growfem/partition.hpp"
#include "growfem/status.hpp"

namespace growfem {

/// Lattice node in finest-level quanta, packed into 21-bit fields.
using NodeKey = std::uint64_t;

inline NodeKey node_key(const IVec3& p) {
  return (static_cast<std::uint64_t>(p.x) << 42) | (static_cast<std::uint64_t>(p.y) << 21) |
         static_cast<std::uint64_t>(p.z);
}

inline IVec3 node_coords(NodeKey k) {
  const std::int64_t mask = (std::int64_t{1} << 21) - 1;
  return {static_cast<std::int64_t>(k >> 42) & mask, static_cast<std::int64_t>(k >> 21) & mask,
          static_cast<std::int64_t>(k) & mask};
}

/// One term of a constrained-node expansion in terms of real DOFs.
struct DofTerm {
  std::int64_t dof;
  double coeff;
};

/// Global trilinear DOF numbering over the active cells of a 2:1-balanced
/// octree. Hanging nodes carry no global id; each cell corner stores its
/// expansion in real DOFs (a single unit term for regular nodes). Ids are
/// assigned in ascending (Morton cell, local corner) order, which makes the
/// numbering independent of any partition.
class DofMap {
 public:
  struct CellEntry {
    std::size_t leaf_index;
    std::array<std::vector<DofTerm>, 8> corner_dofs;
    std::array<NodeKey, 8> corner_keys;
  };

  std::int64_t num_dofs() const { return num_dofs_; }
  const std::vector<CellEntry>& cells() const { return cells_; }
  std::uint64_t active_volume() const { return active_volume_; }
  const std::vector<NodeKey>& dof_nodes() const { return dof_nodes_; }

  std::optional<std::int64_t> dof_of_node(NodeKey k) const {
    auto it = node_to_dof_.find(k);
    if (it == node_to_dof_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<std::pair<NodeKey, double>>* hanging_expansion(NodeKey k) const {
    auto it = hanging_.find(k);
    if (it == hanging_.end()) return nullptr;
    return &it->second;
  }

  bool is_active_node(NodeKey k) const {
    return node_to_dof_.count(k) > 0 || hanging_.count(k) > 0;
  }

  /// Leaf index of the Morton-first active cell that touches the DOF; its
  /// partition owner is the DOF owner.
  std::size_t first_cell_of_dof(std::int64_t dof) const {
    return dof_first_cell_[static_cast<std::size_t>(dof)];
  }

  /// Contiguous [begin, end) DOF ranges per part; contiguity follows from the
  /// (Morton cell, corner) numbering over contiguous leaf ranges.
  std::vector<std::pair<std::int64_t, std::int64_t>> dof_ranges(const Partition& part) const {
    std::vector<std::pair<std::int64_t, std::int64_t>> ranges(
        static_cast<std::size_t>(part.num_parts));
    std::vector<std::int64_t> counts(static_cast<std::size_t>(part.num_parts), 0);
    for (std::int64_t d = 0; d < num_dofs_; ++d)
      ++counts[static_cast<std::size_t>(part.owner_of(dof_first_cell_[static_cast<std::size_t>(d)]))];
    std::int64_t acc = 0;
    for (int p = 0; p < part.num_parts; ++p) {
      ranges[static_cast<std::size_t>(p)] = {acc, acc + counts[static_cast<std::size_t>(p)]};
      acc += counts[static_cast<std::size_t>(p)];
    }
    // the numbering visits parts in leaf order, so the ranges are contiguous
    for (std::int64_t d = 0; d + 1 < num_dofs_; ++d) {
      if (part.owner_of(dof_first_cell_[static_cast<std::size_t>(d)]) >
          part.owner_of(dof_first_cell_[static_cast<std::size_t>(d) + 1]))
        throw Error("DofMap: non-contiguous ownership");
    }
    return ranges;
  }

  /// Physical position of a DOF node.
  Vec3 dof_position(const OctreeMesh& mesh, std::int64_t dof) const {
    const IVec3 p = node_coords(dof_nodes_[static_cast<std::size_t>(dof)]);
    const double inv = 1.0 / static_cast<double>(root_extent());
    return mesh.geometry_map()(Vec3{static_cast<double>(p.x) * inv,
                                    static_cast<double>(p.y) * inv,
                                    static_cast<double>(p.z) * inv});
  }

  /// Nodal value of any active node (real or hanging) for the given field.
  double node_value(NodeKey k, std::span<const double> values) const {
    if (auto d = dof_of_node(k)) return values[static_cast<std::size_t>(*d)];
    const auto* exp = hanging_expansion(k);
    if (!exp) throw InvalidArgument("node_value: node not in active mesh");
    double v = 0.0;
    for (const auto& [mk, c] : *exp) {
      auto d = dof_of_node(mk);
      if (!d) throw Error("node_value: hanging master is not a real DOF");
      v += c * values[static_cast<std::size_t>(*d)];
    }
    return v;
  }

  std::optional<std::size_t> active_cell_index_of_leaf(std::size_t leaf) const {
    if (leaf >= leaf_to_cell_.size() || leaf_to_cell_[leaf] == npos) return std::nullopt;
    return leaf_to_cell_[leaf];
  }

  friend DofMap build_dof_map(const OctreeMesh& mesh, const StatusField& status);

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::vector<CellEntry> cells_;
  std::unordered_map<NodeKey, std::int64_t> node_to_dof_;
  std::unordered_map<NodeKey, std::vector<std::pair<NodeKey, double>>> hanging_;
  std::vector<NodeKey> dof_nodes_;
  std::vector<std::size_t> dof_first_cell_;
  std::vector<std::size_t> leaf_to_cell_;
  std::int64_t num_dofs_ = 0;
  std::uint64_t active_volume_ = 0;
};

namespace detail {

inline std::array<NodeKey, 8> cell_corner_keys(const OctantKey& k) {
  std::array<NodeKey, 8> out;
  const std::int64_t e = k.extent();
  for (int c = 0; c < 8; ++c)
    out[static_cast<std::size_t>(c)] = node_key(
        {k.anchor.x + ((c >> 0) & 1) * e, k.anchor.y + ((c >> 1) & 1) * e,
         k.anchor.z + ((c >> 2) & 1) * e});
  return out;
}

/// Active leaves whose closed box contains the node: lookup through the up to
/// eight voxels incident to the node.
inline void active_cells_at_node(const OctreeMesh& mesh, const StatusField& status, const IVec3& p,
                                 std::vector<std::size_t>& out) {
  out.clear();
  for (int dx = 0; dx <= 1; ++dx)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dz = 0; dz <= 1; ++dz) {
        const IVec3 vox{p.x - dx, p.y - dy, p.z - dz};
        if (vox.x < 0 || vox.y < 0 || vox.z < 0 || vox.x >= root_extent() ||
            vox.y >= root_extent() || vox.z >= root_extent())
          continue;
        const std::size_t leaf = mesh.leaf_containing_voxel(vox);
        if (status[leaf].active &&
            std::find(out.begin(), out.end(), leaf) == out.end())
          out.push_back(leaf);
      }
}

}  // namespace detail

/// Builds the DOF map. Hanging nodes (mid-edge or face-centre of a coarser
/// active cell) are excluded from the numbering and constrained to the edge
/// endpoints (1/2 each) or the face corners (1/4 each); chains across levels
/// are resolved so every master is a real DOF.
inline DofMap build_dof_map(const OctreeMesh& mesh, const StatusField& status) {
  if (status.size() != mesh.size()) throw InvalidArgument("build_dof_map: status length mismatch");

  DofMap map;
  map.leaf_to_cell_.assign(mesh.size(), DofMap::npos);
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    if (!status[i].active) continue;
    map.leaf_to_cell_[i] = map.cells_.size();
    DofMap::CellEntry e;
    e.leaf_index = i;
    e.corner_keys = detail::cell_corner_keys(mesh.leaf(i));
    map.cells_.push_back(std::move(e));
    map.active_volume_ += dfs_span(mesh.leaf(i).level);
  }

  // Raw one-level constraints of hanging nodes.
  std::unordered_map<NodeKey, std::vector<std::pair<NodeKey, double>>> raw;
  std::vector<std::size_t> touching;
  for (const auto& cell : map.cells_) {
    for (const NodeKey nk : cell.corner_keys) {
      if (raw.count(nk)) continue;
      const IVec3 p = node_coords(nk);
      detail::active_cells_at_node(mesh, status, p, touching);
      for (const std::size_t leaf : touching) {
        const OctantKey& K = mesh.leaf(leaf);
        const std::int64_t ext = K.extent();
        const std::int64_t half = ext / 2;
        std::array<std::int64_t, 3> off{p.x - K.anchor.x, p.y - K.anchor.y, p.z - K.anchor.z};
        int mids = 0;
        bool corner = true;
        for (int d = 0; d < 3; ++d) {
          const std::int64_t o = off[static_cast<std::size_t>(d)];
          if (o == 0 || o == ext) continue;
          if (o == half)
            ++mids, corner = false;
          else
            throw InvalidArgument("build_dof_map: mesh is not 2:1 balanced");
        }
        if (corner) continue;
        if (mids != 1 && mids != 2)
          throw InvalidArgument("build_dof_map: mesh is not 2:1 balanced");
        // masters: corners of K spanning the mid directions
        std::vector<std::pair<NodeKey, double>> masters;
        const double coeff = mids == 1 ? 0.5 : 0.25;
        for (int m = 0; m < (1 << mids); ++m) {
          IVec3 q = p;
          int bit = 0;
          for (int d = 0; d < 3; ++d) {
            if (off[static_cast<std::size_t>(d)] != half) continue;
            q[d] = K.anchor[d] + (((m >> bit) & 1) ? ext : 0);
            ++bit;
          }
          masters.push_back({node_key(q), coeff});
        }
        raw[nk] = std::move(masters);
        break;
      }
    }
  }

  // Resolve constraint chains: every master becomes a non-hanging node.
  std::unordered_map<NodeKey, std::vector<std::pair<NodeKey, double>>> resolved;
  auto expand = [&](auto&& self, NodeKey k) -> std::vector<std::pair<NodeKey, double>> {
    auto rit = raw.find(k);
    if (rit == raw.end()) return {{k, 1.0}};
    auto mit = resolved.find(k);
    if (mit != resolved.end()) return mit->second;
    std::unordered_map<NodeKey, double> acc;
    for (const auto& [m, c] : rit->second)
      for (const auto& [mm, cc] : self(self, m)) acc[mm] += c * cc;
    std::vector<std::pair<NodeKey, double>> out(acc.begin(), acc.end());
    std::sort(out.begin(), out.end());
    resolved[k] = out;
    return out;
  };
  for (const auto& [k, _] : raw) expand(expand, k);
  map.hanging_ = std::move(resolved);

  // Number the real DOFs in (Morton cell, corner) order.
  for (std::size_t c = 0; c < map.cells_.size(); ++c) {
    for (const NodeKey nk : map.cells_[c].corner_keys) {
      if (map.hanging_.count(nk) || map.node_to_dof_.count(nk)) continue;
      map.node_to_dof_[nk] = map.num_dofs_++;
      map.dof_nodes_.push_back(nk);
      map.dof_first_cell_.push_back(map.cells_[c].leaf_index);
    }
  }

  // Per-corner expansions in terms of DOF ids.
  for (auto& cell : map.cells_) {
    for (int c = 0; c < 8; ++c) {
      const NodeKey nk = cell.corner_keys[static_cast<std::size_t>(c)];
      auto& terms = cell.corner_dofs[static_cast<std::size_t>(c)];
      if (auto d = map.dof_of_node(nk)) {
        terms.push_back({*d, 1.0});
        continue;
      }
      for (const auto& [m, co] : map.hanging_.at(nk)) {
        auto d = map.dof_of_node(m);
        if (!d) throw Error("build_dof_map: unresolved hanging master");
        terms.push_back({*d, co});
      }
    }
  }
  return map;
}

/// Nodal temperature (or any scalar) field over a DofMap's real DOFs.
struct FEFunction {
  std::vector<double> values;
};

/// Carries DOF values into an extended active region on the same mesh:
/// surviving nodes keep their values, newly activated DOFs start at
/// init_value. Shrinking active regions are rejected.
inline std::vector<double> increment(const DofMap& old_map, std::span<const double> old_values,
                                     const DofMap& new_map, double init_value) {
  if (old_values.size() != static_cast<std::size_t>(old_map.num_dofs()))
    throw InvalidArgument("increment: value length mismatch");
  if (new_map.active_volume() < old_map.active_volume())
    throw InvalidArgument("increment: active region shrank");
  std::vector<double> out(static_cast<std::size_t>(new_map.num_dofs()), init_value);
  for (std::int64_t d = 0; d < new_map.num_dofs(); ++d) {
    const NodeKey nk = new_map.dof_nodes()[static_cast<std::size_t>(d)];
    if (auto old_dof = old_map.dof_of_node(nk))
      out[static_cast<std::size_t>(d)] = old_values[static_cast<std::size_t>(*old_dof)];
  }
  return out;
}

/// Transfers a field across a refine/coarsen transformation: values at
/// surviving nodes are injected, refined nodes take the Q1 interpolation of
/// the old field (exact for trilinear fields).
inline std::vector<double> project_on_transform(const OctreeMesh& old_mesh, const DofMap& old_map,
                                                std::span<const double> old_values,
                                                const OctreeMesh& new_mesh,
                                                const DofMap& new_map) {
  if (old_values.size() != static_cast<std::size_t>(old_map.num_dofs()))
    throw InvalidArgument("project_on_transform: value length mismatch");

  std::vector<double> out(static_cast<std::size_t>(new_map.num_dofs()), 0.0);
  for (std::int64_t d = 0; d < new_map.num_dofs(); ++d) {
    const NodeKey nk = new_map.dof_nodes()[static_cast<std::size_t>(d)];
    if (old_map.is_active_node(nk)) {
      out[static_cast<std::size_t>(d)] = old_map.node_value(nk, old_values);
      continue;
    }
    // New lattice position: interpolate inside the old active cell around it.
    const IVec3 p = node_coords(nk);
    std::optional<double> value;
    for (int dx = 0; dx <= 1 && !value; ++dx)
      for (int dy = 0; dy <= 1 && !value; ++dy)
        for (int dz = 0; dz <= 1 && !value; ++dz) {
          const IVec3 vox{p.x - dx, p.y - dy, p.z - dz};
          if (vox.x < 0 || vox.y < 0 || vox.z < 0 || vox.x >= root_extent() ||
              vox.y >= root_extent() || vox.z >= root_extent())
            continue;
          const std::size_t leaf = old_mesh.leaf_containing_voxel(vox);
          const auto cell_idx = old_map.active_cell_index_of_leaf(leaf);
          if (!cell_idx) continue;
          const auto& cell = old_map.cells()[*cell_idx];
          const OctantKey& K = old_mesh.leaf(leaf);
          const double inv = 1.0 / static_cast<double>(K.extent());
          const double xi = static_cast<double>(p.x - K.anchor.x) * inv;
          const double eta = static_cast<double>(p.y - K.anchor.y) * inv;
          const double zeta = static_cast<double>(p.z - K.anchor.z) * inv;
          double v = 0.0;
          for (int c = 0; c < 8; ++c) {
            const double shape = ((c & 1) ? xi : 1.0 - xi) * ((c & 2) ? eta : 1.0 - eta) *
                                 ((c & 4) ? zeta : 1.0 - zeta);
            if (shape == 0.0) continue;
            double nodal = 0.0;
            for (const DofTerm& t : cell.corner_dofs[static_cast<std::size_t>(c)])
              nodal += t.coeff * old_values[static_cast<std::size_t>(t.dof)];
            v += shape * nodal;
          }
          value = v;
        }
    if (!value)
      throw InvalidArgument("project_on_transform: node outside the old active region");
    out[static_cast<std::size_t>(d)] = *value;
  }
  return out;
}

/// Condensed local system: the cell's 8x8 matrix and load vector expressed on
/// the union of master DOFs, with hanging rows/columns distributed by the
/// constraint coefficients (a congruence transformation).
struct CondensedLocal {
  std::vector<std::int64_t> dofs;
  std::vector<double> matrix;  // row-major dofs.size()^2
  std::vector<double> rhs;
};

inline CondensedLocal apply_constraints(const DofMap::CellEntry& cell,
                                        const std::array<std::array<double, 8>, 8>& local_matrix,
                                        const std::array<double, 8>& local_rhs) {
  CondensedLocal out;
  std::unordered_map<std::int64_t, std::size_t> slot;
  for (const auto& corner : cell.corner_dofs)
    for (const DofTerm& t : corner)
      if (!slot.count(t.dof)) {
        slot[t.dof] = out.dofs.size();
        out.dofs.push_back(t.dof);
      }
  const std::size_t n = out.dofs.size();
  out.matrix.assign(n * n, 0.0);
  out.rhs.assign(n, 0.0);
  for (int i = 0; i < 8; ++i) {
    for (const DofTerm& ti : cell.corner_dofs[static_cast<std::size_t>(i)]) {
      const std::size_t si = slot[ti.dof];
      out.rhs[si] += ti.coeff * local_rhs[static_cast<std::size_t>(i)];
      for (int j = 0; j < 8; ++j)
        for (const DofTerm& tj : cell.corner_dofs[static_cast<std::size_t>(j)])
          out.matrix[si * n + slot[tj.dof]] +=
              ti.coeff * tj.coeff *
              local_matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

}  // namespace growfem
