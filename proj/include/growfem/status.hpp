#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "growfem/octree.hpp"

namespace growfem {

/// Classification of an inactive cell, used only to pick the heat-loss
/// boundary condition at active/inactive interfaces.
enum class InactiveTag : std::uint8_t { gas = 0, powder = 1 };

/// Per-cell element-birth state. The active set defines the computational
/// domain and only ever grows during a printing run.
struct CellStatus {
  bool active = false;
  InactiveTag tag = InactiveTag::gas;

  bool operator==(const CellStatus& o) const {
    if (active != o.active) return false;
    return active || tag == o.tag;
  }
};

using StatusField = std::vector<CellStatus>;

inline StatusField make_status(std::size_t n, bool active = false,
                               InactiveTag tag = InactiveTag::gas) {
  return StatusField(n, CellStatus{active, tag});
}

/// Marks the listed leaves active. Never deactivates; repeated activation is
/// idempotent.
inline void activate_cells(StatusField& status, std::span<const std::size_t> activated) {
  for (std::size_t i : activated) {
    if (i >= status.size()) throw InvalidArgument("activate_cells: unknown leaf index");
    status[i].active = true;
  }
}

/// Status of the 8 children of a refined cell: the parent's, verbatim.
inline std::array<CellStatus, 8> inherit_on_refine(const CellStatus& parent) {
  std::array<CellStatus, 8> out;
  out.fill(parent);
  return out;
}

/// A sibling octet may merge only when all 8 statuses agree, tag included;
/// anything else would perturb the computational domain.
inline bool coarsen_admissible(std::span<const CellStatus> siblings) {
  if (siblings.size() != 8) throw InvalidArgument("coarsen_admissible: expected 8 statuses");
  for (int c = 1; c < 8; ++c)
    if (!(siblings[static_cast<std::size_t>(c)] == siblings[0])) return false;
  return true;
}

/// Carries a status field across a mesh transformation using the leaf
/// provenance: refined children inherit, merged octets keep the (uniform)
/// sibling status, unchanged leaves copy.
inline StatusField project_status(const StatusField& old_status,
                                  const std::vector<LeafOrigin>& origins) {
  StatusField out(origins.size());
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const LeafOrigin& o = origins[i];
    switch (o.kind) {
      case LeafOrigin::Kind::unchanged:
      case LeafOrigin::Kind::refined:
        out[i] = old_status[o.old_index];
        break;
      case LeafOrigin::Kind::coarsened:
        out[i] = old_status[o.old_index];
        break;
    }
  }
  return out;
}

/// Indices of the active leaves, in Morton order.
inline std::vector<std::size_t> active_submesh(const OctreeMesh& mesh, const StatusField& status) {
  if (status.size() != mesh.size())
    throw InvalidArgument("active_submesh: status length mismatch");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < status.size(); ++i)
    if (status[i].active) out.push_back(i);
  return out;
}

/// Active-region volume in finest-level voxel units.
inline std::uint64_t active_voxel_volume(const OctreeMesh& mesh, const StatusField& status) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < status.size(); ++i)
    if (status[i].active) v += dfs_span(mesh.leaf(i).level);
  return v;
}

}  // namespace growfem
