#pragma once

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "growfem/fe_space.hpp"
#include "growfem/octree.hpp"
#include "growfem/status.hpp"

namespace growfem {

/// Writes a legacy ASCII unstructured-grid file with hexahedral cells, the
/// nodal "temperature" point field and the "status" / "level" cell fields.
/// Inactive cells are included (status 0) unless suppressed; nodes outside
/// the active region carry a zero temperature.
inline void write_vtk(const OctreeMesh& mesh, const StatusField& status, const DofMap& dofmap,
                      std::span<const double> temperature, const std::string& path,
                      bool include_inactive = true) {
  if (status.size() != mesh.size()) throw InvalidArgument("write_vtk: status length mismatch");
  std::ofstream out(path);
  if (!out) throw Error("write_vtk: cannot open " + path);

  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < mesh.size(); ++i)
    if (include_inactive || status[i].active) cells.push_back(i);

  // collect unique corner nodes
  std::unordered_map<NodeKey, std::size_t> point_id;
  std::vector<NodeKey> points;
  std::vector<std::array<std::size_t, 8>> connectivity;
  connectivity.reserve(cells.size());
  for (std::size_t leaf : cells) {
    const auto keys = detail::cell_corner_keys(mesh.leaf(leaf));
    std::array<std::size_t, 8> conn{};
    for (int c = 0; c < 8; ++c) {
      auto [it, fresh] = point_id.try_emplace(keys[static_cast<std::size_t>(c)], points.size());
      if (fresh) points.push_back(keys[static_cast<std::size_t>(c)]);
      conn[static_cast<std::size_t>(c)] = it->second;
    }
    connectivity.push_back(conn);
  }

  out << "# vtk DataFile Version 3.0\n";
  out << "growing-domain thermal state\n";
  out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << points.size() << " double\n";
  const double inv = 1.0 / static_cast<double>(root_extent());
  for (const NodeKey nk : points) {
    const IVec3 p = node_coords(nk);
    const Vec3 x = mesh.geometry_map()(Vec3{static_cast<double>(p.x) * inv,
                                            static_cast<double>(p.y) * inv,
                                            static_cast<double>(p.z) * inv});
    out << x.x << ' ' << x.y << ' ' << x.z << '\n';
  }

  out << "CELLS " << connectivity.size() << ' ' << connectivity.size() * 9 << '\n';
  // VTK hexahedron ordering: bottom quad counter-clockwise, then top quad
  static constexpr int kVtkOrder[8] = {0, 1, 3, 2, 4, 5, 7, 6};
  for (const auto& conn : connectivity) {
    out << 8;
    for (int c : kVtkOrder) out << ' ' << conn[static_cast<std::size_t>(c)];
    out << '\n';
  }
  out << "CELL_TYPES " << connectivity.size() << '\n';
  for (std::size_t i = 0; i < connectivity.size(); ++i) out << "12\n";

  out << "POINT_DATA " << points.size() << "\nSCALARS temperature double 1\nLOOKUP_TABLE default\n";
  for (const NodeKey nk : points) {
    const double v = dofmap.is_active_node(nk) ? dofmap.node_value(nk, temperature) : 0.0;
    out << v << '\n';
  }

  out << "CELL_DATA " << connectivity.size() << "\nSCALARS status int 1\nLOOKUP_TABLE default\n";
  for (std::size_t leaf : cells) out << (status[leaf].active ? 1 : 0) << '\n';
  out << "SCALARS level int 1\nLOOKUP_TABLE default\n";
  for (std::size_t leaf : cells) out << mesh.leaf(leaf).level << '\n';
  if (!out) throw Error("write_vtk: write failed for " + path);
}

}  // namespace growfem
