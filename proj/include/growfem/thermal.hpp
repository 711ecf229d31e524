#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "growfem/collision.hpp"
#include "growfem/fe_space.hpp"
#include "growfem/material.hpp"
#include "growfem/solver.hpp"

namespace growfem {

/// Newton-cooling data of one heat-loss region: q = h (u - u_loss).
struct LossSpec {
  double h = 0.0;       // W/(mm^2 K)
  double u_loss = 0.0;  // deg C
};

/// The three loss regions: contact with the building platform (bottom faces
/// at z = 0), the interface against inactive powder cells, and the free
/// surface (domain boundary or inactive gas cells).
struct BoundaryConditions {
  LossSpec platform;
  LossSpec powder;
  LossSpec free_surface;
};

/// Volumetric heat input for one time step.
struct HeatSource {
  enum class Kind { none, uniform_hav, goldak };
  Kind kind = Kind::none;

  // uniform_hav: density = eta W / V_acd over the activated cells
  double density = 0.0;                  // W/mm^3
  std::vector<std::size_t> heated_cells; // sorted leaf indices (K_acd)

  // goldak: single-ellipsoid source moving from `start` along `direction`
  // (unit, horizontal) at the given speed
  double Q = 0.0;
  double speed = 0.0;
  double a = 0.0, b = 0.0, c = 0.0;
  Vec3 start{0, 0, 0};
  Vec3 direction{1, 0, 0};

  double goldak_at(const Vec3& p, double t) const;
};

/// Average volumetric density of a uniform heat input over the activated
/// volume: eta * W / V_acd.
inline double uniform_source_density(double eta, double power, double v_acd) {
  if (v_acd <= 0.0) throw InvalidArgument("uniform_source_density: empty activated volume");
  return eta * power / v_acd;
}

/// Moving single-ellipsoid (Goldak-derived) source density at (x, y, z) and
/// time t; the centre travels along the x axis at the given speed.
inline double goldak_source(double x, double y, double z, double t, double Q, double speed,
                            double a, double b, double c) {
  if (a <= 0 || b <= 0 || c <= 0) throw InvalidArgument("goldak_source: ellipsoid axes must be positive");
  const double front = 6.0 * std::sqrt(3.0) / (std::numbers::pi * std::sqrt(std::numbers::pi));
  const double dx = x - speed * t;
  return front * Q / (a * b * c) *
         std::exp(-3.0 * (dx * dx / (a * a) + y * y / (b * b) + z * z / (c * c)));
}

inline double HeatSource::goldak_at(const Vec3& p, double t) const {
  const Vec3 centre = start + direction * (speed * t);
  const Vec3 d = p - centre;
  const double along = dot(d, direction);
  const Vec3 perp = cross(Vec3{0, 0, 1}, direction);
  const double across = dot(d, perp);
  return goldak_source(along, across, d.z, 0.0, Q, speed, a, b, c);
}

namespace fem {

inline constexpr double kGaussOffset = 0.28867513459481287;  // 1/(2 sqrt 3)

/// Trilinear shape function of corner c at local (xi, eta, zeta) in [0,1]^3.
inline double shape(int c, double xi, double eta, double zeta) {
  return ((c & 1) ? xi : 1.0 - xi) * ((c & 2) ? eta : 1.0 - eta) * ((c & 4) ? zeta : 1.0 - zeta);
}

inline std::array<double, 3> shape_grad_local(int c, double xi, double eta, double zeta) {
  const double fx = (c & 1) ? xi : 1.0 - xi;
  const double fy = (c & 2) ? eta : 1.0 - eta;
  const double fz = (c & 4) ? zeta : 1.0 - zeta;
  const double dx = (c & 1) ? 1.0 : -1.0;
  const double dy = (c & 2) ? 1.0 : -1.0;
  const double dz = (c & 4) ? 1.0 : -1.0;
  return {dx * fy * fz, fx * dy * fz, fx * fy * dz};
}

inline Vec3 trilinear_point(const std::array<Vec3, 8>& corners, double xi, double eta,
                            double zeta) {
  Vec3 p{0, 0, 0};
  for (int c = 0; c < 8; ++c) p += corners[static_cast<std::size_t>(c)] * shape(c, xi, eta, zeta);
  return p;
}

struct JacobianData {
  double det = 0.0;
  std::array<std::array<double, 3>, 3> inv_t{};  // J^-T
};

inline JacobianData jacobian(const std::array<Vec3, 8>& corners, double xi, double eta,
                             double zeta) {
  double J[3][3] = {};
  for (int c = 0; c < 8; ++c) {
    const auto g = shape_grad_local(c, xi, eta, zeta);
    const Vec3& X = corners[static_cast<std::size_t>(c)];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) J[i][j] += X[i] * g[static_cast<std::size_t>(j)];
  }
  JacobianData out;
  out.det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
            J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
            J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
  if (out.det <= 0.0) throw NumericalError("jacobian: non-positive cell Jacobian");
  const double inv = 1.0 / out.det;
  double A[3][3];
  A[0][0] = (J[1][1] * J[2][2] - J[1][2] * J[2][1]) * inv;
  A[0][1] = (J[0][2] * J[2][1] - J[0][1] * J[2][2]) * inv;
  A[0][2] = (J[0][1] * J[1][2] - J[0][2] * J[1][1]) * inv;
  A[1][0] = (J[1][2] * J[2][0] - J[1][0] * J[2][2]) * inv;
  A[1][1] = (J[0][0] * J[2][2] - J[0][2] * J[2][0]) * inv;
  A[1][2] = (J[0][2] * J[1][0] - J[0][0] * J[1][2]) * inv;
  A[2][0] = (J[1][0] * J[2][1] - J[1][1] * J[2][0]) * inv;
  A[2][1] = (J[0][1] * J[2][0] - J[0][0] * J[2][1]) * inv;
  A[2][2] = (J[0][0] * J[1][1] - J[0][1] * J[1][0]) * inv;
  // store (J^-1)^T = A^T
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      out.inv_t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = A[j][i];
  return out;
}

}  // namespace fem

/// Physical volume of one cell by 2x2x2 Gauss quadrature (exact for affine
/// maps, consistent with the assembly for curved ones).
inline double cell_volume(const OctreeMesh& mesh, std::size_t leaf) {
  const auto corners = mesh.leaf_box(leaf);
  double v = 0.0;
  for (int gx = 0; gx < 2; ++gx)
    for (int gy = 0; gy < 2; ++gy)
      for (int gz = 0; gz < 2; ++gz) {
        const double xi = 0.5 + (gx ? 1 : -1) * fem::kGaussOffset;
        const double eta = 0.5 + (gy ? 1 : -1) * fem::kGaussOffset;
        const double zeta = 0.5 + (gz ? 1 : -1) * fem::kGaussOffset;
        v += fem::jacobian(corners, xi, eta, zeta).det / 8.0;
      }
  return v;
}

inline double active_volume_mm3(const OctreeMesh& mesh, std::span<const std::size_t> leaves) {
  double v = 0.0;
  for (std::size_t leaf : leaves) v += cell_volume(mesh, leaf);
  return v;
}

/// Inputs of one semi-implicit step: all coefficients frozen at the previous
/// temperature, sources and loss data evaluated at the new time.
struct StepInputs {
  const OctreeMesh& mesh;
  const StatusField& status;
  const DofMap& dofmap;
  const MaterialTable& material;
  const BoundaryConditions& bc;
  const HeatSource& source;
  std::span<const double> u_prev;
  double dt;
  double time_next;
};

/// Raw per-part output of local integration: lhs triplets and ordered rhs
/// contributions, rows possibly owned by other parts.
struct LocalAssembly {
  std::vector<Triplet> lhs;
  std::vector<std::pair<std::int64_t, double>> rhs;
  std::vector<Triplet> mass;  // C-weighted mass alone, for conservation checks
};

namespace detail {

enum class FaceRegion { interior, platform, powder, free_surface };

struct SubFace {
  FaceRegion region;
  // local sub-rectangle of the face in the cell's reference coordinates
  double u0, u1, v0, v1;
};

/// Classifies (a quarter of) a cell face by what lies on the other side.
inline FaceRegion classify_across(const OctreeMesh& mesh, const StatusField& status,
                                  const IVec3& probe_voxel, bool bottom) {
  for (int d = 0; d < 3; ++d)
    if (probe_voxel[d] < 0 || probe_voxel[d] >= root_extent())
      return bottom ? FaceRegion::platform : FaceRegion::free_surface;
  const std::size_t leaf = mesh.leaf_containing_voxel(probe_voxel);
  if (status[leaf].active) return FaceRegion::interior;
  return status[leaf].tag == InactiveTag::powder ? FaceRegion::powder : FaceRegion::free_surface;
}

/// Emits the loss sub-faces of one cell face (direction d, side s). With 2:1
/// balance the facing region is one equal-or-coarser cell or four finer ones,
/// so quarters are enough granularity.
inline void collect_subfaces(const OctreeMesh& mesh, const StatusField& status,
                             const OctantKey& cell, int d, int s, std::vector<SubFace>& out) {
  const std::int64_t ext = cell.extent();
  const std::int64_t half = ext / 2;
  const int du = (d + 1) % 3;
  const int dv = (d + 2) % 3;
  const bool bottom = (d == 2 && s == 0);

  const std::int64_t probe_d = s ? cell.anchor[d] + ext : cell.anchor[d] - 1;
  auto probe_at = [&](std::int64_t u_off, std::int64_t v_off) {
    IVec3 p;
    p[d] = probe_d;
    p[du] = cell.anchor[du] + u_off;
    p[dv] = cell.anchor[dv] + v_off;
    return p;
  };

  if (half == 0) {
    // finest-level cell: the facing cell cannot be finer
    const FaceRegion r = classify_across(mesh, status, probe_at(0, 0), bottom);
    if (r != FaceRegion::interior) out.push_back({r, 0, 1, 0, 1});
    return;
  }

  // Probe the four quarters; equal coarseness shows up as four equal answers
  // through the same facing leaf.
  for (int qu = 0; qu < 2; ++qu)
    for (int qv = 0; qv < 2; ++qv) {
      const FaceRegion r = classify_across(
          mesh, status, probe_at(qu ? half + half / 2 : half / 2, qv ? half + half / 2 : half / 2),
          bottom);
      if (r == FaceRegion::interior) continue;
      out.push_back({r, qu * 0.5, qu * 0.5 + 0.5, qv * 0.5, qv * 0.5 + 0.5});
    }
}

}  // namespace detail

/// Integrates the semi-implicit step over the active cells with indices in
/// [cell_begin, cell_end) of the DOF map's cell list: volume terms by 2x2x2
/// Gauss, loss faces by 2x2 Gauss per (sub)face, hanging constraints applied
/// cell-locally before emission. Triplets are emitted in cell order, so a
/// merge in part order reproduces the serial sum bit for bit.
inline LocalAssembly assemble_cells(const StepInputs& in, std::size_t cell_begin,
                                    std::size_t cell_end) {
  if (in.dt <= 0) throw InvalidArgument("assemble_cells: dt must be positive");
  if (in.u_prev.size() != static_cast<std::size_t>(in.dofmap.num_dofs()))
    throw InvalidArgument("assemble_cells: u_prev size mismatch");

  LocalAssembly out;
  std::vector<detail::SubFace> faces;

  for (std::size_t ci = cell_begin; ci < cell_end; ++ci) {
    const DofMap::CellEntry& cell = in.dofmap.cells()[ci];
    const OctantKey& key = in.mesh.leaf(cell.leaf_index);
    const auto corners = in.mesh.leaf_box(cell.leaf_index);

    // nodal temperatures of the previous step, hanging nodes expanded
    std::array<double, 8> u_local{};
    for (int c = 0; c < 8; ++c)
      for (const DofTerm& t : cell.corner_dofs[static_cast<std::size_t>(c)])
        u_local[static_cast<std::size_t>(c)] +=
            t.coeff * in.u_prev[static_cast<std::size_t>(t.dof)];

    const bool heated = in.source.kind == HeatSource::Kind::uniform_hav &&
                        std::binary_search(in.source.heated_cells.begin(),
                                           in.source.heated_cells.end(), cell.leaf_index);

    std::array<std::array<double, 8>, 8> lhs{};
    std::array<std::array<double, 8>, 8> mass{};
    std::array<double, 8> rhs{};

    for (int gx = 0; gx < 2; ++gx)
      for (int gy = 0; gy < 2; ++gy)
        for (int gz = 0; gz < 2; ++gz) {
          const double xi = 0.5 + (gx ? 1 : -1) * fem::kGaussOffset;
          const double eta = 0.5 + (gy ? 1 : -1) * fem::kGaussOffset;
          const double zeta = 0.5 + (gz ? 1 : -1) * fem::kGaussOffset;
          const auto jac = fem::jacobian(corners, xi, eta, zeta);
          const double w = jac.det / 8.0;

          double n[8];
          double gphys[8][3];
          double temp = 0.0;
          for (int c = 0; c < 8; ++c) {
            n[c] = fem::shape(c, xi, eta, zeta);
            const auto gl = fem::shape_grad_local(c, xi, eta, zeta);
            for (int i = 0; i < 3; ++i)
              gphys[c][i] = jac.inv_t[static_cast<std::size_t>(i)][0] * gl[0] +
                            jac.inv_t[static_cast<std::size_t>(i)][1] * gl[1] +
                            jac.inv_t[static_cast<std::size_t>(i)][2] * gl[2];
            temp += n[c] * u_local[static_cast<std::size_t>(c)];
          }
          const auto props = in.material.eval(temp);
          const double cap = props.rho * props.c;
          const double k = props.k;

          double f = 0.0;
          if (heated) {
            f = in.source.density;
          } else if (in.source.kind == HeatSource::Kind::goldak) {
            f = in.source.goldak_at(fem::trilinear_point(corners, xi, eta, zeta), in.time_next);
          }

          for (int i = 0; i < 8; ++i) {
            if (f != 0.0) rhs[static_cast<std::size_t>(i)] += f * n[i] * w;
            for (int j = 0; j < 8; ++j) {
              const double m = cap * n[i] * n[j] * w;
              const double s = k *
                               (gphys[i][0] * gphys[j][0] + gphys[i][1] * gphys[j][1] +
                                gphys[i][2] * gphys[j][2]) *
                               w;
              mass[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += m;
              lhs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += m / in.dt + s;
            }
          }
        }

    // Newton-cooling faces on the active-region boundary.
    for (int d = 0; d < 3; ++d)
      for (int s = 0; s < 2; ++s) {
        faces.clear();
        detail::collect_subfaces(in.mesh, in.status, key, d, s, faces);
        for (const auto& sf : faces) {
          const LossSpec& loss = sf.region == detail::FaceRegion::platform ? in.bc.platform
                                 : sf.region == detail::FaceRegion::powder ? in.bc.powder
                                                                           : in.bc.free_surface;
          if (loss.h == 0.0) continue;
          const int du = (d + 1) % 3;
          const int dv = (d + 2) % 3;
          for (int gu = 0; gu < 2; ++gu)
            for (int gv = 0; gv < 2; ++gv) {
              double loc[3];
              loc[d] = static_cast<double>(s);
              const double su = 0.5 * (sf.u0 + sf.u1) +
                                (gu ? 1 : -1) * fem::kGaussOffset * (sf.u1 - sf.u0);
              const double sv = 0.5 * (sf.v0 + sf.v1) +
                                (gv ? 1 : -1) * fem::kGaussOffset * (sf.v1 - sf.v0);
              loc[du] = su;
              loc[dv] = sv;
              // surface element from the face tangents
              Vec3 tu{0, 0, 0}, tv{0, 0, 0};
              for (int c = 0; c < 8; ++c) {
                const auto gl = fem::shape_grad_local(c, loc[0], loc[1], loc[2]);
                tu += corners[static_cast<std::size_t>(c)] * gl[static_cast<std::size_t>(du)];
                tv += corners[static_cast<std::size_t>(c)] * gl[static_cast<std::size_t>(dv)];
              }
              const double area = norm(cross(tu, tv));
              const double w = area * (sf.u1 - sf.u0) * (sf.v1 - sf.v0) / 4.0;
              double n[8];
              for (int c = 0; c < 8; ++c) n[c] = fem::shape(c, loc[0], loc[1], loc[2]);
              for (int i = 0; i < 8; ++i) {
                rhs[static_cast<std::size_t>(i)] += loss.h * loss.u_loss * n[i] * w;
                for (int j = 0; j < 8; ++j)
                  lhs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
                      loss.h * n[i] * n[j] * w;
              }
            }
        }
      }

    // rhs time term: (M_C/dt) u^n, cell-locally
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        rhs[static_cast<std::size_t>(i)] += mass[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                                            u_local[static_cast<std::size_t>(j)] / in.dt;

    const CondensedLocal sys = apply_constraints(cell, lhs, rhs);
    const CondensedLocal msys = apply_constraints(cell, mass, {});
    const std::size_t nn = sys.dofs.size();
    for (std::size_t i = 0; i < nn; ++i) {
      out.rhs.push_back({sys.dofs[i], sys.rhs[i]});
      for (std::size_t j = 0; j < nn; ++j) {
        out.lhs.push_back({sys.dofs[i], sys.dofs[j], sys.matrix[i * nn + j]});
        out.mass.push_back({msys.dofs[i], msys.dofs[j], msys.matrix[i * nn + j]});
      }
    }
  }
  return out;
}

/// Serial assembly of the whole step: returns the lhs matrix, rhs vector, and
/// the C-weighted mass matrix of the same coefficients.
struct AssembledSystem {
  SparseMatrix lhs;
  std::vector<double> rhs;
  SparseMatrix mass;
};

inline AssembledSystem assemble_step(const StepInputs& in) {
  LocalAssembly local = assemble_cells(in, 0, in.dofmap.cells().size());
  AssembledSystem out;
  const std::int64_t n = in.dofmap.num_dofs();
  out.lhs = csr_from_triplets(n, 0, std::move(local.lhs));
  out.mass = csr_from_triplets(n, 0, std::move(local.mass));
  out.rhs.assign(static_cast<std::size_t>(n), 0.0);
  for (const auto& [dof, v] : local.rhs) out.rhs[static_cast<std::size_t>(dof)] += v;
  return out;
}

/// Distributed step system: per-part lhs rows, rhs segments, and the row
/// distribution they follow.
struct DistributedStep {
  DistributedSystem system;
  std::vector<std::vector<double>> rhs;
};

/// Merges per-part local assemblies into owned rows with one neighbor
/// exchange of the interface contributions. Each owner accumulates the
/// incoming triplets in sender order; senders emit in Morton cell order, so
/// the assembled entries are bit-identical to a serial assembly.
inline DistributedStep merge_assembly(std::vector<LocalAssembly> parts,
                                      const std::vector<std::pair<std::int64_t, std::int64_t>>& ranges,
                                      std::int64_t num_dofs, Transport& tr) {
  const int P = static_cast<int>(parts.size());
  if (tr.parts() != P) throw InvalidArgument("merge_assembly: part count mismatch");

  auto owner_of = [&](std::int64_t dof) {
    for (int p = 0; p < P; ++p)
      if (dof >= ranges[static_cast<std::size_t>(p)].first &&
          dof < ranges[static_cast<std::size_t>(p)].second)
        return p;
    throw Error("merge_assembly: dof outside every range");
  };

  tr.step([&](int p) {
    const auto& mine = parts[static_cast<std::size_t>(p)];
    std::vector<std::vector<std::byte>> buffers(static_cast<std::size_t>(P));
    for (const Triplet& t : mine.lhs) {
      const int o = owner_of(t.row);
      if (o == p) continue;
      auto& buf = buffers[static_cast<std::size_t>(o)];
      wire::put<std::uint8_t>(buf, 0);
      wire::put<std::int64_t>(buf, t.row);
      wire::put<std::int64_t>(buf, t.col);
      wire::put<double>(buf, t.value);
    }
    for (const auto& [dof, v] : mine.rhs) {
      const int o = owner_of(dof);
      if (o == p) continue;
      auto& buf = buffers[static_cast<std::size_t>(o)];
      wire::put<std::uint8_t>(buf, 1);
      wire::put<std::int64_t>(buf, dof);
      wire::put<std::int64_t>(buf, 0);
      wire::put<double>(buf, v);
    }
    for (int o = 0; o < P; ++o)
      if (!buffers[static_cast<std::size_t>(o)].empty())
        tr.send(p, o, std::move(buffers[static_cast<std::size_t>(o)]));
  });

  std::vector<SparseMatrix> mats;
  std::vector<std::vector<double>> rhs(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) {
    const auto [rb, re] = ranges[static_cast<std::size_t>(p)];
    // accumulate own + foreign contributions in sender (global cell) order
    std::vector<Triplet> ordered;
    rhs[static_cast<std::size_t>(p)].assign(static_cast<std::size_t>(re - rb), 0.0);
    auto& rseg = rhs[static_cast<std::size_t>(p)];
    for (int q = 0; q < P; ++q) {
      if (q == p) {
        for (const Triplet& t : parts[static_cast<std::size_t>(p)].lhs)
          if (t.row >= rb && t.row < re) ordered.push_back(t);
        for (const auto& [dof, v] : parts[static_cast<std::size_t>(p)].rhs)
          if (dof >= rb && dof < re) rseg[static_cast<std::size_t>(dof - rb)] += v;
        continue;
      }
      for (const auto& msg : tr.recv(p, q)) {
        std::size_t pos = 0;
        while (pos < msg.size()) {
          const auto tag = wire::get<std::uint8_t>(msg, pos);
          const auto row = wire::get<std::int64_t>(msg, pos);
          const auto col = wire::get<std::int64_t>(msg, pos);
          const auto val = wire::get<double>(msg, pos);
          if (tag == 0)
            ordered.push_back({row, col, val});
          else
            rseg[static_cast<std::size_t>(row - rb)] += val;
          (void)col;
        }
      }
    }
    mats.push_back(csr_from_triplets(re - rb, rb, std::move(ordered)));
  }
  return DistributedStep{DistributedSystem(std::move(mats), num_dofs), std::move(rhs)};
}

/// Symmetric Dirichlet elimination: moves the column to the rhs, pins the row
/// to identity. Keeps the matrix SPD.
inline void apply_dirichlet(SparseMatrix& a, std::vector<double>& rhs,
                            const std::vector<std::pair<std::int64_t, double>>& values) {
  std::unordered_map<std::int64_t, double> fixed(values.begin(), values.end());
  if (fixed.empty()) return;
  for (std::int64_t r = 0; r < a.rows; ++r) {
    const bool row_fixed = fixed.count(r) > 0;
    for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
         k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
      const std::int64_t c = a.cols[static_cast<std::size_t>(k)];
      double& v = a.vals[static_cast<std::size_t>(k)];
      if (row_fixed) {
        v = (c == r) ? 1.0 : 0.0;
      } else if (auto it = fixed.find(c); it != fixed.end()) {
        rhs[static_cast<std::size_t>(r)] -= v * it->second;
        v = 0.0;
      }
    }
    if (row_fixed) rhs[static_cast<std::size_t>(r)] = fixed.at(r);
  }
}

}  // namespace growfem
