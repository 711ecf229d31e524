#pragma once

#include <cmath>
#include <functional>
#include <future>
#include <numbers>
#include <vector>

#include "growfem/fe_space.hpp"
#include "growfem/solver.hpp"
#include "growfem/thermal.hpp"

namespace growfem {

/// Moving single-ellipsoid benchmark on a semi-infinite solid: a heat source
/// travels along a straight horizontal path on the top surface; the far
/// boundary carries the semi-analytical solution as Dirichlet data, the top
/// surface and the lateral symmetry face are adiabatic.
struct BenchmarkParams {
  double u0 = 20.0;
  double Q = 50.0;
  double speed = 1.0;
  double alpha = 0.1;  // diffusivity k / (rho c)
  double k = 1.0;
  double a = 0.3, b = 0.15, c = 0.25;
  Vec3 domain_lo{-1.0, -2.0, -2.0};
  Vec3 domain_hi{3.0, 0.0, 0.0};
  Vec3 path_start{2.0, 0.0, 0.0};
  Vec3 path_end{0.0, 0.0, 0.0};
  double dt0 = 0.008;
  double quadrature_tol = 1e-8;

  double duration() const { return norm(path_end - path_start) / speed; }
  Vec3 path_direction() const { return normalized(path_end - path_start); }
  double rho_c() const { return k / alpha; }
};

namespace detail {

/// Adaptive 7-point Gauss quadrature with interval bisection.
template <class F>
double adaptive_gauss(const F& f, double lo, double hi, double tol, int depth = 0) {
  static constexpr double x[7] = {-0.9491079123427585, -0.7415311855993945,
                                  -0.4058451513773972, 0.0,
                                  0.4058451513773972,  0.7415311855993945,
                                  0.9491079123427585};
  static constexpr double w[7] = {0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
                                  0.4179591836734694, 0.3818300505051189, 0.2797053914892766,
                                  0.1294849661688697};
  auto g7 = [&](double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int i = 0; i < 7; ++i) acc += w[i] * f(mid + half * x[i]);
    return acc * half;
  };
  const double whole = g7(lo, hi);
  const double mid = 0.5 * (lo + hi);
  const double split = g7(lo, mid) + g7(mid, hi);
  if (std::abs(split - whole) <= tol || depth >= 24) {
    if (depth >= 24 && std::abs(split - whole) > 100 * tol)
      throw NumericalError("adaptive_gauss: quadrature did not converge");
    return split;
  }
  return adaptive_gauss(f, lo, mid, 0.5 * tol, depth + 1) +
         adaptive_gauss(f, mid, hi, 0.5 * tol, depth + 1);
}

}  // namespace detail

/// Semi-analytical reference temperature from the Green's-function
/// convolution of the moving ellipsoidal source over the emission history.
inline double green_solution(const Vec3& p, double t, const BenchmarkParams& bp) {
  if (t < 0) throw InvalidArgument("green_solution: negative time");
  if (t == 0.0) return bp.u0;
  const Vec3 dir = bp.path_direction();
  const Vec3 perp = cross(Vec3{0, 0, 1}, dir);
  const double front = 6.0 * std::sqrt(3.0) / (std::numbers::pi * std::sqrt(std::numbers::pi));
  const double scale = front * bp.alpha * bp.Q / bp.k;
  const double t_on = std::min(t, bp.duration());

  auto integrand = [&](double tau) {
    const Vec3 centre = bp.path_start + dir * (bp.speed * tau);
    const Vec3 d = p - centre;
    const double u1 = dot(d, dir);
    const double u2 = dot(d, perp);
    const double u3 = d.z;
    const double s = 12.0 * bp.alpha * (t - tau);
    const double qa = bp.a * bp.a + s;
    const double qb = bp.b * bp.b + s;
    const double qc = bp.c * bp.c + s;
    return std::exp(-3.0 * (u1 * u1 / qa + u2 * u2 / qb + u3 * u3 / qc)) /
           std::sqrt(qa * qb * qc);
  };
  return bp.u0 + scale * detail::adaptive_gauss(integrand, 0.0, t_on, bp.quadrature_tol);
}

/// Mesh and boundary setup of the verification run: smallest cells inside a
/// band around the welding path, Dirichlet DOFs on every face except the top
/// surface and the lateral symmetry plane.
struct BenchmarkDomain {
  OctreeMesh mesh;
  StatusField status;
  DofMap dofmap;
  std::vector<std::int64_t> dirichlet_dofs;
};

inline BenchmarkDomain benchmark_domain(const BenchmarkParams& bp, int max_level,
                                        int min_level = 1, double band_margin = 0.6) {
  const Vec3 lengths = bp.domain_hi - bp.domain_lo;
  GeometryMap map = GeometryMap::box(bp.domain_lo, lengths);
  OctreeMesh mesh = OctreeMesh::uniform(min_level, min_level, max_level, map);

  const Vec3 band_lo{std::min(bp.path_start.x, bp.path_end.x) - band_margin,
                     std::min(bp.path_start.y, bp.path_end.y) - band_margin,
                     std::min(bp.path_start.z, bp.path_end.z) - band_margin};
  const Vec3 band_hi{std::max(bp.path_start.x, bp.path_end.x) + band_margin,
                     std::max(bp.path_start.y, bp.path_end.y) + band_margin,
                     std::max(bp.path_start.z, bp.path_end.z) + band_margin};

  while (true) {
    RefinementFlags flags{std::vector<int>(mesh.size(), 0)};
    bool any = false;
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      if (mesh.leaf(i).level >= max_level) continue;
      const auto box = mesh.leaf_box(i);
      bool overlap = true;
      for (int d = 0; d < 3; ++d)
        if (box[7][d] < band_lo[d] || box[0][d] > band_hi[d]) overlap = false;
      if (overlap) {
        flags.action[i] = 1;
        any = true;
      }
    }
    if (!any) break;
    mesh = refine_and_coarsen(mesh, flags).mesh;
    mesh = enforce_2to1_balance(mesh);
  }

  BenchmarkDomain out{std::move(mesh), {}, {}, {}};
  out.status = make_status(out.mesh.size(), true);
  out.dofmap = build_dof_map(out.mesh, out.status);

  const double eps = 1e-9;
  for (std::int64_t d = 0; d < out.dofmap.num_dofs(); ++d) {
    const Vec3 x = out.dofmap.dof_position(out.mesh, d);
    const bool on_dirichlet = x.x < bp.domain_lo.x + eps || x.x > bp.domain_hi.x - eps ||
                              x.y < bp.domain_lo.y + eps || x.z < bp.domain_lo.z + eps;
    // top surface z = hi and symmetry face y = hi stay natural (zero flux)
    if (on_dirichlet) out.dirichlet_dofs.push_back(d);
  }
  return out;
}

using ReferenceField = std::function<double(const Vec3&, double)>;

/// H1-seminorm error of one field against the reference at a fixed time:
/// cell-wise 2x2x2 Gauss with reference gradients by central differences.
inline double h1_error_squared(const OctreeMesh& mesh, const DofMap& dofmap,
                               std::span<const double> field, double time,
                               const ReferenceField& ref, double fd_step = 1e-5) {
  const auto& cells = dofmap.cells();
  auto worker = [&](std::size_t begin, std::size_t end) {
    double acc = 0.0;
    for (std::size_t ci = begin; ci < end; ++ci) {
      const auto& cell = cells[ci];
      const auto corners = mesh.leaf_box(cell.leaf_index);
      double nodal[8];
      for (int c = 0; c < 8; ++c) {
        nodal[c] = 0.0;
        for (const DofTerm& t : cell.corner_dofs[static_cast<std::size_t>(c)])
          nodal[c] += t.coeff * field[static_cast<std::size_t>(t.dof)];
      }
      for (int gx = 0; gx < 2; ++gx)
        for (int gy = 0; gy < 2; ++gy)
          for (int gz = 0; gz < 2; ++gz) {
            const double xi = 0.5 + (gx ? 1 : -1) * fem::kGaussOffset;
            const double eta = 0.5 + (gy ? 1 : -1) * fem::kGaussOffset;
            const double zeta = 0.5 + (gz ? 1 : -1) * fem::kGaussOffset;
            const auto jac = fem::jacobian(corners, xi, eta, zeta);
            double gh[3] = {0, 0, 0};
            for (int c = 0; c < 8; ++c) {
              const auto gl = fem::shape_grad_local(c, xi, eta, zeta);
              for (int i = 0; i < 3; ++i)
                gh[i] += nodal[c] * (jac.inv_t[static_cast<std::size_t>(i)][0] * gl[0] +
                                     jac.inv_t[static_cast<std::size_t>(i)][1] * gl[1] +
                                     jac.inv_t[static_cast<std::size_t>(i)][2] * gl[2]);
            }
            const Vec3 p = fem::trilinear_point(corners, xi, eta, zeta);
            double diff_sq = 0.0;
            for (int i = 0; i < 3; ++i) {
              Vec3 hi = p, lo = p;
              hi[i] += fd_step;
              lo[i] -= fd_step;
              const double gref = (ref(hi, time) - ref(lo, time)) / (2.0 * fd_step);
              diff_sq += (gh[i] - gref) * (gh[i] - gref);
            }
            acc += diff_sq * jac.det / 8.0;
          }
    }
    return acc;
  };

  const std::size_t n = cells.size();
  if (n < 64) return worker(0, n);
  auto half = std::async(std::launch::async, worker, n / 2, n);
  return worker(0, n / 2) + half.get();
}

/// Space-time error in the L2(0,T; H1-seminorm) sense: trapezoid in time over
/// the stored trajectory.
inline double l2h1_error(const OctreeMesh& mesh, const DofMap& dofmap,
                         std::span<const double> times,
                         const std::vector<std::vector<double>>& fields,
                         const ReferenceField& ref, double fd_step = 1e-5) {
  if (times.size() != fields.size() || times.empty())
    throw InvalidArgument("l2h1_error: trajectory is empty or inconsistent");
  double acc = 0.0;
  std::vector<double> s(times.size());
  for (std::size_t n = 0; n < times.size(); ++n)
    s[n] = h1_error_squared(mesh, dofmap, fields[n], times[n], ref, fd_step);
  for (std::size_t n = 0; n + 1 < times.size(); ++n)
    acc += 0.5 * (s[n] + s[n + 1]) * (times[n + 1] - times[n]);
  return std::sqrt(acc);
}

struct ConvergencePoint {
  std::int64_t dofs = 0;
  double error = 0.0;
};

struct ConvergenceResult {
  std::vector<ConvergencePoint> points;
  double slope = 0.0;  // of log10(error) vs log10(dofs^(1/3))
};

/// Least-squares slope of log10(error) against log10(dofs^(1/3)).
inline double fit_loglog_slope(const std::vector<ConvergencePoint>& pts) {
  if (pts.size() < 2) throw InvalidArgument("fit_loglog_slope: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : pts) {
    const double x = std::log10(static_cast<double>(p.dofs)) / 3.0;
    const double y = std::log10(p.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(pts.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// One verification solve on a fixed adapted mesh: semi-implicit marching
/// with the ellipsoidal source, Dirichlet data from the reference on the far
/// faces, and on-the-fly accumulation of the space-time error.
inline ConvergencePoint run_verification_round(const BenchmarkParams& bp, int max_level,
                                               double dt, double solver_tol = 1e-10) {
  BenchmarkDomain dom = benchmark_domain(bp, max_level);
  MaterialTable mat = MaterialTable::constant(bp.rho_c(), 1.0, bp.k);
  BoundaryConditions bc;  // adiabatic: losses enter through Dirichlet data only
  HeatSource src;
  src.kind = HeatSource::Kind::goldak;
  src.Q = bp.Q;
  src.speed = bp.speed;
  src.a = bp.a;
  src.b = bp.b;
  src.c = bp.c;
  src.start = bp.path_start;
  src.direction = bp.path_direction();

  auto ref = [&bp](const Vec3& p, double t) { return green_solution(p, t, bp); };

  std::vector<double> u(static_cast<std::size_t>(dom.dofmap.num_dofs()), bp.u0);
  const double T = bp.duration();
  const int steps = static_cast<int>(std::llround(T / dt));

  double acc = 0.0;
  double prev_s = 0.0;  // exact initial state
  for (int n = 0; n < steps; ++n) {
    const double t_next = (n + 1) * dt;
    StepInputs in{dom.mesh, dom.status, dom.dofmap, mat, bc, src, u, dt, t_next};
    AssembledSystem sys = assemble_step(in);
    std::vector<std::pair<std::int64_t, double>> dirichlet;
    dirichlet.reserve(dom.dirichlet_dofs.size());
    for (std::int64_t d : dom.dirichlet_dofs)
      dirichlet.push_back({d, ref(dom.dofmap.dof_position(dom.mesh, d), t_next)});
    apply_dirichlet(sys.lhs, sys.rhs, dirichlet);
    SolveReport rep = jacobi_pcg(sys.lhs, sys.rhs, u, solver_tol, 20000);
    if (!rep.converged) throw NumericalError("verification solve did not converge");
    const double s = h1_error_squared(dom.mesh, dom.dofmap, u, t_next, ref);
    acc += 0.5 * (prev_s + s) * dt;
    prev_s = s;
  }
  return ConvergencePoint{dom.dofmap.num_dofs(), std::sqrt(acc)};
}

/// Convergence study: refine the mesh band one level per round and halve the
/// time step with it.
inline ConvergenceResult convergence_study(const BenchmarkParams& bp, int rounds,
                                           int base_level = 3) {
  if (rounds < 2) throw InvalidArgument("convergence_study: need at least two rounds");
  ConvergenceResult out;
  for (int r = 0; r < rounds; ++r)
    out.points.push_back(run_verification_round(bp, base_level + r, bp.dt0 / (1 << r)));
  out.slope = fit_loglog_slope(out.points);
  return out;
}

}  // namespace growfem
