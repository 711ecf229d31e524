#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "growfem/fe_space.hpp"
#include "growfem/thermal.hpp"

using namespace growfem;

namespace {

/// Mesh with one level-1 octant refined to level 2 (15 leaves, balanced).
OctreeMesh one_refined_mesh() {
  OctreeMesh mesh = OctreeMesh::root(0, 4);
  mesh = refine_and_coarsen(mesh, RefinementFlags{{1}}).mesh;
  RefinementFlags f{std::vector<int>(8, 0)};
  f.action[0] = 1;
  return refine_and_coarsen(mesh, f).mesh;
}

/// FE value inside one cell from its corner expansions.
double eval_in_cell(const DofMap& map, std::size_t cell_index, std::span<const double> values,
                    double xi, double eta, double zeta) {
  const auto& cell = map.cells()[cell_index];
  double v = 0.0;
  for (int c = 0; c < 8; ++c) {
    const double shape = ((c & 1) ? xi : 1 - xi) * ((c & 2) ? eta : 1 - eta) *
                         ((c & 4) ? zeta : 1 - zeta);
    double nodal = 0.0;
    for (const DofTerm& t : cell.corner_dofs[static_cast<std::size_t>(c)])
      nodal += t.coeff * values[static_cast<std::size_t>(t.dof)];
    v += shape * nodal;
  }
  return v;
}

}  // namespace

TEST_CASE("build_dof_map counts and numbering") {
  SECTION("all cells inactive yields zero DOFs") {
    OctreeMesh mesh = OctreeMesh::uniform(2, 0, 4);
    DofMap map = build_dof_map(mesh, make_status(mesh.size()));
    CHECK(map.num_dofs() == 0);
    CHECK(map.cells().empty());
  }

  SECTION("fully active uniform level-l cube has (2^l + 1)^3 DOFs") {
    for (int l = 1; l <= 3; ++l) {
      OctreeMesh mesh = OctreeMesh::uniform(l, 0, 4);
      DofMap map = build_dof_map(mesh, make_status(mesh.size(), true));
      const std::int64_t n = (std::int64_t{1} << l) + 1;
      CHECK(map.num_dofs() == n * n * n);
    }
  }

  SECTION("DOF count is partition-independent and ranges are contiguous") {
    OctreeMesh mesh = one_refined_mesh();
    StatusField status = make_status(mesh.size(), true);
    DofMap map = build_dof_map(mesh, status);
    for (int parts : {1, 2, 4, 8}) {
      std::vector<std::uint64_t> w(mesh.size(), 1);
      Partition p = partition_by_weight(w, parts);
      auto ranges = map.dof_ranges(p);
      std::int64_t total = 0;
      for (const auto& [b, e] : ranges) total += e - b;
      CHECK(total == map.num_dofs());
    }
  }
}

TEST_CASE("hanging nodes are constrained by the coarse-side interpolation") {
  OctreeMesh mesh = one_refined_mesh();
  StatusField status = make_status(mesh.size(), true);
  DofMap map = build_dof_map(mesh, status);

  const std::int64_t q = root_extent() / 4;

  SECTION("face-centre node has 4 masters with coefficient 1/4") {
    const NodeKey fc = node_key({2 * q, q, q});
    CHECK_FALSE(map.dof_of_node(fc).has_value());
    const auto* exp = map.hanging_expansion(fc);
    REQUIRE(exp != nullptr);
    REQUIRE(exp->size() == 4);
    double sum = 0.0;
    for (const auto& [mk, c] : *exp) {
      CHECK(c == Catch::Approx(0.25));
      CHECK(map.dof_of_node(mk).has_value());
      sum += c;
    }
    CHECK(sum == Catch::Approx(1.0));
  }

  SECTION("edge-midpoint node has 2 masters with coefficient 1/2") {
    const NodeKey em = node_key({2 * q, q, 0});
    const auto* exp = map.hanging_expansion(em);
    REQUIRE(exp != nullptr);
    REQUIRE(exp->size() == 2);
    for (const auto& [mk, c] : *exp) CHECK(c == Catch::Approx(0.5));
  }

  SECTION("all constraint coefficient sums are 1") {
    for (const auto& cell : map.cells())
      for (const NodeKey nk : cell.corner_keys) {
        if (const auto* exp = map.hanging_expansion(nk)) {
          double sum = 0.0;
          for (const auto& [mk, c] : *exp) sum += c;
          REQUIRE(sum == Catch::Approx(1.0));
        }
      }
  }

  SECTION("unbalanced meshes are rejected") {
    OctreeMesh bad = one_refined_mesh();
    RefinementFlags f{std::vector<int>(bad.size(), 0)};
    f.action[bad.find_leaf(OctantKey{2, {q, q, q}})] = 1;
    bad = refine_and_coarsen(bad, f).mesh;
    REQUIRE_FALSE(is_2to1_balanced(bad));
    CHECK_THROWS_AS(build_dof_map(bad, make_status(bad.size(), true)), InvalidArgument);
  }

  SECTION("interface against inactive cells carries no constraints") {
    StatusField part = make_status(mesh.size());
    for (std::size_t i = 0; i < mesh.size(); ++i)
      if (mesh.leaf(i).level == 2) part[i].active = true;
    DofMap pm = build_dof_map(mesh, part);
    CHECK(pm.num_dofs() == 3 * 3 * 3);  // the fine octant is a 2x2x2 block
    CHECK(pm.hanging_expansion(node_key({2 * q, q, q})) == nullptr);
  }
}

TEST_CASE("constrained interpolation is continuous across hanging faces") {
  OctreeMesh mesh = one_refined_mesh();
  StatusField status = make_status(mesh.size(), true);
  DofMap map = build_dof_map(mesh, status);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-10, 10);
  std::vector<double> values(static_cast<std::size_t>(map.num_dofs()));
  for (auto& v : values) v = u(rng);

  // shared face x = 1/2 between the fine octant (level 2) and child 1 (level 1)
  const auto coarse_cell = map.active_cell_index_of_leaf(
      mesh.find_leaf(OctantKey{1, {root_extent() / 2, 0, 0}}));
  REQUIRE(coarse_cell.has_value());

  const std::int64_t q = root_extent() / 4;
  int samples = 0;
  for (int a = 0; a <= 5 && samples < 27; ++a)
    for (int b = 0; b <= 4 && samples < 27; ++b) {
      const double y = 0.5 * a / 5.0;
      const double z = 0.5 * b / 4.0;
      const double coarse_val = eval_in_cell(map, *coarse_cell, values, 0.0, y / 0.5, z / 0.5);
      const std::int64_t iy = std::min<std::int64_t>(static_cast<std::int64_t>(y * 4), 1) * q;
      const std::int64_t iz = std::min<std::int64_t>(static_cast<std::int64_t>(z * 4), 1) * q;
      const auto fine_cell =
          map.active_cell_index_of_leaf(mesh.find_leaf(OctantKey{2, {q, iy, iz}}));
      REQUIRE(fine_cell.has_value());
      const double fy = (y - static_cast<double>(iy) / root_extent()) / 0.25;
      const double fz = (z - static_cast<double>(iz) / root_extent()) / 0.25;
      const double fine_val = eval_in_cell(map, *fine_cell, values, 1.0, fy, fz);
      REQUIRE(fine_val == Catch::Approx(coarse_val).margin(1e-12));
      ++samples;
    }
  CHECK(samples == 27);
}

TEST_CASE("increment keeps surviving values and initializes new DOFs") {
  OctreeMesh mesh = OctreeMesh::uniform(2, 0, 4);
  StatusField half = make_status(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i)
    if (mesh.leaf_box(i)[0].z < 0.5 - 1e-12) half[i].active = true;
  DofMap old_map = build_dof_map(mesh, half);

  std::vector<double> old_values(static_cast<std::size_t>(old_map.num_dofs()));
  for (std::size_t i = 0; i < old_values.size(); ++i) old_values[i] = static_cast<double>(i) + 1;

  SECTION("no new cells: values unchanged") {
    auto out = increment(old_map, old_values, old_map, 90.0);
    CHECK(out == old_values);
  }

  SECTION("new layer starts at the initial platform temperature") {
    StatusField more = half;
    for (std::size_t i = 0; i < mesh.size(); ++i)
      if (mesh.leaf_box(i)[0].z < 0.75 - 1e-12) more[i].active = true;
    DofMap new_map = build_dof_map(mesh, more);
    auto out = increment(old_map, old_values, new_map, 90.0);
    int fresh = 0, kept = 0;
    for (std::int64_t d = 0; d < new_map.num_dofs(); ++d) {
      const NodeKey nk = new_map.dof_nodes()[static_cast<std::size_t>(d)];
      if (auto od = old_map.dof_of_node(nk)) {
        CHECK(out[static_cast<std::size_t>(d)] == old_values[static_cast<std::size_t>(*od)]);
        ++kept;
      } else {
        CHECK(out[static_cast<std::size_t>(d)] == 90.0);
        ++fresh;
      }
    }
    CHECK(kept == old_map.num_dofs());
    CHECK(fresh > 0);
  }

  SECTION("shrinking the active region is an error") {
    StatusField less = make_status(mesh.size());
    for (std::size_t i = 0; i < mesh.size(); ++i)
      if (mesh.leaf_box(i)[0].z < 0.25 - 1e-12) less[i].active = true;
    DofMap new_map = build_dof_map(mesh, less);
    CHECK_THROWS_AS(increment(old_map, old_values, new_map, 0.0), InvalidArgument);
  }
}

TEST_CASE("project_on_transform") {
  OctreeMesh mesh = OctreeMesh::uniform(1, 0, 4);
  StatusField status = make_status(mesh.size(), true);
  DofMap map = build_dof_map(mesh, status);

  SECTION("constant and linear fields survive refinement exactly") {
    std::vector<double> constant(static_cast<std::size_t>(map.num_dofs()), 3.25);
    std::vector<double> linear(static_cast<std::size_t>(map.num_dofs()));
    for (std::int64_t d = 0; d < map.num_dofs(); ++d)
      linear[static_cast<std::size_t>(d)] = map.dof_position(mesh, d).x;

    RefinementFlags f{std::vector<int>(mesh.size(), 1)};
    auto r = refine_and_coarsen(mesh, f);
    StatusField fine_status = project_status(status, r.origins);
    DofMap fine_map = build_dof_map(r.mesh, fine_status);

    auto c2 = project_on_transform(mesh, map, constant, r.mesh, fine_map);
    for (double v : c2) REQUIRE(v == Catch::Approx(3.25).margin(1e-14));

    auto l2 = project_on_transform(mesh, map, linear, r.mesh, fine_map);
    for (std::int64_t d = 0; d < fine_map.num_dofs(); ++d)
      REQUIRE(l2[static_cast<std::size_t>(d)] ==
              Catch::Approx(fine_map.dof_position(r.mesh, d).x).margin(1e-13));
  }

  SECTION("refine then coarsen restores surviving nodal values") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<double> values(static_cast<std::size_t>(map.num_dofs()));
    for (auto& v : values) v = u(rng);

    RefinementFlags f{std::vector<int>(mesh.size(), 1)};
    auto fine = refine_and_coarsen(mesh, f);
    StatusField fine_status = project_status(status, fine.origins);
    DofMap fine_map = build_dof_map(fine.mesh, fine_status);
    auto fine_values = project_on_transform(mesh, map, values, fine.mesh, fine_map);

    RefinementFlags g{std::vector<int>(fine.mesh.size(), -1)};
    auto back = refine_and_coarsen(fine.mesh, g);
    REQUIRE(back.mesh.size() == mesh.size());
    StatusField back_status = project_status(fine_status, back.origins);
    DofMap back_map = build_dof_map(back.mesh, back_status);
    auto back_values = project_on_transform(fine.mesh, fine_map, fine_values, back.mesh, back_map);

    for (std::int64_t d = 0; d < map.num_dofs(); ++d) {
      const NodeKey nk = map.dof_nodes()[static_cast<std::size_t>(d)];
      auto bd = back_map.dof_of_node(nk);
      REQUIRE(bd.has_value());
      REQUIRE(back_values[static_cast<std::size_t>(*bd)] ==
              Catch::Approx(values[static_cast<std::size_t>(d)]).margin(1e-13));
    }
  }

  SECTION("unrelated meshes are rejected") {
    OctreeMesh other = OctreeMesh::uniform(2, 0, 4);
    StatusField ostatus = make_status(other.size());
    ostatus[other.size() - 1].active = true;
    DofMap omap = build_dof_map(other, ostatus);
    StatusField empty = make_status(mesh.size());
    empty[0].active = true;
    DofMap emap = build_dof_map(mesh, empty);
    std::vector<double> vals(static_cast<std::size_t>(emap.num_dofs()), 1.0);
    CHECK_THROWS_AS(project_on_transform(mesh, emap, vals, other, omap), InvalidArgument);
  }
}

TEST_CASE("apply_constraints condenses local systems") {
  SECTION("cells without hanging nodes pass through unchanged") {
    OctreeMesh mesh = OctreeMesh::uniform(1, 0, 3);
    DofMap map = build_dof_map(mesh, make_status(mesh.size(), true));
    std::array<std::array<double, 8>, 8> m{};
    std::array<double, 8> r{};
    for (int i = 0; i < 8; ++i) {
      r[static_cast<std::size_t>(i)] = i;
      for (int j = 0; j < 8; ++j)
        m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 10.0 * i + j;
    }
    auto out = apply_constraints(map.cells()[0], m, r);
    REQUIRE(out.dofs.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(out.rhs[i] == r[i]);
      for (std::size_t j = 0; j < 8; ++j) CHECK(out.matrix[i * 8 + j] == m[i][j]);
    }
  }

  SECTION("symmetry is preserved through condensation") {
    OctreeMesh mesh = one_refined_mesh();
    DofMap map = build_dof_map(mesh, make_status(mesh.size(), true));
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-2, 2);
    for (const auto& cell : map.cells()) {
      std::array<std::array<double, 8>, 8> m{};
      for (int i = 0; i < 8; ++i)
        for (int j = i; j < 8; ++j) {
          m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = u(rng);
          m[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
              m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
      auto out = apply_constraints(cell, m, {});
      const std::size_t n = out.dofs.size();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          REQUIRE(out.matrix[i * n + j] == Catch::Approx(out.matrix[j * n + i]).margin(1e-12));
    }
  }

  SECTION("hanging elimination equals assembly on the conforming refinement") {
    OctreeMesh coarse = one_refined_mesh();
    StatusField cs = make_status(coarse.size(), true);
    DofMap cmap = build_dof_map(coarse, cs);

    RefinementFlags f{std::vector<int>(coarse.size(), 0)};
    for (std::size_t i = 0; i < coarse.size(); ++i)
      if (coarse.leaf(i).level == 1) f.action[i] = 1;
    auto fine = refine_and_coarsen(coarse, f);
    REQUIRE(fine.mesh.size() == 64);
    StatusField fs = project_status(cs, fine.origins);
    DofMap fmap = build_dof_map(fine.mesh, fs);

    MaterialTable mat = MaterialTable::constant(1.0, 1.0, 1.0);
    BoundaryConditions bc;  // all h = 0
    HeatSource none;
    const double huge_dt = 1e30;

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-3, 3);
    std::vector<double> uc(static_cast<std::size_t>(cmap.num_dofs()));
    for (auto& v : uc) v = u(rng);
    std::vector<double> zero_c(uc.size(), 0.0);
    StepInputs ic{coarse, cs, cmap, mat, bc, none, zero_c, huge_dt, 0.0};
    AssembledSystem sc = assemble_step(ic);

    auto uf = project_on_transform(coarse, cmap, uc, fine.mesh, fmap);
    std::vector<double> zero_f(uf.size(), 0.0);
    StepInputs ifine{fine.mesh, fs, fmap, mat, bc, none, zero_f, huge_dt, 0.0};
    AssembledSystem sf = assemble_step(ifine);

    auto quad_form = [](const SparseMatrix& a, std::span<const double> x) {
      auto y = matvec(a, x);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += x[i] * y[i];
      return acc;
    };
    const double qc = quad_form(sc.lhs, uc);
    const double qf = quad_form(sf.lhs, uf);
    CHECK(qc == Catch::Approx(qf).epsilon(1e-10));
  }
}
