#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "growfem/cli_path.hpp"
#include "growfem/collision.hpp"
#include "growfem/config.hpp"
#include "growfem/fe_space.hpp"
#include "growfem/material.hpp"
#include "growfem/partition.hpp"
#include "growfem/solver.hpp"
#include "growfem/status_exchange.hpp"
#include "growfem/thermal.hpp"
#include "growfem/transport.hpp"
#include "growfem/vtk.hpp"

namespace growfem {

/// Cumulative wall time per simulation phase. Triangulation covers remesh,
/// balance, field projection and redistribution; activation covers the search
/// for activated cells plus FE-space generation with the new DOFs; assembly
/// and solver cover the linear-system work of printing and cooling steps.
struct PhaseTimers {
  double triangulation = 0.0;
  double activation = 0.0;
  double assembly = 0.0;
  double solver = 0.0;

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> n{"triangulation", "activation", "assembly", "solver"};
    return n;
  }
};

namespace detail {

class ScopedTimer {
 public:
  explicit ScopedTimer(double& acc) : acc_(acc), start_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    acc_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  ScopedTimer(const ScopedTimer&) = delete;

 private:
  double& acc_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

struct StepRecord {
  int step = 0;
  int layer = 0;
  std::string kind;  // "printing" or "cooling"
  double dt = 0.0;
  double time = 0.0;  // simulation time at the end of the step
  std::int64_t dofs = 0;
  std::size_t total_cells = 0;
  std::size_t active_cells = 0;
  int solver_iterations = 0;
  double solver_residual = 0.0;
  // per-part load samples
  std::vector<double> part_cells;
  std::vector<double> part_weighted;
  std::vector<double> part_active;
  std::vector<double> part_dofs;
};

struct RunArtifacts {
  std::vector<StepRecord> steps;
  PhaseTimers timers;
  OctreeMesh mesh;
  StatusField status;
  DofMap dofmap;
  std::vector<double> temperature;
  std::size_t peak_leaf_count = 0;
  std::vector<HeatAffectedVolume> emitted_havs;
  std::size_t status_exchanges = 0;  // ghost updates + migrations per run

  ImbalanceReport imbalance() const {
    std::vector<std::vector<std::vector<double>>> samples(4);
    for (const auto& s : steps) {
      samples[0].push_back(s.part_cells);
      samples[1].push_back(s.part_weighted);
      samples[2].push_back(s.part_active);
      samples[3].push_back(s.part_dofs);
    }
    return imbalance_stats({"cells", "weighted_cells", "active_cells", "dofs"}, samples);
  }
};

/// Configuration-driven simulation of a printing job: owns the growing mesh,
/// statuses, partition, DOF layout and temperature field, and advances them
/// through bulk-synchronous supersteps on the chosen transport.
class Simulation {
 public:
  explicit Simulation(const PipelineConfig& cfg)
      : cfg_(cfg), material_(load_material(cfg)),
        transport_(make_transport(cfg.transport, cfg.parts)) {
    cfg_.validate();
    bc_.platform = {cfg_.platform_h, cfg_.platform_u};
    bc_.powder = {cfg_.powder_h, cfg_.powder_u};
    bc_.free_surface = {cfg_.free_h, cfg_.free_u};
    initialize();
  }

  RunArtifacts run() {
    if (cfg_.mode == "layer") return run_layer_by_layer();
    return run_path_tracking();
  }

  RunArtifacts run_layer_by_layer() {
    const double z0 = cfg_.box_origin.z + cfg_.base_height;
    for (int layer = 1; layer <= cfg_.layers; ++layer) {
      const double lo = z0 + (layer - 1) * cfg_.layer_thickness;
      const double hi = z0 + layer * cfg_.layer_thickness;
      HeatAffectedVolume hav;
      hav.box = Cuboid::axis_aligned(
          {cfg_.box_origin.x, cfg_.box_origin.y, lo},
          {cfg_.box_origin.x + cfg_.box_lengths.x, cfg_.box_origin.y + cfg_.box_lengths.y, hi});
      hav.layer_thickness = cfg_.layer_thickness;
      hav.vertices = hav.box.corners();

      auto heated = grow_to(hav, layer);
      const double v_acd = active_volume_mm3(mesh_, heated);
      if (v_acd <= 0.0)
        throw NumericalError("layer " + std::to_string(layer) + ": no cells activated");
      const double t_p = v_acd / cfg_.deposition_rate;

      HeatSource src;
      src.kind = HeatSource::Kind::uniform_hav;
      src.heated_cells = heated;
      src.density = uniform_source_density(cfg_.absorption, cfg_.laser_power, v_acd);
      solve_step("printing", layer, t_p, src);

      HeatSource off;
      solve_step("cooling", layer, cfg_.recoat_time, off);
      maybe_write_vtk();
    }
    return finish();
  }

  RunArtifacts run_path_tracking() {
    std::ifstream in(cfg_.cli_file);
    if (!in) throw ConfigError("cannot open CLI file: " + cfg_.cli_file);
    std::stringstream buf;
    buf << in.rdbuf();
    LaserPath path = parse_cli(buf.str());

    DiscretePath dp(cfg_.step_length, cfg_.scan_speed, cfg_.relocation_speed);
    for (std::size_t li = 0; li < path.layers.size(); ++li) {
      const Layer& layer = path.layers[li];
      const int layer_no = static_cast<int>(li) + 1;

      struct Entity {
        Vec2 begin;
        Vec2 end;
        bool polyline;
        std::size_t index;
      };
      std::vector<Entity> entities;
      for (std::size_t i = 0; i < layer.polylines.size(); ++i)
        entities.push_back(
            {layer.polylines[i].points.front(), layer.polylines[i].points.back(), true, i});
      for (std::size_t i = 0; i < layer.hatches.size(); ++i)
        entities.push_back({layer.hatches[i].begin, layer.hatches[i].end, false, i});

      for (std::size_t e = 0; e < entities.size(); ++e) {
        if (entities[e].polyline)
          dp.discretize(layer.polylines[entities[e].index]);
        else
          dp.discretize(layer.hatches[entities[e].index]);
        simulate_entity(dp, layer.height, layer_no);

        if (e + 1 < entities.size()) {
          const double dt = relocation_time(entities[e].end, entities[e + 1].begin,
                                            cfg_.relocation_speed);
          if (dt > 0.0) {
            HeatSource off;
            solve_step("cooling", layer_no, dt, off);
          }
        }
      }
      // recoat between layers (and final cool-down after the last one)
      HeatSource off;
      solve_step("cooling", layer_no, cfg_.recoat_time, off);
      maybe_write_vtk();
    }
    return finish();
  }

  const OctreeMesh& mesh() const { return mesh_; }
  const StatusField& status() const { return status_; }

 private:
  static MaterialTable load_material(const PipelineConfig& cfg) {
    if (!cfg.material_table.empty()) return load_material_csv(cfg.material_table);
    if (cfg.material_constant)
      return MaterialTable::constant(cfg.material_constant->x, cfg.material_constant->y,
                                     cfg.material_constant->z);
    throw ConfigError("no material specified");
  }

  void initialize() {
    mesh_ = OctreeMesh::uniform(cfg_.min_level, cfg_.min_level, cfg_.max_level,
                                cfg_.geometry_map());
    status_ = make_status(mesh_.size(), false, cfg_.inactive_tag);

    // refine cells straddling the base plane, then activate everything below
    const double base_ref = cfg_.base_height / cfg_.box_lengths.z;
    if (cfg_.base_height > 0.0) {
      for (int round = 0; round < cfg_.max_level - cfg_.min_level; ++round) {
        RefinementFlags flags{std::vector<int>(mesh_.size(), 0)};
        bool any = false;
        for (std::size_t i = 0; i < mesh_.size(); ++i) {
          const OctantKey& k = mesh_.leaf(i);
          const double zlo = static_cast<double>(k.anchor.z) / root_extent();
          const double zhi = static_cast<double>(k.anchor.z + k.extent()) / root_extent();
          if (zlo < base_ref - 1e-12 && zhi > base_ref + 1e-12 && k.level < cfg_.max_level) {
            flags.action[i] = 1;
            any = true;
          }
        }
        if (!any) break;
        auto r = refine_and_coarsen(mesh_, flags);
        status_ = project_status(status_, r.origins);
        mesh_ = std::move(r.mesh);
      }
      mesh_ = enforce_2to1_balance(mesh_, [&](const OctreeMesh&, const TransformResult& sweep) {
        status_ = project_status(status_, sweep.origins);
      });
      std::vector<std::size_t> base_cells;
      for (std::size_t i = 0; i < mesh_.size(); ++i) {
        const OctantKey& k = mesh_.leaf(i);
        const double zhi = static_cast<double>(k.anchor.z + k.extent()) / root_extent();
        if (zhi <= base_ref + 1e-12) base_cells.push_back(i);
      }
      activate_cells(status_, base_cells);
    }

    partition_ = partition_by_weight(
        compute_weights(mesh_, status_, {cfg_.w_active, cfg_.w_inactive}), cfg_.parts);
    dofmap_ = build_dof_map(mesh_, status_);
    temperature_.assign(static_cast<std::size_t>(dofmap_.num_dofs()), cfg_.initial_temperature);
    artifacts_.peak_leaf_count = mesh_.size();
  }

  /// Transforms the mesh to the HAV (remesh, project, repartition, migrate),
  /// then activates K_acd and extends the DOF layout. Returns the cells to
  /// heat: the newly activated ones, or the full intersecting set when the
  /// laser only re-melts existing material.
  std::vector<std::size_t> grow_to(const HeatAffectedVolume& hav, int layer) {
    artifacts_.emitted_havs.push_back(hav);

    TransformToHavResult res;
    {
      detail::ScopedTimer t(artifacts_.timers.triangulation);
      TransformHooks hooks;
      hooks.on_transform = [&](const OctreeMesh& old_mesh, const OctreeMesh& new_mesh,
                               const std::vector<LeafOrigin>& origins) {
        DofMap new_map = build_dof_map(new_mesh, status_);
        temperature_ =
            project_on_transform(old_mesh, dofmap_, temperature_, new_mesh, new_map);
        dofmap_ = std::move(new_map);
        remap_partition(origins);
      };
      hooks.on_repartition = [&](const OctreeMesh& m) { repartition(m); };
      res = transform_to_hav(mesh_, status_, hav, cfg_.max_level, cfg_.search_min(), hooks);
      mesh_ = std::move(res.mesh);
      artifacts_.peak_leaf_count = std::max(artifacts_.peak_leaf_count, mesh_.size());
    }

    {
      detail::ScopedTimer t(artifacts_.timers.activation);
      DofMap new_map = build_dof_map(mesh_, status_);
      temperature_ = increment(dofmap_, temperature_, new_map, cfg_.initial_temperature);
      dofmap_ = std::move(new_map);
      refresh_ghost_status();
    }

    if (res.newly_activated.empty() && res.activated.empty())
      throw NumericalError("layer " + std::to_string(layer) + ": HAV missed the mesh");
    return res.newly_activated.empty() ? res.activated : res.newly_activated;
  }

  /// Keeps the ownership ranges aligned with the current mesh across a
  /// refine/coarsen sweep (children stay with the parent's owner).
  void remap_partition(const std::vector<LeafOrigin>& origins) {
    std::vector<std::size_t> new_bounds(partition_.boundaries.size());
    for (std::size_t k = 0; k < partition_.boundaries.size(); ++k) {
      const std::size_t old_bound = partition_.boundaries[k];
      std::size_t nb = origins.size();
      for (std::size_t i = 0; i < origins.size(); ++i) {
        if (origins[i].old_index >= old_bound) {
          nb = i;
          break;
        }
      }
      new_bounds[k] = nb;
    }
    partition_.boundaries = std::move(new_bounds);
  }

  /// Weighted repartition plus status migration through the transport.
  void repartition(const OctreeMesh& m) {
    auto weights = compute_weights(m, status_, {cfg_.w_active, cfg_.w_inactive});
    Partition next = partition_by_weight(weights, cfg_.parts);

    auto old_slices = redistribute<CellStatus>(status_, partition_);
    auto moved = redistribute_via_transport<CellStatus>(old_slices, partition_, next, m.size(),
                                                        *transport_);
    ++artifacts_.status_exchanges;
    StatusField migrated;
    migrated.reserve(m.size());
    for (const auto& slice : moved) migrated.insert(migrated.end(), slice.begin(), slice.end());
    if (!(migrated == status_)) throw Error("repartition: migrated statuses diverged");
    partition_ = std::move(next);
  }

  /// Nearest-neighbour ghost status update (one exchange round).
  void refresh_ghost_status() {
    if (cfg_.parts == 1) return;
    std::vector<std::vector<CellStatus>> local(static_cast<std::size_t>(cfg_.parts));
    std::vector<std::vector<GhostCell>> ghosts(static_cast<std::size_t>(cfg_.parts));
    for (int p = 0; p < cfg_.parts; ++p) {
      const std::size_t b = partition_.begin_of(p);
      const std::size_t e = partition_.end_of(p, mesh_.size());
      local[static_cast<std::size_t>(p)].assign(status_.begin() + static_cast<std::ptrdiff_t>(b),
                                                status_.begin() + static_cast<std::ptrdiff_t>(e));
      ghosts[static_cast<std::size_t>(p)] = ghost_layer(mesh_, partition_, p);
    }
    auto values = exchange_ghost_status(local, ghosts, partition_, mesh_.size(), *transport_);
    ++artifacts_.status_exchanges;
    for (int p = 0; p < cfg_.parts; ++p)
      for (std::size_t g = 0; g < ghosts[static_cast<std::size_t>(p)].size(); ++g)
        if (!(values[static_cast<std::size_t>(p)][g] ==
              status_[ghosts[static_cast<std::size_t>(p)][g].leaf_index]))
          throw Error("ghost status exchange diverged");
  }

  void solve_step(const char* kind, int layer, double dt, const HeatSource& source) {
    const double t_next = time_ + dt;
    StepInputs in{mesh_,  status_, dofmap_, material_, bc_,
                  source, temperature_, dt, t_next};

    auto ranges = dofmap_.dof_ranges(partition_);
    DistributedStep step = [&] {
      detail::ScopedTimer t(artifacts_.timers.assembly);
      std::vector<LocalAssembly> locals(static_cast<std::size_t>(cfg_.parts));
      transport_->step([&](int p) {
        const std::size_t lb = partition_.begin_of(p);
        const std::size_t le = partition_.end_of(p, mesh_.size());
        locals[static_cast<std::size_t>(p)] = assemble_cells(in, cell_lower(lb), cell_lower(le));
      });
      return merge_assembly(std::move(locals), ranges, dofmap_.num_dofs(), *transport_);
    }();

    SolveReport rep;
    {
      detail::ScopedTimer t(artifacts_.timers.solver);
      std::vector<std::vector<double>> x;
      for (auto [b, e] : ranges)
        x.push_back(std::vector<double>(temperature_.begin() + static_cast<std::ptrdiff_t>(b),
                                        temperature_.begin() + static_cast<std::ptrdiff_t>(e)));
      rep = jacobi_pcg(step.system, step.rhs, x, *transport_, cfg_.solver_tolerance,
                       cfg_.solver_max_iters);
      if (!rep.converged)
        throw NumericalError(std::string(kind) + " step at layer " + std::to_string(layer) +
                             ": solver did not converge (residual " +
                             std::to_string(rep.residual) + ")");
      std::size_t flat = 0;
      for (const auto& seg : x)
        for (double v : seg) temperature_[flat++] = v;
    }

    time_ = t_next;
    StepRecord rec;
    rec.step = static_cast<int>(artifacts_.steps.size()) + 1;
    rec.layer = layer;
    rec.kind = kind;
    rec.dt = dt;
    rec.time = time_;
    rec.dofs = dofmap_.num_dofs();
    rec.total_cells = mesh_.size();
    rec.active_cells = active_submesh(mesh_, status_).size();
    rec.solver_iterations = rep.iterations;
    rec.solver_residual = rep.residual;
    auto weights = compute_weights(mesh_, status_, {cfg_.w_active, cfg_.w_inactive});
    auto loads = part_loads(weights, partition_);
    for (int p = 0; p < cfg_.parts; ++p) {
      const std::size_t b = partition_.begin_of(p);
      const std::size_t e = partition_.end_of(p, mesh_.size());
      rec.part_cells.push_back(static_cast<double>(e - b));
      rec.part_weighted.push_back(static_cast<double>(loads[static_cast<std::size_t>(p)]));
      std::size_t act = 0;
      for (std::size_t i = b; i < e; ++i)
        if (status_[i].active) ++act;
      rec.part_active.push_back(static_cast<double>(act));
      rec.part_dofs.push_back(static_cast<double>(ranges[static_cast<std::size_t>(p)].second -
                                                  ranges[static_cast<std::size_t>(p)].first));
    }
    artifacts_.steps.push_back(std::move(rec));
    artifacts_.peak_leaf_count = std::max(artifacts_.peak_leaf_count, mesh_.size());
  }

  void simulate_entity(const DiscretePath& dp, double layer_height, int layer_no) {
    for (const Subsegment& seg : dp.subsegments()) {
      HeatAffectedVolume hav =
          build_hav({seg.begin.x, seg.begin.y, layer_height}, {seg.end.x, seg.end.y, layer_height},
                    cfg_.laser_width, cfg_.layer_thickness, cfg_.xy_scale);
      auto heated = grow_to(hav, layer_no);
      const double v_acd = active_volume_mm3(mesh_, heated);
      HeatSource src;
      src.kind = HeatSource::Kind::uniform_hav;
      src.heated_cells = heated;
      src.density = uniform_source_density(cfg_.absorption, cfg_.laser_power, v_acd);
      solve_step("printing", layer_no, seg.dt, src);
      maybe_write_vtk();
    }
  }

  /// Index of the first active cell whose leaf index is >= the given leaf.
  std::size_t cell_lower(std::size_t leaf) const {
    const auto& cells = dofmap_.cells();
    std::size_t lo = 0, hi = cells.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cells[mid].leaf_index < leaf)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

  void maybe_write_vtk() {
    if (cfg_.vtk_every <= 0 || cfg_.output_directory.empty()) return;
    if (artifacts_.steps.size() % static_cast<std::size_t>(cfg_.vtk_every) != 0) return;
    std::filesystem::create_directories(cfg_.output_directory);
    char name[64];
    std::snprintf(name, sizeof(name), "state_%05zu.vtk", artifacts_.steps.size());
    write_vtk(mesh_, status_, dofmap_, temperature_,
              cfg_.output_directory + "/" + std::string(name));
  }

  RunArtifacts finish() {
    artifacts_.mesh = mesh_;
    artifacts_.status = status_;
    artifacts_.dofmap = dofmap_;
    artifacts_.temperature = temperature_;
    return std::move(artifacts_);
  }

  PipelineConfig cfg_;
  MaterialTable material_;
  BoundaryConditions bc_;
  std::unique_ptr<Transport> transport_;

  OctreeMesh mesh_;
  StatusField status_;
  Partition partition_;
  DofMap dofmap_;
  std::vector<double> temperature_;
  double time_ = 0.0;
  RunArtifacts artifacts_;
};

inline RunArtifacts run_layer_by_layer(const PipelineConfig& cfg) {
  if (cfg.mode != "layer") throw ConfigError("run_layer_by_layer: run.mode must be layer");
  return Simulation(cfg).run();
}

inline RunArtifacts run_path_tracking(const PipelineConfig& cfg) {
  if (cfg.mode != "path") throw ConfigError("run_path_tracking: run.mode must be path");
  return Simulation(cfg).run();
}

}  // namespace growfem
