#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "growfem/pipeline.hpp"

namespace growfem {

/// Writes steps.csv, imbalance.csv, summary.json and the final VTK state into
/// the output directory.
///
/// steps.csv columns: step, layer, kind, dt, time, dofs, cells, active_cells,
/// solver_iterations, solver_residual. imbalance.csv follows the
/// ImbalanceReport schema (step, quantity, mean, sigma, cv). summary.json
/// collects totals, the four phase timers, and the time-averaged per-part
/// coefficient of variation of each tracked quantity.
inline void write_reports(const RunArtifacts& artifacts, const std::string& directory) {
  std::filesystem::create_directories(directory);

  {
    std::ofstream out(directory + "/steps.csv");
    out << "step,layer,kind,dt,time,dofs,cells,active_cells,solver_iterations,solver_residual\n";
    for (const auto& s : artifacts.steps)
      out << s.step << ',' << s.layer << ',' << s.kind << ',' << s.dt << ',' << s.time << ','
          << s.dofs << ',' << s.total_cells << ',' << s.active_cells << ','
          << s.solver_iterations << ',' << s.solver_residual << '\n';
  }

  const ImbalanceReport imbalance = artifacts.imbalance();
  {
    std::ofstream out(directory + "/imbalance.csv");
    out << imbalance.to_csv();
  }

  {
    nlohmann::json j;
    j["steps"] = artifacts.steps.size();
    j["peak_leaf_count"] = artifacts.peak_leaf_count;
    j["final_dofs"] = artifacts.dofmap.num_dofs();
    j["status_exchanges"] = artifacts.status_exchanges;
    j["phases"] = {{"triangulation", artifacts.timers.triangulation},
                   {"activation", artifacts.timers.activation},
                   {"assembly", artifacts.timers.assembly},
                   {"solver", artifacts.timers.solver}};
    for (std::size_t q = 0; q < imbalance.quantities.size(); ++q)
      j["mean_cv"][imbalance.quantities[q]] = imbalance.mean_cv_over_time[q];
    double iters = 0.0;
    for (const auto& s : artifacts.steps) iters += s.solver_iterations;
    j["mean_solver_iterations"] = artifacts.steps.empty() ? 0.0 : iters / artifacts.steps.size();
    std::ofstream out(directory + "/summary.json");
    out << j.dump(2) << '\n';
  }

  write_vtk(artifacts.mesh, artifacts.status, artifacts.dofmap, artifacts.temperature,
            directory + "/final_state.vtk");
}

}  // namespace growfem
