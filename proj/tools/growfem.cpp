#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "growfem/benchmark.hpp"
#include "growfem/cli_path.hpp"
#include "growfem/config.hpp"
#include "growfem/pipeline.hpp"
#include "growfem/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw growfem::ConfigError("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_simulate(const std::string& config_path, int parts_override, int vtk_override,
                 const std::string& out_override) {
  growfem::PipelineConfig cfg = growfem::parse_config(slurp(config_path));
  if (parts_override > 0) cfg.parts = parts_override;
  if (vtk_override >= 0) cfg.vtk_every = vtk_override;
  if (!out_override.empty()) cfg.output_directory = out_override;
  cfg.validate();

  growfem::Simulation sim(cfg);
  growfem::RunArtifacts artifacts = sim.run();

  std::cout << "steps: " << artifacts.steps.size() << "\n";
  std::cout << "peak cells: " << artifacts.peak_leaf_count << "\n";
  std::cout << "final dofs: " << artifacts.dofmap.num_dofs() << "\n";
  std::cout << "phase seconds: triangulation " << artifacts.timers.triangulation
            << ", activation " << artifacts.timers.activation << ", assembly "
            << artifacts.timers.assembly << ", solver " << artifacts.timers.solver << "\n";
  const auto imbalance = artifacts.imbalance();
  for (std::size_t q = 0; q < imbalance.quantities.size(); ++q)
    std::cout << "mean cv(" << imbalance.quantities[q]
              << "): " << imbalance.mean_cv_over_time[q] << "\n";
  if (!cfg.output_directory.empty()) {
    growfem::write_reports(artifacts, cfg.output_directory);
    std::cout << "reports written to " << cfg.output_directory << "\n";
  }
  return kExitOk;
}

int cmd_parse_cli(const std::string& path) {
  std::vector<std::string> warnings;
  growfem::LaserPath laser = growfem::parse_cli(slurp(path), &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "layers: " << laser.layers.size() << "\n";
  std::cout << "polylines: " << laser.total_polylines() << "\n";
  std::cout << "hatches: " << laser.total_hatches() << "\n";
  if (!laser.layers.empty())
    std::cout << "height range: " << laser.layers.front().height << " .. "
              << laser.layers.back().height << " mm\n";
  double scan_length = 0.0;
  for (const auto& layer : laser.layers) {
    for (const auto& h : layer.hatches) scan_length += norm(h.end - h.begin);
    for (const auto& p : layer.polylines)
      for (std::size_t i = 1; i < p.points.size(); ++i)
        scan_length += norm(p.points[i] - p.points[i - 1]);
  }
  std::cout << "total scan length: " << scan_length << " mm\n";
  return kExitOk;
}

int cmd_bench(int refinements, int base_level, const std::string& csv_path) {
  growfem::BenchmarkParams params;
  growfem::ConvergenceResult res = growfem::convergence_study(params, refinements, base_level);
  std::ostringstream csv;
  csv << "dofs,error\n";
  for (const auto& p : res.points) csv << p.dofs << ',' << p.error << '\n';
  std::cout << csv.str();
  std::cout << "slope: " << res.slope << "\n";
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    out << csv.str();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Growing-geometry finite-element kit for part-scale thermal analysis of "
               "powder-bed additive manufacturing"};
  app.require_subcommand(1);

  std::string config_path;
  int parts_override = 0;
  int vtk_override = -1;
  std::string out_override;
  auto* simulate = app.add_subcommand("simulate", "run a printing simulation");
  simulate->add_option("--config", config_path, "configuration file")->required();
  simulate->add_option("--parts", parts_override, "override partition.parts");
  simulate->add_option("--vtk-every", vtk_override, "write VTK output every K steps");
  simulate->add_option("--out", out_override, "override output.directory");

  std::string cli_path;
  auto* parse = app.add_subcommand("parse-cli", "validate a CLI slice file and print statistics");
  parse->add_option("file", cli_path, "CLI ASCII file")->required();

  int refinements = 3;
  int base_level = 3;
  std::string bench_csv;
  auto* bench = app.add_subcommand("bench-verification",
                                   "run the moving-source verification benchmark");
  bench->add_option("--refinements", refinements, "number of refinement rounds")
      ->check(CLI::Range(2, 8));
  bench->add_option("--base-level", base_level, "finest level of the first round");
  bench->add_option("--csv", bench_csv, "also write the (dofs, error) table to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed())
      return cmd_simulate(config_path, parts_override, vtk_override, out_override);
    if (parse->parsed()) return cmd_parse_cli(cli_path);
    if (bench->parsed()) return cmd_bench(refinements, base_level, bench_csv);
  } catch (const growfem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const growfem::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const growfem::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const growfem::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
