#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "growfem/core.hpp"
#include "growfem/geometry_map.hpp"
#include "growfem/status.hpp"

namespace growfem {

/// Full configuration of a simulation run, parsed from the line-oriented
/// "section.key = value" format. Unknown keys are rejected.
struct PipelineConfig {
  // mesh
  Vec3 box_origin{0, 0, 0};
  Vec3 box_lengths{1, 1, 1};
  int max_level = 4;
  int min_level = 0;
  int search_min_level = -1;  // defaults to min_level
  std::string map_kind = "box";
  double wiggle_amplitude = 0.0;

  // process
  double laser_power = 100.0;     // W
  double absorption = 1.0;        // eta
  double scan_speed = 100.0;      // mm/s
  double relocation_speed = 200.0;
  double deposition_rate = 10.0;  // mm^3/s
  double recoat_time = 10.0;      // s
  double layer_thickness = 0.0;   // mm
  double step_length = 1.0;       // mm (delta x)
  double laser_width = 0.5;       // mm

  // material: either a table file or constant rho/c/k
  std::string material_table;
  std::optional<Vec3> material_constant;  // (rho, c, k)

  // boundary conditions: h and u_loss per region
  double platform_h = 0.0, platform_u = 0.0;
  double powder_h = 0.0, powder_u = 0.0;
  double free_h = 0.0, free_u = 0.0;

  double initial_temperature = 20.0;

  // partition
  int parts = 1;
  std::uint64_t w_active = 1;
  std::uint64_t w_inactive = 1;
  std::string transport = "serial";

  // solver
  double solver_tolerance = 1e-8;
  int solver_max_iters = 5000;

  // run
  std::string mode = "layer";  // layer | path
  int layers = 1;
  double base_height = 0.0;  // mm of initially active material
  std::string cli_file;
  double xy_scale = 1.0;
  InactiveTag inactive_tag = InactiveTag::gas;

  // output
  std::string output_directory;
  int vtk_every = 0;

  GeometryMap geometry_map() const {
    if (map_kind == "identity") return GeometryMap::identity();
    if (map_kind == "box") return GeometryMap::box(box_origin, box_lengths);
    if (map_kind == "wiggle")
      return GeometryMap::wiggle(box_origin, box_lengths, wiggle_amplitude);
    throw ConfigError("unknown geometry map: " + map_kind);
  }

  void validate() const {
    if (min_level < 0 || max_level > MAX_LEVEL_LIMIT || min_level > max_level)
      throw ConfigError("mesh levels out of order");
    const int sml = search_min();
    if (sml < min_level || sml > max_level)
      throw ConfigError("mesh.search_min_level must lie in [min_level, max_level]");
    if (mode != "layer" && mode != "path") throw ConfigError("run.mode must be layer or path");
    if (mode == "path" && cli_file.empty()) throw ConfigError("path.cli_file is required");
    if (mode == "layer" && layer_thickness <= 0)
      throw ConfigError("process.layer_thickness must be positive");
    if (parts < 1) throw ConfigError("partition.parts must be at least 1");
    if (w_active < 1) throw ConfigError("partition.w_active must be at least 1");
    if (absorption <= 0 || absorption > 1) throw ConfigError("process.absorption must be in (0,1]");
    if (material_table.empty() && !material_constant)
      throw ConfigError("material.table or material.constant is required");
    if (xy_scale < 1.0) throw ConfigError("path.xy_scale must be >= 1");
  }

  int search_min() const { return search_min_level < 0 ? min_level : search_min_level; }

 private:
  static constexpr int MAX_LEVEL_LIMIT = 19;
};

namespace detail {

inline std::vector<double> numbers_from(const std::string& value, const std::string& key) {
  std::istringstream is(value);
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  if (out.empty()) throw ConfigError("expected numeric value(s) for " + key);
  return out;
}

}  // namespace detail

/// Parses "section.key = value" lines; '#' starts a comment; unknown keys are
/// a fail-fast error with the offending line number.
inline PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    auto strip = [](std::string s) {
      const std::size_t x = s.find_first_not_of(" \t\r");
      const std::size_t y = s.find_last_not_of(" \t\r");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");

    auto num = [&] { return detail::numbers_from(value, key)[0]; };
    auto nums = [&] { return detail::numbers_from(value, key); };

    if (key == "mesh.box") {
      auto v = nums();
      if (v.size() != 6) throw ConfigError("mesh.box needs 6 numbers");
      cfg.box_origin = {v[0], v[1], v[2]};
      cfg.box_lengths = {v[3], v[4], v[5]};
    } else if (key == "mesh.max_level") {
      cfg.max_level = static_cast<int>(num());
    } else if (key == "mesh.min_level") {
      cfg.min_level = static_cast<int>(num());
    } else if (key == "mesh.search_min_level") {
      cfg.search_min_level = static_cast<int>(num());
    } else if (key == "mesh.map") {
      std::istringstream ms(value);
      ms >> cfg.map_kind;
      if (cfg.map_kind == "wiggle" && !(ms >> cfg.wiggle_amplitude))
        throw ConfigError("mesh.map = wiggle needs an amplitude");
    } else if (key == "process.laser_power") {
      cfg.laser_power = num();
    } else if (key == "process.absorption") {
      cfg.absorption = num();
    } else if (key == "process.scan_speed") {
      cfg.scan_speed = num();
    } else if (key == "process.relocation_speed") {
      cfg.relocation_speed = num();
    } else if (key == "process.deposition_rate") {
      cfg.deposition_rate = num();
    } else if (key == "process.recoat_time") {
      cfg.recoat_time = num();
    } else if (key == "process.layer_thickness") {
      cfg.layer_thickness = num();
    } else if (key == "process.step_length") {
      cfg.step_length = num();
    } else if (key == "process.laser_width") {
      cfg.laser_width = num();
    } else if (key == "material.table") {
      cfg.material_table = value;
    } else if (key == "material.constant") {
      auto v = nums();
      if (v.size() != 3) throw ConfigError("material.constant needs rho c k");
      cfg.material_constant = Vec3{v[0], v[1], v[2]};
    } else if (key == "bc.platform") {
      auto v = nums();
      if (v.size() != 2) throw ConfigError("bc.platform needs h u");
      cfg.platform_h = v[0];
      cfg.platform_u = v[1];
    } else if (key == "bc.powder") {
      auto v = nums();
      if (v.size() != 2) throw ConfigError("bc.powder needs h u");
      cfg.powder_h = v[0];
      cfg.powder_u = v[1];
    } else if (key == "bc.free") {
      auto v = nums();
      if (v.size() != 2) throw ConfigError("bc.free needs h u");
      cfg.free_h = v[0];
      cfg.free_u = v[1];
    } else if (key == "initial.temperature") {
      cfg.initial_temperature = num();
    } else if (key == "partition.parts") {
      cfg.parts = static_cast<int>(num());
    } else if (key == "partition.w_active") {
      cfg.w_active = static_cast<std::uint64_t>(num());
    } else if (key == "partition.w_inactive") {
      cfg.w_inactive = static_cast<std::uint64_t>(num());
    } else if (key == "partition.transport") {
      cfg.transport = value;
    } else if (key == "solver.tolerance") {
      cfg.solver_tolerance = num();
    } else if (key == "solver.max_iters") {
      cfg.solver_max_iters = static_cast<int>(num());
    } else if (key == "run.mode") {
      cfg.mode = value;
    } else if (key == "run.layers") {
      cfg.layers = static_cast<int>(num());
    } else if (key == "run.base_height") {
      cfg.base_height = num();
    } else if (key == "run.inactive_tag") {
      if (value == "gas")
        cfg.inactive_tag = InactiveTag::gas;
      else if (value == "powder")
        cfg.inactive_tag = InactiveTag::powder;
      else
        throw ConfigError("run.inactive_tag must be gas or powder");
    } else if (key == "path.cli_file") {
      cfg.cli_file = value;
    } else if (key == "path.xy_scale") {
      cfg.xy_scale = num();
    } else if (key == "output.directory") {
      cfg.output_directory = value;
    } else if (key == "output.vtk_every") {
      cfg.vtk_every = static_cast<int>(num());
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace growfem
