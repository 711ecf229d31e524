#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "growfem/core.hpp"

namespace growfem {

/// Temperature-dependent material data as piecewise-linear breakpoints.
/// Units are the consistent mm-based set used throughout: temperature in deg
/// C, rho in kg/mm^3, c in J/(kg K), k in W/(mm K). The volumetric heat
/// capacity is C(u) = rho(u) * c(u).
class MaterialTable {
 public:
  struct Row {
    double temperature;
    double rho;
    double c;
    double k;
  };

  explicit MaterialTable(std::vector<Row> rows) : rows_(std::move(rows)) {
    if (rows_.empty()) throw InvalidArgument("MaterialTable: need at least one breakpoint");
    for (std::size_t i = 1; i < rows_.size(); ++i)
      if (rows_[i].temperature <= rows_[i - 1].temperature)
        throw InvalidArgument("MaterialTable: breakpoints must be strictly increasing");
    for (const Row& r : rows_)
      if (r.k < 0) throw InvalidArgument("MaterialTable: conductivity must be non-negative");
  }

  static MaterialTable constant(double rho, double c, double k) {
    return MaterialTable({Row{0.0, rho, c, k}});
  }

  /// Linear interpolation between bracketing breakpoints, clamped at the ends.
  Row eval(double temperature) const {
    if (temperature <= rows_.front().temperature) {
      Row r = rows_.front();
      r.temperature = temperature;
      return r;
    }
    if (temperature >= rows_.back().temperature) {
      Row r = rows_.back();
      r.temperature = temperature;
      return r;
    }
    auto hi = std::lower_bound(rows_.begin(), rows_.end(), temperature,
                               [](const Row& r, double t) { return r.temperature < t; });
    auto lo = hi - 1;
    const double w = (temperature - lo->temperature) / (hi->temperature - lo->temperature);
    return Row{temperature, lo->rho + w * (hi->rho - lo->rho), lo->c + w * (hi->c - lo->c),
               lo->k + w * (hi->k - lo->k)};
  }

  double heat_capacity(double temperature) const {
    const Row r = eval(temperature);
    return r.rho * r.c;
  }

  double conductivity(double temperature) const { return eval(temperature).k; }

  const std::vector<Row>& rows() const { return rows_; }

 private:
  std::vector<Row> rows_;
};

/// Reads a CSV table with header "T,rho,c,k".
inline MaterialTable load_material_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open material table: " + path);
  std::string line;
  int lineno = 0;
  std::vector<MaterialTable::Row> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 || rows.empty()) {
      std::string norm = line;
      norm.erase(std::remove_if(norm.begin(), norm.end(),
                                [](char c) { return c == ' ' || c == '\r'; }),
                 norm.end());
      if (norm == "T,rho,c,k") continue;
    }
    std::istringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) {
      try {
        vals.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ParseError(lineno, "material table: invalid number '" + tok + "'");
      }
    }
    if (vals.size() != 4) throw ParseError(lineno, "material table: expected T,rho,c,k");
    rows.push_back({vals[0], vals[1], vals[2], vals[3]});
  }
  return MaterialTable(std::move(rows));
}

}  // namespace growfem
