#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "growfem/core.hpp"

namespace growfem {

/// Closed polyline of the part contour in one layer, in mm.
struct Polyline {
  std::vector<Vec2> points;  // at least 2, consecutive points distinct
};

/// One rectilinear hatch segment, in mm.
struct Hatch {
  Vec2 begin;
  Vec2 end;
};

struct Layer {
  double height = 0.0;  // mm
  std::vector<Polyline> polylines;
  std::vector<Hatch> hatches;
};

/// Laser path parsed from a Common Layer Interface (CLI) ASCII file.
struct LaserPath {
  double units = 1.0;  // mm per file unit
  std::vector<Layer> layers;

  std::size_t total_polylines() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.polylines.size();
    return n;
  }
  std::size_t total_hatches() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.hatches.size();
    return n;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<double> parse_number_list(std::string_view body, int line) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t comma = body.find(',', pos);
    std::string_view tok = trim(body.substr(pos, comma == std::string_view::npos
                                                     ? std::string_view::npos
                                                     : comma - pos));
    if (tok.empty()) throw ParseError(line, "empty numeric field");
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last)
      throw ParseError(line, "invalid number '" + std::string(tok) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::string format_number(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

/// Parses the minimal CLI ASCII grammar: $$UNITS in the header, then
/// $$LAYER/z, $$POLYLINE/id,dir,n,x1,y1,... and $$HATCHES/id,n,xs,ys,xe,ye,...
/// in the geometry section. Structural CLI 2.0 directives are accepted and
/// skipped (collected in `warnings` when given); anything else is an error
/// with its line number. Coordinates are scaled by the units directive.
inline LaserPath parse_cli(std::string_view text, std::vector<std::string>* warnings = nullptr) {
  LaserPath path;
  bool have_units = false;
  bool in_geometry = false;
  Layer* layer = nullptr;

  std::istringstream is{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string_view s = detail::trim(raw);
    if (s.empty() || s.substr(0, 2) == "//") continue;
    if (s.substr(0, 2) != "$$") throw ParseError(line, "expected a $$ directive");

    std::string_view directive = s.substr(2);
    std::string_view body;
    if (auto slash = directive.find('/'); slash != std::string_view::npos) {
      body = detail::trim(directive.substr(slash + 1));
      directive = directive.substr(0, slash);
    }
    std::string name(directive);
    std::transform(name.begin(), name.end(), name.begin(), ::toupper);

    if (name == "UNITS") {
      auto v = detail::parse_number_list(body, line);
      if (v.size() != 1 || v[0] <= 0) throw ParseError(line, "$$UNITS needs one positive value");
      path.units = v[0];
      have_units = true;
    } else if (name == "LAYER") {
      if (!have_units) throw ParseError(line, "$$LAYER before $$UNITS");
      auto v = detail::parse_number_list(body, line);
      if (v.size() != 1) throw ParseError(line, "$$LAYER needs exactly one height");
      const double z = v[0] * path.units;
      if (!path.layers.empty() && z <= path.layers.back().height)
        throw ParseError(line, "layer heights must be strictly increasing");
      path.layers.push_back(Layer{z, {}, {}});
      layer = &path.layers.back();
      in_geometry = true;
    } else if (name == "POLYLINE") {
      if (!layer) throw ParseError(line, "$$POLYLINE before any $$LAYER");
      auto v = detail::parse_number_list(body, line);
      if (v.size() < 3) throw ParseError(line, "$$POLYLINE needs id,dir,n,points");
      const auto n = static_cast<std::size_t>(v[2]);
      if (v[2] != std::floor(v[2]) || n < 2) throw ParseError(line, "bad $$POLYLINE point count");
      if (v.size() != 3 + 2 * n)
        throw ParseError(line, "$$POLYLINE expects " + std::to_string(3 + 2 * n) +
                                   " fields, got " + std::to_string(v.size()));
      Polyline poly;
      for (std::size_t i = 0; i < n; ++i)
        poly.points.push_back(Vec2{v[3 + 2 * i] * path.units, v[4 + 2 * i] * path.units});
      for (std::size_t i = 1; i < n; ++i)
        if (poly.points[i] == poly.points[i - 1])
          throw ParseError(line, "consecutive polyline points coincide");
      layer->polylines.push_back(std::move(poly));
    } else if (name == "HATCHES") {
      if (!layer) throw ParseError(line, "$$HATCHES before any $$LAYER");
      auto v = detail::parse_number_list(body, line);
      if (v.size() < 2) throw ParseError(line, "$$HATCHES needs id,n,coordinates");
      const auto n = static_cast<std::size_t>(v[1]);
      if (v[1] != std::floor(v[1]) || n < 1) throw ParseError(line, "bad $$HATCHES count");
      if (v.size() != 2 + 4 * n)
        throw ParseError(line, "$$HATCHES expects " + std::to_string(2 + 4 * n) +
                                   " fields, got " + std::to_string(v.size()));
      for (std::size_t i = 0; i < n; ++i) {
        Hatch h{Vec2{v[2 + 4 * i] * path.units, v[3 + 4 * i] * path.units},
                Vec2{v[4 + 4 * i] * path.units, v[5 + 4 * i] * path.units}};
        if (h.begin == h.end) throw ParseError(line, "degenerate hatch (begin == end)");
        layer->hatches.push_back(h);
      }
    } else if (name == "HEADERSTART" || name == "HEADEREND" || name == "GEOMETRYSTART" ||
               name == "GEOMETRYEND" || name == "ASCII" || name == "DATE" || name == "LAYERS" ||
               name == "DIMENSION" || name == "LABEL" || name == "USERDATA" || name == "VERSION") {
      if (warnings && name != "HEADERSTART" && name != "HEADEREND" && name != "GEOMETRYSTART" &&
          name != "GEOMETRYEND" && name != "ASCII")
        warnings->push_back("line " + std::to_string(line) + ": directive $$" + name + " ignored");
    } else if (name == "BINARY") {
      throw ParseError(line, "binary CLI files are not supported");
    } else {
      throw ParseError(line, "unknown directive $$" + name);
    }
  }
  if (!have_units) throw ParseError("missing $$UNITS directive");
  if (!in_geometry) throw ParseError("no layers in file");
  return path;
}

/// Canonical serializer. Output is normalized to $$UNITS/1 with coordinates
/// in mm (shortest round-trip formatting), so serialize -> parse -> serialize
/// is byte-stable.
inline std::string serialize_cli(const LaserPath& path) {
  std::ostringstream os;
  os << "$$HEADERSTART\n$$ASCII\n$$UNITS/1\n$$HEADEREND\n$$GEOMETRYSTART\n";
  int id = 1;
  for (const auto& layer : path.layers) {
    os << "$$LAYER/" << detail::format_number(layer.height) << '\n';
    for (const auto& poly : layer.polylines) {
      os << "$$POLYLINE/" << id++ << ",1," << poly.points.size();
      for (const auto& p : poly.points)
        os << ',' << detail::format_number(p.x) << ',' << detail::format_number(p.y);
      os << '\n';
    }
    if (!layer.hatches.empty()) {
      os << "$$HATCHES/" << id++ << ',' << layer.hatches.size();
      for (const auto& h : layer.hatches)
        os << ',' << detail::format_number(h.begin.x) << ',' << detail::format_number(h.begin.y)
           << ',' << detail::format_number(h.end.x) << ',' << detail::format_number(h.end.y);
      os << '\n';
    }
  }
  os << "$$GEOMETRYEND\n";
  return os.str();
}

/// One piece of a discretized scan entity with its time increment.
struct Subsegment {
  Vec2 begin;
  Vec2 end;
  double dt = 0.0;  // seconds, length / scanning speed

  double length() const { return norm(end - begin); }
};

/// Space-time discretization of the entity currently being printed. The
/// object is a single-entity placeholder, refilled by discretize() while the
/// simulation loops over the laser path.
class DiscretePath {
 public:
  DiscretePath(double step_length, double scanning_speed, double relocation_speed)
      : step_length_(step_length), scanning_speed_(scanning_speed),
        relocation_speed_(relocation_speed) {
    if (step_length <= 0) throw InvalidArgument("DiscretePath: step length must be > 0");
    if (scanning_speed <= 0 || relocation_speed <= 0)
      throw InvalidArgument("DiscretePath: speeds must be > 0");
  }

  double step_length() const { return step_length_; }
  double scanning_speed() const { return scanning_speed_; }
  double relocation_speed() const { return relocation_speed_; }
  const std::vector<Subsegment>& subsegments() const { return subsegments_; }

  void discretize(const Hatch& h) {
    subsegments_.clear();
    append_segment(h.begin, h.end);
  }

  void discretize(const Polyline& poly) {
    if (poly.points.size() < 2) throw InvalidArgument("discretize: polyline needs >= 2 points");
    subsegments_.clear();
    for (std::size_t i = 1; i < poly.points.size(); ++i)
      append_segment(poly.points[i - 1], poly.points[i]);
  }

  double scanning_time() const {
    double t = 0.0;
    for (const auto& s : subsegments_) t += s.dt;
    return t;
  }

 private:
  /// Splits [a,b] into ceil(L/dx) pieces: full dx pieces plus a shorter final
  /// remainder, so dx stays an upper bound on the piece length.
  void append_segment(const Vec2& a, const Vec2& b) {
    const double len = norm(b - a);
    if (len <= 0) throw InvalidArgument("discretize: zero-length segment");
    auto n = static_cast<std::size_t>(len / step_length_);
    if (static_cast<double>(n) * step_length_ < len - 1e-9 * len) ++n;
    if (n == 0) n = 1;
    Vec2 prev = a;
    for (std::size_t i = 1; i <= n; ++i) {
      const double t = std::min(static_cast<double>(i) * step_length_ / len, 1.0);
      Vec2 next = (i == n) ? b : a + (b - a) * t;
      subsegments_.push_back({prev, next, norm(next - prev) / scanning_speed_});
      prev = next;
    }
  }

  double step_length_;
  double scanning_speed_;
  double relocation_speed_;
  std::vector<Subsegment> subsegments_;
};

/// Travel time of the (switched-off) laser between two points.
inline double relocation_time(const Vec2& end, const Vec2& next_begin, double relocation_speed) {
  if (relocation_speed <= 0) throw InvalidArgument("relocation_time: speed must be > 0");
  return norm(next_begin - end) / relocation_speed;
}

}  // namespace growfem
