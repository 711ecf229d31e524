#pragma once

#include <cmath>
#include <string>

#include "growfem/core.hpp"

namespace growfem {

/// Smooth bijection from the unit reference cube [0,1]^3 to physical space (mm).
///
/// The mesh lives on the reference cube; all physical coordinates are obtained
/// by evaluating this map at reference points. Supported maps:
///  - identity: physical domain is the unit cube itself,
///  - box: affine stretch onto an axis-aligned box,
///  - wiggle: box followed by a horizontal shear y += amplitude * g(x), where
///    g joins two parabolic arcs C^1-continuously, so cells away from the
///    finest levels are skewed but never inverted.
class GeometryMap {
 public:
  enum class Kind { identity, box, wiggle };

  GeometryMap() = default;

  static GeometryMap identity() { return GeometryMap(); }

  static GeometryMap box(Vec3 origin, Vec3 lengths) {
    GeometryMap m;
    m.kind_ = Kind::box;
    m.origin_ = origin;
    m.lengths_ = lengths;
    return m;
  }

  static GeometryMap wiggle(Vec3 origin, Vec3 lengths, double amplitude) {
    GeometryMap m = box(origin, lengths);
    m.kind_ = Kind::wiggle;
    m.amplitude_ = amplitude;
    return m;
  }

  Kind kind() const { return kind_; }
  Vec3 origin() const { return origin_; }
  Vec3 lengths() const { return lengths_; }
  double amplitude() const { return amplitude_; }

  Vec3 operator()(const Vec3& ref) const {
    switch (kind_) {
      case Kind::identity:
        return ref;
      case Kind::box:
        return origin_ + Vec3{ref.x * lengths_.x, ref.y * lengths_.y, ref.z * lengths_.z};
      case Kind::wiggle: {
        Vec3 p = origin_ + Vec3{ref.x * lengths_.x, ref.y * lengths_.y, ref.z * lengths_.z};
        p.y += amplitude_ * shear_profile(ref.x);
        return p;
      }
    }
    return ref;
  }

  bool is_affine() const { return kind_ != Kind::wiggle; }

 private:
  // Two parabolic arcs joined C^1 at x = 1/2; rises from 0 to 1.
  static double shear_profile(double x) {
    return x <= 0.5 ? 2.0 * x * x : 1.0 - 2.0 * (1.0 - x) * (1.0 - x);
  }

  Kind kind_ = Kind::identity;
  Vec3 origin_{0.0, 0.0, 0.0};
  Vec3 lengths_{1.0, 1.0, 1.0};
  double amplitude_ = 0.0;
};

}  // namespace growfem
