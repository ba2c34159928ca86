#pragma once

#include "deepls/common.hpp"

#include <Eigen/Geometry>

#include <array>
#include <limits>
#include <random>
#include <string>

namespace deepls {

// Rigid transform x_world = rotation * x_local + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;

  static RigidTransform translation_only(const Vec3& t);
  /// Uniformly random rotation (via random unit quaternion).
  static RigidTransform random_rotation(std::mt19937_64& rng);
  /// Camera at `eye` looking at `target`; camera z is the viewing direction,
  /// x right, y down (pinhole image convention).
  static RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up);
  /// Row-major 4x4 homogeneous matrix.
  std::array<double, 16> to_matrix() const;
  static RigidTransform from_matrix(const std::array<double, 16>& m);
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool empty() const { return (lo.array() > hi.array()).any(); }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  double diagonal() const { return empty() ? 0.0 : (hi - lo).norm(); }
  Aabb padded(double pad) const { return {lo.array() - pad, hi.array() + pad}; }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  /// Squared distance from p to the box (0 inside).
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.squaredNorm();
  }
};

enum class PrimitiveKind { sphere, box, ellipsoid, cylinder };

// size: sphere (radius, -, -); box half-extents; ellipsoid semi-axes;
// cylinder (radius, half-height, -) with the axis along local z.
struct PrimitiveShape {
  PrimitiveKind kind = PrimitiveKind::sphere;
  RigidTransform pose;
  Vec3 size = Vec3::Ones();

  void validate() const;
  /// Conservative world-space bounding box.
  Aabb bounds() const;
};

/// Signed distance (negative inside). Exact for every kind.
double primitive_sdf(const PrimitiveShape& shape, const Vec3& world_pos);

/// Exact unsigned distance from a point to an ellipsoid surface with semi-axes
/// `axes` (any order), point given in the ellipsoid frame.
double ellipsoid_distance(const Vec3& axes, const Vec3& p);

const char* to_string(PrimitiveKind kind);
PrimitiveKind primitive_kind_from_string(const std::string& s);

}  // namespace deepls
