#include "deepls/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>

namespace deepls {

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

RigidTransform RigidTransform::translation_only(const Vec3& t) {
  RigidTransform out;
  out.translation = t;
  return out;
}

RigidTransform RigidTransform::random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  RigidTransform out;
  out.rotation = q.toRotationMatrix();
  return out;
}

RigidTransform RigidTransform::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitY());
  x.normalize();
  // Right-handed camera with image y pointing down: y = z x x = -up.
  const Vec3 y = z.cross(x);
  RigidTransform out;
  out.rotation.col(0) = x;
  out.rotation.col(1) = y;
  out.rotation.col(2) = z;
  out.translation = eye;
  return out;
}

std::array<double, 16> RigidTransform::to_matrix() const {
  std::array<double, 16> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[r * 4 + c] = rotation(r, c);
    m[r * 4 + 3] = translation(r);
  }
  m[15] = 1.0;
  return m;
}

RigidTransform RigidTransform::from_matrix(const std::array<double, 16>& m) {
  RigidTransform out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.rotation(r, c) = m[r * 4 + c];
    out.translation(r) = m[r * 4 + 3];
  }
  return out;
}

void PrimitiveShape::validate() const {
  const int used = kind == PrimitiveKind::sphere ? 1 : (kind == PrimitiveKind::cylinder ? 2 : 3);
  for (int i = 0; i < used; ++i) {
    if (!(size(i) > 0.0) || !std::isfinite(size(i))) {
      throw ConfigError("primitive size parameters must be positive");
    }
  }
}

Aabb PrimitiveShape::bounds() const {
  double r = 0.0;
  switch (kind) {
    case PrimitiveKind::sphere: r = size.x(); break;
    case PrimitiveKind::box:
    case PrimitiveKind::ellipsoid: r = size.norm(); break;
    case PrimitiveKind::cylinder: r = std::hypot(size.x(), size.y()); break;
  }
  Aabb box;
  box.extend(pose.translation - Vec3::Constant(r));
  box.extend(pose.translation + Vec3::Constant(r));
  return box;
}

namespace {

double robust_length(double a, double b) {
  return std::hypot(a, b);
}

double robust_length(double a, double b, double c) {
  return std::sqrt(a * a + b * b + c * c);
}

// Bisection for the ellipse root in Eberly's parameterization.
double ellipse_root(double r0, double z0, double z1, double g) {
  const double n0 = r0 * z0;
  double s0 = z1 - 1.0;
  double s1 = g < 0.0 ? 0.0 : robust_length(n0, z1) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 1100; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double ratio0 = n0 / (s + r0);
    const double ratio1 = z1 / (s + 1.0);
    g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
    if (g > 0.0) {
      s0 = s;
    } else if (g < 0.0) {
      s1 = s;
    } else {
      break;
    }
  }
  return s;
}

double ellipsoid_root(double r0, double r1, double z0, double z1, double z2, double g) {
  const double n0 = r0 * z0;
  const double n1 = r1 * z1;
  double s0 = z2 - 1.0;
  double s1 = g < 0.0 ? 0.0 : robust_length(n0, n1, z2) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 1100; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double ratio0 = n0 / (s + r0);
    const double ratio1 = n1 / (s + r1);
    const double ratio2 = z2 / (s + 1.0);
    g = ratio0 * ratio0 + ratio1 * ratio1 + ratio2 * ratio2 - 1.0;
    if (g > 0.0) {
      s0 = s;
    } else if (g < 0.0) {
      s1 = s;
    } else {
      break;
    }
  }
  return s;
}

// e0 >= e1 > 0, y0, y1 >= 0.
double ellipse_distance(double e0, double e1, double y0, double y1) {
  if (y1 > 0.0) {
    if (y0 > 0.0) {
      const double z0 = y0 / e0;
      const double z1 = y1 / e1;
      const double g = z0 * z0 + z1 * z1 - 1.0;
      if (g == 0.0) return 0.0;
      const double r0 = (e0 / e1) * (e0 / e1);
      const double sbar = ellipse_root(r0, z0, z1, g);
      const double x0 = r0 * y0 / (sbar + r0);
      const double x1 = y1 / (sbar + 1.0);
      return std::hypot(x0 - y0, x1 - y1);
    }
    return std::abs(y1 - e1);
  }
  const double numer0 = e0 * y0;
  const double denom0 = e0 * e0 - e1 * e1;
  if (numer0 < denom0) {
    const double xde0 = numer0 / denom0;
    const double x0 = e0 * xde0;
    const double x1 = e1 * std::sqrt(std::max(0.0, 1.0 - xde0 * xde0));
    return std::hypot(x0 - y0, x1);
  }
  return std::abs(y0 - e0);
}

// e0 >= e1 >= e2 > 0, y >= 0 componentwise.
double ellipsoid_distance_sorted(double e0, double e1, double e2, double y0, double y1,
                                 double y2) {
  if (y2 > 0.0) {
    if (y1 > 0.0) {
      if (y0 > 0.0) {
        const double z0 = y0 / e0;
        const double z1 = y1 / e1;
        const double z2 = y2 / e2;
        const double g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0;
        if (g == 0.0) return 0.0;
        const double r0 = (e0 / e2) * (e0 / e2);
        const double r1 = (e1 / e2) * (e1 / e2);
        const double sbar = ellipsoid_root(r0, r1, z0, z1, z2, g);
        const double x0 = r0 * y0 / (sbar + r0);
        const double x1 = r1 * y1 / (sbar + r1);
        const double x2 = y2 / (sbar + 1.0);
        return robust_length(x0 - y0, x1 - y1, x2 - y2);
      }
      return ellipse_distance(e1, e2, y1, y2);
    }
    if (y0 > 0.0) return ellipse_distance(e0, e2, y0, y2);
    return std::abs(y2 - e2);
  }
  const double denom0 = e0 * e0 - e2 * e2;
  const double denom1 = e1 * e1 - e2 * e2;
  const double numer0 = e0 * y0;
  const double numer1 = e1 * y1;
  if (numer0 < denom0 && numer1 < denom1) {
    const double xde0 = numer0 / denom0;
    const double xde1 = numer1 / denom1;
    const double discr = 1.0 - xde0 * xde0 - xde1 * xde1;
    if (discr > 0.0) {
      const double x0 = e0 * xde0;
      const double x1 = e1 * xde1;
      const double x2 = e2 * std::sqrt(discr);
      return robust_length(x0 - y0, x1 - y1, x2);
    }
  }
  return ellipse_distance(e0, e1, y0, y1);
}

}  // namespace

double ellipsoid_distance(const Vec3& axes, const Vec3& p) {
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) { return axes(a) > axes(b); });
  const Vec3 y = p.cwiseAbs();
  return ellipsoid_distance_sorted(axes(order[0]), axes(order[1]), axes(order[2]), y(order[0]),
                                   y(order[1]), y(order[2]));
}

double primitive_sdf(const PrimitiveShape& shape, const Vec3& world_pos) {
  const Vec3 p = shape.pose.apply_inverse(world_pos);
  switch (shape.kind) {
    case PrimitiveKind::sphere:
      return p.norm() - shape.size.x();
    case PrimitiveKind::box: {
      const Vec3 q = p.cwiseAbs() - shape.size;
      return q.cwiseMax(Vec3::Zero()).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case PrimitiveKind::ellipsoid: {
      const double d = ellipsoid_distance(shape.size, p);
      const double inside = p.cwiseQuotient(shape.size).squaredNorm();
      return inside < 1.0 ? -d : d;
    }
    case PrimitiveKind::cylinder: {
      const double dr = std::hypot(p.x(), p.y()) - shape.size.x();
      const double dz = std::abs(p.z()) - shape.size.y();
      return std::min(std::max(dr, dz), 0.0) + std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
    }
  }
  return 0.0;
}

const char* to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::box: return "box";
    case PrimitiveKind::ellipsoid: return "ellipsoid";
    case PrimitiveKind::cylinder: return "cylinder";
  }
  return "?";
}

PrimitiveKind primitive_kind_from_string(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::sphere;
  if (s == "box") return PrimitiveKind::box;
  if (s == "ellipsoid") return PrimitiveKind::ellipsoid;
  if (s == "cylinder") return PrimitiveKind::cylinder;
  throw ConfigError("unknown primitive kind '" + s + "'");
}

}  // namespace deepls
