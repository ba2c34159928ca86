#include "deepls/scenes.hpp"

#include "deepls/meshing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace deepls {

void CorpusConfig::validate() const {
  if (count <= 0) throw ConfigError("primitive count must be positive");
  if (!(min_size > 0.0 && max_size >= min_size)) throw ConfigError("primitive size range is invalid");
}

std::vector<PrimitiveShape> generate_primitive_corpus(const CorpusConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> size(config.min_size, config.max_size);
  std::uniform_int_distribution<int> kind(0, 3);
  std::vector<PrimitiveShape> shapes;
  shapes.reserve(static_cast<std::size_t>(config.count));
  for (int i = 0; i < config.count; ++i) {
    PrimitiveShape s;
    s.kind = static_cast<PrimitiveKind>(kind(rng));
    s.size = Vec3(size(rng), size(rng), size(rng));
    if (s.kind == PrimitiveKind::sphere) s.size = Vec3::Constant(s.size.x());
    s.pose = RigidTransform::random_rotation(rng);
    shapes.push_back(s);
  }
  return shapes;
}

namespace {

double smooth_min(double a, double b, double k) {
  const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
  return b + (a - b) * h - k * h * (1.0 - h);
}

}  // namespace

TriangleMesh make_blob_mesh(const BlobConfig& config) {
  if (config.lobes < 1) throw ConfigError("blob needs at least one lobe");
  if (!(config.extent > 0.0) || config.lattice < 8) throw ConfigError("invalid blob extent or lattice");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> pos(-0.35, 0.35);
  std::uniform_real_distribution<double> axis(0.22, 0.42);
  std::vector<PrimitiveShape> lobes;
  for (int i = 0; i < config.lobes; ++i) {
    PrimitiveShape s;
    s.kind = PrimitiveKind::ellipsoid;
    s.size = Vec3(axis(rng), axis(rng), axis(rng));
    s.pose = RigidTransform::random_rotation(rng);
    s.pose.translation = Vec3(pos(rng), pos(rng), pos(rng));
    lobes.push_back(s);
  }
  const double k = config.smoothness;
  auto field = [&](const Vec3& p) {
    double d = primitive_sdf(lobes[0], p);
    for (std::size_t i = 1; i < lobes.size(); ++i) d = smooth_min(d, primitive_sdf(lobes[i], p), k);
    return d;
  };
  Aabb box;
  for (const auto& s : lobes) box.extend(s.bounds());
  box = box.padded(0.05);
  ExtractionConfig ec;
  ec.resolution = box.extent().maxCoeff() / config.lattice;
  TriangleMesh mesh = extract(pointwise_source(field), box, ec);
  if (mesh.empty()) throw DataError("blob generation produced an empty mesh");
  const Aabb b = mesh.bounds();
  const Vec3 c = b.center();
  const double scale = config.extent / b.extent().maxCoeff();
  for (auto& v : mesh.vertices) v = (v - c) * scale;
  return mesh;
}

std::vector<RigidTransform> orbit_cameras(const Vec3& target, double radius, int count, double elevation) {
  if (count < 1 || !(radius > 0.0)) throw ConfigError("orbit needs a positive radius and camera count");
  std::vector<RigidTransform> out;
  for (int i = 0; i < count; ++i) {
    const double az = 2.0 * std::numbers::pi * i / count;
    const Vec3 eye = target + radius * Vec3(std::cos(elevation) * std::cos(az), std::cos(elevation) * std::sin(az),
                                            std::sin(elevation));
    out.push_back(RigidTransform::look_at(eye, target, Vec3::UnitZ()));
  }
  return out;
}

std::vector<RigidTransform> corner_cameras(const Vec3& target, double radius) {
  if (!(radius > 0.0)) throw ConfigError("camera radius must be positive");
  std::vector<RigidTransform> out;
  for (int c = 0; c < 8; ++c) {
    const Vec3 dir(c & 1 ? 1.0 : -1.0, c & 2 ? 1.0 : -1.0, c & 4 ? 1.0 : -1.0);
    out.push_back(RigidTransform::look_at(target + radius * dir.normalized(), target, Vec3::UnitZ()));
  }
  return out;
}

}  // namespace deepls
