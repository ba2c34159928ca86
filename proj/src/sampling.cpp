#include "deepls/sampling.hpp"

#include "deepls/meshing.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace deepls {

void CameraIntrinsics::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("image size must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("focal lengths must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw ConfigError("principal point must be finite");
}

void DepthFrame::validate() const {
  if (width <= 0 || height <= 0) throw DataError("depth frame has zero size");
  if (!(fx > 0.0F) || !(fy > 0.0F)) throw DataError("depth frame focal lengths must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw DataError("depth frame principal point is not finite");
  if (depth.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw DataError("depth buffer size does not match the frame dimensions");
  }
  for (float m : camera_to_world)
    if (!std::isfinite(m)) throw DataError("depth frame pose is not finite");
  for (float d : depth)
    if (!(d >= 0.0F) || !std::isfinite(d)) throw DataError("depth values must be finite and nonnegative");
}

RigidTransform DepthFrame::pose() const {
  std::array<double, 16> m{};
  for (int i = 0; i < 16; ++i) m[i] = camera_to_world[i];
  return RigidTransform::from_matrix(m);
}

void DepthFrame::set_pose(const RigidTransform& pose) {
  const auto m = pose.to_matrix();
  for (int i = 0; i < 16; ++i) camera_to_world[i] = static_cast<float>(m[i]);
}

CameraIntrinsics DepthFrame::intrinsics() const { return {width, height, fx, fy, cx, cy}; }

Vec3 DepthFrame::ray_camera(int u, int v) const {
  return {(u - static_cast<double>(cx)) / fx, (v - static_cast<double>(cy)) / fy, 1.0};
}

Vec3 DepthFrame::backproject(int u, int v, double z) const { return pose().apply(ray_camera(u, v) * z); }

std::size_t DepthFrame::valid_count() const {
  return static_cast<std::size_t>(std::count_if(depth.begin(), depth.end(), [](float d) { return d > 0.0F; }));
}

DepthFrame make_frame(const CameraIntrinsics& intrinsics, const RigidTransform& camera_to_world) {
  intrinsics.validate();
  DepthFrame f;
  f.width = intrinsics.width;
  f.height = intrinsics.height;
  f.fx = static_cast<float>(intrinsics.fx);
  f.fy = static_cast<float>(intrinsics.fy);
  f.cx = static_cast<float>(intrinsics.cx);
  f.cy = static_cast<float>(intrinsics.cy);
  f.set_pose(camera_to_world);
  f.depth.assign(static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height), 0.0F);
  return f;
}

double scene_sdf(std::span<const PrimitiveShape> scene, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : scene) d = std::min(d, primitive_sdf(s, p));
  return d;
}

Aabb scene_bounds(std::span<const PrimitiveShape> scene) {
  Aabb box;
  for (const auto& s : scene) box.extend(s.bounds());
  return box;
}

namespace {

// Parametric slab clip of the ray against a box; returns false on miss.
bool clip_ray(const Aabb& box, const Vec3& o, const Vec3& d, double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d(a)) < 1e-300) {
      if (o(a) < box.lo(a) || o(a) > box.hi(a)) return false;
      continue;
    }
    double ta = (box.lo(a) - o(a)) / d(a);
    double tb = (box.hi(a) - o(a)) / d(a);
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 <= t1;
}

}  // namespace

DepthFrame render_depth(std::span<const PrimitiveShape> scene, const CameraIntrinsics& intrinsics,
                        const RigidTransform& camera_to_world) {
  DepthFrame frame = make_frame(intrinsics, camera_to_world);
  if (scene.empty()) return frame;
  const RigidTransform pose = frame.pose();
  const Aabb box = scene_bounds(scene).padded(1e-6);
  const double scale = std::max(box.diagonal(), 1e-12);
  const double eps = 1e-10 * scale;
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      const Vec3 ray_cam = frame.ray_camera(u, v);
      const double len = ray_cam.norm();
      const Vec3 dir = pose.rotate(ray_cam / len);
      const Vec3& o = pose.translation;
      double t = 0.0;
      double t_end = 0.0;
      if (!clip_ray(box, o, dir, t, t_end)) continue;
      bool hit = false;
      for (int it = 0; it < 1024 && t <= t_end; ++it) {
        const double d = scene_sdf(scene, o + t * dir);
        if (d < eps) {
          hit = true;
          break;
        }
        t += d;
      }
      if (hit) frame.at(u, v) = static_cast<float>(t / len);  // range -> camera z
    }
  }
  return frame;
}

DepthFrame render_depth(const MeshDistance& mesh, const CameraIntrinsics& intrinsics,
                        const RigidTransform& camera_to_world) {
  DepthFrame frame = make_frame(intrinsics, camera_to_world);
  const RigidTransform pose = frame.pose();
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      // Direction with unit camera z: the ray parameter is the depth itself.
      const Vec3 dir = pose.rotate(frame.ray_camera(u, v));
      if (auto t = mesh.raycast(pose.translation, dir)) frame.at(u, v) = static_cast<float>(*t);
    }
  }
  return frame;
}

void add_depth_noise(DepthFrame& frame, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (float& d : frame.depth) {
    if (d <= 0.0F) continue;
    const double noisy = d + normal(rng);
    d = static_cast<float>(std::max(noisy, 1e-6));
  }
}

double weight_for_depth(double z, double z_ref, double w_min) {
  if (!(z > 0.0)) throw ContractError("depth must be positive for weighting");
  if (!(z_ref > 0.0)) throw ContractError("reference depth must be positive");
  return std::clamp(z_ref / z, w_min, 1.0);
}

void DepthSampleConfig::validate() const {
  if (!(displacement > 0.0)) throw ConfigError("displacement must be positive");
  if (!(truncation > 0.0)) throw ConfigError("truncation must be positive");
  if (displacement > truncation) throw ConfigError("displacement must not exceed the truncation");
  if (!(free_space_step > 0.0)) throw ConfigError("free-space step must be positive");
  if (free_space_per_ray < 0) throw ConfigError("free-space count must be nonnegative");
  if (pixel_stride < 1) throw ConfigError("pixel stride must be at least 1");
  if (!(z_ref > 0.0)) throw ConfigError("reference depth must be positive");
  if (!(w_min > 0.0 && w_min <= 1.0)) throw ConfigError("minimum weight must be in (0, 1]");
  if (!(max_relative_jump > 0.0)) throw ConfigError("depth jump threshold must be positive");
}

std::vector<std::uint8_t> usable_pixels(const DepthFrame& frame, const DepthSampleConfig& config) {
  std::vector<std::uint8_t> mask(frame.depth.size(), 0);
  for (int v = 1; v + 1 < frame.height; ++v) {
    if (v % config.pixel_stride != 0) continue;
    for (int u = 1; u + 1 < frame.width; ++u) {
      if (u % config.pixel_stride != 0) continue;
      const double z = frame.at(u, v);
      if (z <= 0.0) continue;
      bool ok = true;
      for (auto [du, dv] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
        const double zn = frame.at(u + du, v + dv);
        if (zn <= 0.0 || std::abs(zn - z) > config.max_relative_jump * z) ok = false;
      }
      if (ok && depth_normal(frame, u, v).isZero()) ok = false;
      mask[static_cast<std::size_t>(v) * frame.width + u] = ok ? 1 : 0;
    }
  }
  return mask;
}

Vec3 depth_normal(const DepthFrame& frame, int u, int v) {
  const Vec3 px = frame.backproject(u + 1, v, frame.at(u + 1, v)) - frame.backproject(u - 1, v, frame.at(u - 1, v));
  const Vec3 py = frame.backproject(u, v + 1, frame.at(u, v + 1)) - frame.backproject(u, v - 1, frame.at(u, v - 1));
  Vec3 n = px.cross(py);
  const double len = n.norm();
  if (!(len > 0.0)) return Vec3::Zero();
  n /= len;
  const Vec3 p = frame.backproject(u, v, frame.at(u, v));
  if (n.dot(frame.pose().translation - p) < 0.0) n = -n;
  return n;
}

std::vector<SdfSample> samples_from_depth(const DepthFrame& frame, const DepthSampleConfig& config) {
  frame.validate();
  config.validate();
  const auto mask = usable_pixels(frame, config);
  const RigidTransform pose = frame.pose();
  std::vector<SdfSample> out;
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      if (!mask[static_cast<std::size_t>(v) * frame.width + u]) continue;
      const double z = frame.at(u, v);
      const Vec3 n = depth_normal(frame, u, v);
      const Vec3 p = frame.backproject(u, v, z);
      const double w = weight_for_depth(z, config.z_ref, config.w_min);
      out.push_back({p, 0.0, w});
      out.push_back({p + config.displacement * n, config.displacement, w});
      out.push_back({p - config.displacement * n, -config.displacement, w});
      const Vec3 to_camera = pose.translation - p;
      const double range = to_camera.norm();
      const Vec3 dir = to_camera / range;
      for (int s = 0; s < config.free_space_per_ray; ++s) {
        const double dist = config.truncation + s * config.free_space_step;
        if (dist >= range) break;
        out.push_back({p + dist * dir, std::min(dist, config.truncation), w});
      }
    }
  }
  return out;
}

namespace {

std::vector<double> default_sigmas(const SurfaceSampleConfig& config, double diagonal) {
  if (!config.sigmas.empty()) {
    for (double s : config.sigmas)
      if (!(s > 0.0)) throw ConfigError("perturbation scales must be positive");
    return config.sigmas;
  }
  return {0.005 * diagonal, 0.0005 * diagonal};
}

template <typename SdfFn>
std::vector<SdfSample> perturb_and_evaluate(const std::vector<Vec3>& surface, const Aabb& bounds,
                                            const SurfaceSampleConfig& config, std::mt19937_64& rng,
                                            SdfFn&& sdf) {
  const double diag = bounds.diagonal();
  const auto sigmas = default_sigmas(config, diag);
  const Aabb box = bounds.padded(config.pad_fraction * diag);
  std::vector<SdfSample> out;
  out.reserve(surface.size() + config.n_uniform);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < surface.size(); ++i) {
    const double s = sigmas[i % sigmas.size()];
    const Vec3 p = surface[i] + s * Vec3(normal(rng), normal(rng), normal(rng));
    out.push_back({p, sdf(p), 1.0});
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < config.n_uniform; ++i) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p(a) = box.lo(a) + uni(rng) * (box.hi(a) - box.lo(a));
    out.push_back({p, sdf(p), 1.0});
  }
  for (auto& smp : out) smp.sdf = std::clamp(smp.sdf, -config.truncation, config.truncation);
  return out;
}

}  // namespace

std::vector<SdfSample> sample_mesh(const MeshDistance& mesh, const SurfaceSampleConfig& config) {
  std::mt19937_64 rng(config.seed);
  const auto surface = sample_surface(mesh.mesh(), config.n_surface, rng);
  return perturb_and_evaluate(surface, mesh.mesh().bounds(), config, rng,
                              [&](const Vec3& p) { return mesh.signed_distance(p); });
}

std::vector<SdfSample> sample_mesh(const TriangleMesh& mesh, const SurfaceSampleConfig& config) {
  if (mesh.triangles.empty()) throw DataError("cannot sample an empty mesh");
  if (config.n_surface == 0 && config.n_uniform == 0) return {};
  return sample_mesh(MeshDistance(mesh), config);
}

TriangleMesh primitive_mesh(std::span<const PrimitiveShape> scene, double step) {
  if (scene.empty()) throw DataError("primitive scene is empty");
  const Aabb box = scene_bounds(scene).padded(2.0 * step);
  ExtractionConfig cfg;
  cfg.resolution = step;
  std::vector<PrimitiveShape> shapes(scene.begin(), scene.end());
  return extract(pointwise_source([shapes](const Vec3& p) { return scene_sdf(shapes, p); }), box, cfg);
}

std::vector<SdfSample> sample_primitives(std::span<const PrimitiveShape> scene,
                                         const SurfaceSampleConfig& config, double tessellation_step) {
  if (scene.empty()) throw DataError("primitive scene is empty");
  if (!(tessellation_step > 0.0)) throw ConfigError("tessellation step must be positive");
  std::mt19937_64 rng(config.seed);
  const TriangleMesh mesh = primitive_mesh(scene, tessellation_step);
  auto surface = sample_surface(mesh, config.n_surface, rng);
  // One Newton projection onto the exact zero level set.
  const double h = 1e-6 * std::max(1.0, scene_bounds(scene).diagonal());
  for (auto& p : surface) {
    for (int it = 0; it < 2; ++it) {
      const double d = scene_sdf(scene, p);
      Vec3 g;
      for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e(a) = h;
        g(a) = (scene_sdf(scene, p + e) - scene_sdf(scene, p - e)) / (2.0 * h);
      }
      const double gn = g.squaredNorm();
      if (gn > 1e-12) p -= d * g / gn;
    }
  }
  return perturb_and_evaluate(surface, scene_bounds(scene), config, rng,
                              [&](const Vec3& p) { return scene_sdf(scene, p); });
}

std::vector<Vec3> positions_of(std::span<const SdfSample> samples) {
  std::vector<Vec3> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.position);
  return out;
}

std::vector<Vec3> near_surface_positions(std::span<const SdfSample> samples, double band) {
  std::vector<Vec3> out;
  for (const auto& s : samples)
    if (std::abs(s.sdf) <= band) out.push_back(s.position);
  return out;
}

}  // namespace deepls
