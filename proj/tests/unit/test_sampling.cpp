#include "deepls/sampling.hpp"
#include "deepls/scenes.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace deepls;

namespace {

PrimitiveShape shape(PrimitiveKind kind, Vec3 size, RigidTransform pose = {}) {
  PrimitiveShape s;
  s.kind = kind;
  s.size = size;
  s.pose = pose;
  return s;
}

// Large two-triangle quad at z = 2 facing the -z half space.
TriangleMesh plane_at_z2() {
  TriangleMesh m;
  m.vertices = {Vec3(-10, -10, 2), Vec3(10, -10, 2), Vec3(10, 10, 2), Vec3(-10, 10, 2)};
  m.triangles = {{0, 2, 1}, {0, 3, 2}};
  return m;
}

CameraIntrinsics small_camera() {
  CameraIntrinsics c;
  c.width = 48;
  c.height = 40;
  c.fx = c.fy = 50.0;
  c.cx = 24.0;
  c.cy = 20.0;
  return c;
}

// Nearest distance to the ellipsoid surface by dense parametric search.
double ellipsoid_brute(const Vec3& axes, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  const int n = 1200;
  for (int i = 0; i <= n; ++i) {
    const double th = M_PI * i / n;
    for (int j = 0; j < 2 * n; ++j) {
      const double ph = M_PI * j / n;
      const Vec3 q(axes.x() * std::sin(th) * std::cos(ph), axes.y() * std::sin(th) * std::sin(ph),
                   axes.z() * std::cos(th));
      best = std::min(best, (q - p).norm());
    }
  }
  return best;
}

}  // namespace

TEST_CASE("primitive signed distances") {
  const auto sphere = shape(PrimitiveKind::sphere, Vec3(1, 0, 0));
  CHECK(primitive_sdf(sphere, Vec3(2, 0, 0)) == 1.0);
  CHECK(primitive_sdf(sphere, Vec3::Zero()) == -1.0);

  // Unit box: half extents 0.5; closest point (0.5, 0.5, 0).
  const auto box = shape(PrimitiveKind::box, Vec3::Constant(0.5));
  CHECK(std::abs(primitive_sdf(box, Vec3(0.75, 0.75, 0)) - 0.35355339059327373) < 1e-15);
  CHECK(primitive_sdf(box, Vec3(0.1, 0.0, 0.0)) == doctest::Approx(-0.4));

  const auto cyl = shape(PrimitiveKind::cylinder, Vec3(1.0, 2.0, 0.0));
  CHECK(primitive_sdf(cyl, Vec3(3, 0, 0)) == doctest::Approx(2.0));
  CHECK(primitive_sdf(cyl, Vec3(0, 0, 5)) == doctest::Approx(3.0));
  CHECK(primitive_sdf(cyl, Vec3(4, 0, 6)) == doctest::Approx(5.0));  // rim: hypot(3, 4)
  CHECK(primitive_sdf(cyl, Vec3(0.5, 0, 0)) == doctest::Approx(-0.5));

  const Vec3 axes(1.5, 0.8, 0.5);
  const auto ell = shape(PrimitiveKind::ellipsoid, axes);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int t = 0; t < 6; ++t) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const double brute = ellipsoid_brute(axes, p);
    CHECK(std::abs(std::abs(primitive_sdf(ell, p)) - brute) < 5e-3);
  }
}

TEST_CASE("primitive distances follow the pose") {
  std::mt19937_64 rng(8);
  const RigidTransform pose = RigidTransform::random_rotation(rng) * RigidTransform::translation_only(Vec3(1, 2, 3));
  for (auto kind : {PrimitiveKind::sphere, PrimitiveKind::box, PrimitiveKind::ellipsoid, PrimitiveKind::cylinder}) {
    const auto local = shape(kind, Vec3(0.9, 0.6, 0.4));
    const auto moved = shape(kind, Vec3(0.9, 0.6, 0.4), pose);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int t = 0; t < 50; ++t) {
      const Vec3 p(u(rng), u(rng), u(rng));
      CHECK(std::abs(primitive_sdf(local, p) - primitive_sdf(moved, pose.apply(p))) < 1e-9);
    }
  }
}

TEST_CASE("icosphere samples agree with the analytic sphere") {
  SurfaceSampleConfig cfg;
  cfg.n_surface = 2000;
  cfg.n_uniform = 1000;
  cfg.seed = 4;
  const auto mesh = make_icosphere(Vec3::Zero(), 1.0, 4);
  const auto samples = sample_mesh(mesh, cfg);
  CHECK(samples.size() == 3000);
  for (const auto& s : samples) {
    CHECK(std::abs(s.sdf - (s.position.norm() - 1.0)) < 0.02);
    CHECK(s.weight == 1.0);
  }
  const auto again = sample_mesh(mesh, cfg);
  bool same = true;
  for (std::size_t i = 0; i < samples.size(); ++i)
    same = same && samples[i].position == again[i].position && samples[i].sdf == again[i].sdf;
  CHECK(same);
  cfg.n_surface = cfg.n_uniform = 0;
  CHECK(sample_mesh(mesh, cfg).empty());
  CHECK_THROWS_AS(sample_mesh(TriangleMesh{}, cfg), DataError);
}

TEST_CASE("mesh sample signs agree with ray parity") {
  BlobConfig bc;
  bc.lattice = 48;
  const TriangleMesh blob = make_blob_mesh(bc);
  const MeshDistance dist(blob);
  SurfaceSampleConfig cfg;
  cfg.n_surface = 500;
  cfg.n_uniform = 1500;
  cfg.seed = 2;
  const auto samples = sample_mesh(dist, cfg);
  int checked = 0;
  for (const auto& s : samples) {
    if (std::abs(s.sdf) < 1e-4) continue;  // too close to call by parity
    const bool inside = dist.crossing_count(s.position, Vec3(0.267, 0.535, 0.802)) % 2 == 1;
    CHECK(inside == (s.sdf < 0.0));
    ++checked;
  }
  CHECK(checked > 1500);
}

TEST_CASE("truncation clamps sample values") {
  SurfaceSampleConfig cfg;
  cfg.n_uniform = 500;
  cfg.truncation = 0.1;
  cfg.pad_fraction = 0.5;
  for (const auto& s : sample_mesh(make_icosphere(Vec3::Zero(), 1.0, 2), cfg)) CHECK(std::abs(s.sdf) <= 0.1);
}

TEST_CASE("ray-cast depth of a sphere matches the analytic intersection") {
  const std::vector<PrimitiveShape> scene{shape(PrimitiveKind::sphere, Vec3(1, 0, 0))};
  const auto cam = small_camera();
  const auto pose = RigidTransform::translation_only(Vec3(0, 0, -3));
  const DepthFrame f = render_depth(scene, cam, pose);
  CHECK(std::abs(f.at(24, 20) - 2.0) < 1e-6);
  int misses = 0;
  for (int v = 0; v < f.height; ++v)
    for (int u = 0; u < f.width; ++u) {
      // |o + z r|^2 = 1 with o = (0, 0, -3), r = (x, y, 1).
      const Vec3 r = f.ray_camera(u, v);
      const double a = r.squaredNorm(), b = 2.0 * (-3.0) * r.z(), c = 9.0 - 1.0;
      const double disc = b * b - 4 * a * c;
      if (disc < 1e-3) {
        if (disc < 0.0) misses += f.at(u, v) == 0.0F;
        continue;
      }
      const double z = (-b - std::sqrt(disc)) / (2 * a);
      CHECK(std::abs(f.at(u, v) - z) < 1e-5);
    }
  CHECK(misses > 0);
  const DepthFrame closer = render_depth(scene, cam, RigidTransform::translation_only(Vec3(0, 0, -2.9)));
  CHECK(std::abs((f.at(24, 20) - closer.at(24, 20)) - 0.1) < 1e-6);
  const DepthFrame empty = render_depth(std::vector<PrimitiveShape>{}, cam, pose);
  CHECK(empty.valid_count() == 0);
}

TEST_CASE("mesh and primitive ray casts agree") {
  const auto mesh = make_icosphere(Vec3::Zero(), 1.0, 5);
  const MeshDistance dist(mesh);
  const auto pose = RigidTransform::translation_only(Vec3(0, 0, -3));
  const DepthFrame f = render_depth(dist, small_camera(), pose);
  CHECK(std::abs(f.at(24, 20) - 2.0) < 2e-3);
}

TEST_CASE("depth weights") {
  CHECK(weight_for_depth(2.0, 2.0) == 1.0);
  CHECK(weight_for_depth(4.0, 2.0) == 0.5);
  CHECK(weight_for_depth(200.0, 2.0) == kMinDepthWeight);
  CHECK(weight_for_depth(0.5, 2.0) == 1.0);
  CHECK_THROWS_AS(weight_for_depth(0.0, 1.0), ContractError);
  CHECK_THROWS_AS(weight_for_depth(-1.0, 1.0), ContractError);
}

TEST_CASE("samples from a head-on plane frame") {
  const MeshDistance plane(plane_at_z2());
  const DepthFrame f = render_depth(plane, small_camera(), RigidTransform{});
  REQUIRE(f.valid_count() == static_cast<std::size_t>(f.width * f.height));
  DepthSampleConfig cfg;
  cfg.displacement = 0.015;
  cfg.truncation = 0.1;
  cfg.free_space_step = 0.05;
  cfg.free_space_per_ray = 3;
  const auto samples = samples_from_depth(f, cfg);
  const auto mask = usable_pixels(f, cfg);
  std::size_t usable = 0;
  for (auto m : mask) usable += m;
  CHECK(usable == static_cast<std::size_t>((f.width - 2) * (f.height - 2)));
  std::size_t zero = 0, plus = 0, minus = 0, free = 0;
  for (const auto& s : samples) {
    CHECK(std::abs(s.sdf) <= cfg.truncation);
    CHECK(s.weight == doctest::Approx(1.0 / s.position.z()).epsilon(0.2));
    if (s.sdf == 0.0) {
      CHECK(std::abs(s.position.z() - 2.0) < 1e-6);
      ++zero;
    } else if (s.sdf == cfg.displacement) {
      CHECK(std::abs(s.position.z() - (2.0 - cfg.displacement)) < 1e-6);
      ++plus;
    } else if (s.sdf == -cfg.displacement) {
      CHECK(std::abs(s.position.z() - (2.0 + cfg.displacement)) < 1e-6);
      ++minus;
    } else {
      CHECK(s.sdf == cfg.truncation);  // beyond one truncation: clamped exactly
      ++free;
    }
  }
  CHECK(zero == usable);
  CHECK(plus == usable);
  CHECK(minus == usable);
  CHECK(free == 3 * usable);
  CHECK(samples.size() == 3 * usable + free);
  const auto again = samples_from_depth(f, cfg);
  CHECK(again.size() == samples.size());
}

TEST_CASE("zero samples of a rendered convex shape lie on it") {
  const std::vector<PrimitiveShape> scene{shape(PrimitiveKind::ellipsoid, Vec3(1.0, 0.7, 0.5))};
  const auto poses = corner_cameras(Vec3::Zero(), 3.0);
  DepthSampleConfig cfg;
  std::size_t total = 0;
  for (const auto& pose : poses) {
    const auto samples = samples_from_depth(render_depth(scene, small_camera(), pose), cfg);
    for (const auto& s : samples)
      if (s.sdf == 0.0) {
        CHECK(std::abs(scene_sdf(scene, s.position)) < 1e-3 * 2.0);
        ++total;
      }
  }
  CHECK(total > 1000);
}

TEST_CASE("a frame without valid pixels yields no samples") {
  const DepthFrame f = make_frame(small_camera(), RigidTransform{});
  CHECK(samples_from_depth(f, DepthSampleConfig{}).empty());
  DepthFrame bad;
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("depth noise keeps values positive and is seeded") {
  const MeshDistance plane(plane_at_z2());
  DepthFrame a = render_depth(plane, small_camera(), RigidTransform{});
  DepthFrame b = a;
  add_depth_noise(a, 0.03, 5);
  add_depth_noise(b, 0.03, 5);
  CHECK(a.depth == b.depth);
  double sum = 0.0, sq = 0.0;
  for (float d : a.depth) {
    CHECK(d > 0.0F);
    sum += d - 2.0;
    sq += (d - 2.0) * (d - 2.0);
  }
  const double n = static_cast<double>(a.depth.size());
  CHECK(std::sqrt(sq / n - (sum / n) * (sum / n)) == doctest::Approx(0.03).epsilon(0.1));
}
