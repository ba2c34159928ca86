#include "deepls/meshing.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace deepls;

namespace {

SdfBatchFn sphere_source(double r) {
  return pointwise_source([r](const Vec3& p) { return p.norm() - r; });
}

Aabb cube(double h) { return {Vec3::Constant(-h), Vec3::Constant(h)}; }

}  // namespace

TEST_CASE("sphere extraction lies on the sphere and is closed") {
  ExtractionConfig cfg;
  cfg.resolution = 0.05;
  ExtractionStats stats;
  const auto mesh = extract(sphere_source(0.5), cube(0.8), cfg, nullptr, &stats);
  REQUIRE_FALSE(mesh.empty());
  mesh.validate();
  double worst = 0.0;
  for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - 0.5));
  CHECK(worst < 0.01);
  CHECK(mesh.euler_characteristic() == 2);
  CHECK(mesh.boundary_edge_count() == 0);
  // Outward orientation.
  CHECK(mesh.signed_volume() == doctest::Approx(4.0 / 3.0 * M_PI * 0.125).epsilon(0.02));
  CHECK(stats.cells_emitted == stats.cells_with_crossing);
  CHECK(stats.cells_unavailable == 0);
}

TEST_CASE("triangles never repeat a vertex") {
  ExtractionConfig cfg;
  cfg.resolution = 0.07;
  const auto mesh = extract(
      pointwise_source([](const Vec3& p) { return std::abs(p.x()) + 0.5 * p.y() * p.y() + p.z() * p.z() - 0.3; }),
      cube(0.9), cfg);
  REQUIRE_FALSE(mesh.empty());
  for (const auto& t : mesh.triangles) {
    CHECK(t[0] != t[1]);
    CHECK(t[1] != t[2]);
    CHECK(t[0] != t[2]);
  }
}

TEST_CASE("a field without a zero crossing gives an empty mesh") {
  ExtractionConfig cfg;
  cfg.resolution = 0.1;
  CHECK(extract(pointwise_source([](const Vec3&) { return 1.0; }), cube(1.0), cfg).empty());
  CHECK(extract(pointwise_source([](const Vec3&) { return -1.0; }), cube(1.0), cfg).empty());
  // The iso value itself counts as outside.
  CHECK(extract(pointwise_source([](const Vec3&) { return 0.0; }), cube(1.0), cfg).empty());
}

TEST_CASE("unavailable corners suppress their cells") {
  ExtractionConfig cfg;
  cfg.resolution = 0.05;
  const SdfBatchFn half = [](std::span<const Vec3> pts, std::span<double> values, std::span<std::uint8_t> valid) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
      values[j] = pts[j].norm() - 0.5;
      valid[j] = pts[j].z() > 0.0 ? 1 : 0;
    }
  };
  ExtractionStats stats;
  const auto mesh = extract(half, cube(0.8), cfg, nullptr, &stats);
  REQUIRE_FALSE(mesh.empty());
  CHECK(stats.cells_unavailable > 0);
  for (const auto& v : mesh.vertices) CHECK(v.z() > 0.0);
}

TEST_CASE("a tighter mask keeps a subset of the cells") {
  ExtractionConfig cfg;
  cfg.resolution = 0.05;
  std::vector<Vec3> observed;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    Vec3 d(n(rng), n(rng), std::abs(n(rng)));
    observed.push_back(0.5 * d.normalized());
  }
  const PointIndex index(observed);
  const auto full = extract(sphere_source(0.5), cube(0.8), cfg);
  ExtractionStats wide_stats, tight_stats;
  cfg.mask_radius = 0.3;
  const auto wide = extract(sphere_source(0.5), cube(0.8), cfg, &index, &wide_stats);
  cfg.mask_radius = 0.08;
  const auto tight = extract(sphere_source(0.5), cube(0.8), cfg, &index, &tight_stats);
  CHECK(tight.triangles.size() < wide.triangles.size());
  CHECK(wide.triangles.size() <= full.triangles.size());
  CHECK(tight_stats.cells_masked > wide_stats.cells_masked);
  CHECK(tight_stats.cells_emitted <= wide_stats.cells_emitted);
  for (const auto& v : tight.vertices) CHECK(index.nearest_distance(v) < 0.08 + cfg.resolution * std::sqrt(3.0));
  cfg.mask_radius = 0.3;
  CHECK_THROWS_AS(extract(sphere_source(0.5), cube(0.8), cfg), ContractError);
}

TEST_CASE("nearest-point index agrees with brute force") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts(1000);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  const PointIndex index(pts);
  for (int q = 0; q < 100; ++q) {
    const Vec3 probe(1.5 * u(rng), 1.5 * u(rng), 1.5 * u(rng));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) best = std::min(best, (p - probe).squaredNorm());
    const auto hit = index.nearest(probe);
    CHECK(hit.squared_distance == best);
    CHECK((pts[static_cast<std::size_t>(hit.index)] - probe).squaredNorm() == best);
  }
  CHECK(std::isinf(PointIndex{}.nearest_distance(Vec3::Zero())));
}

TEST_CASE("vertices sit on lattice edges with a sign change") {
  ExtractionConfig cfg;
  cfg.resolution = 0.1;
  const auto f = [](const Vec3& p) { return p.x() + 0.3 * p.y() - 0.2 * p.z() - 0.05; };
  const auto mesh = extract(pointwise_source(f), cube(0.5), cfg);
  REQUIRE_FALSE(mesh.empty());
  for (const auto& v : mesh.vertices) {
    // The field is linear, so interpolation is exact.
    CHECK(std::abs(f(v)) < 1e-12);
    // Exactly one coordinate lies off the lattice.
    int off = 0;
    for (int a = 0; a < 3; ++a) {
      const double t = (v(a) + 0.5) / cfg.resolution;
      off += std::abs(t - std::round(t)) > 1e-9 ? 1 : 0;
    }
    CHECK(off <= 1);
  }
}

TEST_CASE("extraction is deterministic") {
  ExtractionConfig cfg;
  cfg.resolution = 0.06;
  const auto a = extract(sphere_source(0.4), cube(0.6), cfg);
  const auto b = extract(sphere_source(0.4), cube(0.6), cfg);
  CHECK(a.vertices == b.vertices);
  CHECK(a.triangles == b.triangles);
}

TEST_CASE("invalid extraction settings") {
  ExtractionConfig cfg;
  cfg.resolution = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
