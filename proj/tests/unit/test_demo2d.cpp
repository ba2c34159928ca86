#include "deepls/demo2d.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace deepls;

namespace {

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Distance to the outline, negative inside a counter-clockwise polygon.
double polygon_sdf(const Vec2& p, const std::vector<Vec2>& poly) {
  double d = std::numeric_limits<double>::infinity();
  bool inside = true;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    d = std::min(d, segment_distance(p, a, b));
    inside = inside && cross(b - a, p - a) > 0.0;
  }
  return inside ? -d : d;
}

std::vector<Vec2> rectangle_corners(const Shape2D& s) {
  const Eigen::Rotation2D<double> rot(s.angle);
  std::vector<Vec2> out;
  for (const Vec2& c : {Vec2(-1, -1), Vec2(1, -1), Vec2(1, 1), Vec2(-1, 1)})
    out.push_back(s.center + rot * Vec2(c.cwiseProduct(s.half_size)));
  return out;
}

}  // namespace

TEST_CASE("shape distances match polygon and circle oracles") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  Shape2D circle;
  circle.kind = Shape2DKind::circle;
  circle.center = Vec2(2, -1);
  circle.half_size = Vec2(5, 5);
  Shape2D rect;
  rect.kind = Shape2DKind::rectangle;
  rect.center = Vec2(-3, 4);
  rect.half_size = Vec2(6, 2.5);
  rect.angle = 0.7;
  Shape2D tri;
  tri.kind = Shape2DKind::triangle;
  tri.corners = {Vec2(0, 0), Vec2(10, 1), Vec2(3, 8)};
  const std::vector<Vec2> tri_poly(tri.corners.begin(), tri.corners.end());
  const auto rect_poly = rectangle_corners(rect);
  for (int n = 0; n < 2000; ++n) {
    const Vec2 p(u(rng), u(rng));
    CHECK(circle.sdf(p) == doctest::Approx((p - circle.center).norm() - 5.0).epsilon(1e-12));
    CHECK(std::abs(tri.sdf(p) - polygon_sdf(p, tri_poly)) < 1e-9);
    CHECK(std::abs(rect.sdf(p) - polygon_sdf(p, rect_poly)) < 1e-9);
  }
  Scene2D scene;
  scene.shapes = {circle, tri};
  const Vec2 q(1, 1);
  CHECK(scene.sdf(q) == std::min(circle.sdf(q), tri.sdf(q)));
  CHECK(std::isinf(Scene2D{}.sdf(q)));
}

TEST_CASE("scenes and samples are deterministic") {
  Scene2DConfig sc;
  sc.seed = 9;
  const Scene2D a = make_scene2d(sc), b = make_scene2d(sc);
  REQUIRE(a.shapes.size() == 3);
  const CellGrid2D grid{8.0, 8, 8};
  const auto sa = sample_cells(a, grid, 10, 4), sb = sample_cells(b, grid, 10, 4);
  REQUIRE(sa.size() == 640);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].position == sb[i].position);
    CHECK(sa[i].sdf == sb[i].sdf);
    CHECK(sa[i].sdf == a.sdf(sa[i].position));
  }
  // Row-major: the first cell's samples come first.
  for (int i = 0; i < 10; ++i) CHECK(grid.containing(sa[static_cast<std::size_t>(i)].position) == std::array<int, 2>{0, 0});
  sc.shapes = 0;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
}

TEST_CASE("cell grid geometry") {
  const CellGrid2D grid{8.0, 4, 3};
  CHECK(grid.center(0, 0) == Vec2(4, 4));
  CHECK(grid.center(3, 2) == Vec2(28, 20));
  CHECK(grid.containing(Vec2(8.0, 0.5)) == std::array<int, 2>{1, 0});
  CHECK(grid.containing(Vec2(-3, 100)) == std::array<int, 2>{0, 2});
}

TEST_CASE("planar patches use half-open squares in cell units") {
  const CellGrid2D grid{8.0, 4, 4};
  std::vector<PlanarSample> samples;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 32.0);
  for (int n = 0; n < 3000; ++n) samples.push_back({Vec2(u(rng), u(rng)), u(rng) - 16.0});
  samples.push_back({Vec2(12.0 - 8.0, 12.0), 0.0});   // on the lower face of cell (1,1) at radius 1
  samples.push_back({Vec2(12.0 + 8.0, 12.0), 0.0});   // on the upper face: excluded
  for (double r : {0.5, 1.0, 1.5}) {
    const auto patch = planar_patch(grid, 1, 1, samples, r, 2.0);
    std::size_t expected = 0;
    for (const auto& s : samples) {
      const Vec2 d = s.position - grid.center(1, 1);
      if ((d.array() >= -r * 8.0).all() && (d.array() < r * 8.0).all()) ++expected;
    }
    CHECK(static_cast<std::size_t>(patch.size()) == expected);
    for (Eigen::Index j = 0; j < patch.size(); ++j) {
      CHECK(patch.positions.col(j).cwiseAbs().maxCoeff() <= r + 1e-6);
      CHECK(std::abs(patch.sdf(j)) <= 2.0F);
    }
  }
}

TEST_CASE("contour rendering and PGM output") {
  const std::vector<double> sdf{-2.0, 0.0, 2.0, std::nan("")};
  const auto px = render_contour(sdf, 2, 2, 1.0);
  REQUIRE(px.size() == 4);
  // The pixel before a sign change (rightwards or downwards) is black.
  CHECK(px[0] == 0);
  CHECK(px[1] == 128);
  CHECK(px[2] == 228);
  CHECK(px[3] == 255);
  const auto path = (std::filesystem::temp_directory_path() / "deepls_contour.pgm").string();
  save_pgm(path, px, 2, 2);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  CHECK(magic == "P5");
  CHECK(w == 2);
  CHECK(h == 2);
  CHECK(maxval == 255);
}

TEST_CASE("a tiny sweep yields one finite row per radius") {
  Demo2DConfig cfg;
  cfg.scene.width = cfg.scene.height = 32.0;
  cfg.scene.shapes = 2;
  cfg.scene.min_size = 4.0;
  cfg.scene.max_size = 8.0;
  cfg.train_scenes = 2;
  cfg.train_samples_per_cell = 60;
  cfg.test_samples_per_cell = 30;
  cfg.eval_samples_per_cell = 20;
  cfg.radii = {1.0, 1.5};
  cfg.decoder.hidden_dim = 16;
  cfg.decoder.code_dim = 4;
  cfg.train.steps = 60;
  cfg.train.batch_voxels = 8;
  cfg.train.samples_per_voxel = 32;
  cfg.encode.iterations = 20;
  int calls = 0;
  const auto result = run_demo2d(cfg, [&](const Demo2DRow&) { ++calls; });
  REQUIRE(result.rows.size() == 2);
  CHECK(calls == 2);
  for (const auto& row : result.rows) {
    CHECK(std::isfinite(row.test_error));
    CHECK(row.test_error >= 0.0);
    CHECK(std::isfinite(row.border_error));
    CHECK(row.eval_points > 0);
    CHECK(row.train_patches > 0);
  }
  CHECK(result.rows[0].radius == 1.0);
  CHECK(result.predicted.size() == 2);
  CHECK(result.predicted[0].size() == 32u * 32u);
}
