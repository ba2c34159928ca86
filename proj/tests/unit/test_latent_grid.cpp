#include "deepls/latent_grid.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

using namespace deepls;

namespace {

std::vector<Vec3> uniform_points(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

}  // namespace

TEST_CASE("allocation examples") {
  LatentGrid grid(Vec3::Zero(), 1.0, 4);
  SUBCASE("single point at the origin") {
    const std::vector<Vec3> pts{Vec3::Zero()};
    CHECK(grid.allocate(pts, 1) == 1);
    REQUIRE(grid.size() == 1);
    CHECK(grid.indices()[0] == VoxelIndex{0, 0, 0});
  }
  SUBCASE("two points in one voxel") {
    const std::vector<Vec3> pts{Vec3(0.1, 0.2, 0.3), Vec3(0.9, 0.5, 0.01)};
    grid.allocate(pts, 1);
    CHECK(grid.size() == 1);
  }
  SUBCASE("empty input allocates nothing") {
    CHECK(grid.allocate(std::vector<Vec3>{}, 1) == 0);
    CHECK(grid.empty());
  }
}

TEST_CASE("allocation count equals brute-force quantization") {
  const double v = 0.37;
  const Vec3 origin(-0.2, 0.1, 0.05);
  LatentGrid grid(origin, v, 3);
  const auto pts = uniform_points(1000, 0.0, 10 * v, 17);
  grid.allocate(pts, 5);
  std::set<std::tuple<long, long, long>> cells;
  for (const auto& p : pts) {
    const Vec3 q = (p - origin) / v;
    cells.insert({static_cast<long>(std::floor(q.x())), static_cast<long>(std::floor(q.y())),
                  static_cast<long>(std::floor(q.z()))});
  }
  CHECK(grid.size() == cells.size());
  for (const auto& idx : grid.indices()) CHECK(cells.count({idx.i, idx.j, idx.k}) == 1);
}

TEST_CASE("allocation is idempotent and independent of point order") {
  auto pts = uniform_points(300, -2.0, 2.0, 3);
  LatentGrid a(Vec3::Zero(), 0.5, 6), b(Vec3::Zero(), 0.5, 6);
  a.allocate(pts, 9);
  const MatrixX<Real> first = a.codes();
  CHECK(a.allocate(pts, 9) == 0);
  CHECK(a.codes() == first);
  std::reverse(pts.begin(), pts.end());
  b.allocate(pts, 9);
  CHECK(a.indices() == b.indices());
  CHECK(a.codes() == b.codes());
}

TEST_CASE("codes are initialized with small Gaussian entries") {
  LatentGrid grid(Vec3::Zero(), 1.0, 50);
  grid.allocate(uniform_points(400, 0.0, 8.0, 2), 4);
  const auto& c = grid.codes();
  const double mean = c.cast<double>().mean();
  const double var = (c.cast<double>().array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.002);
  CHECK(std::sqrt(var) == doctest::Approx(kCodeInitStd).epsilon(0.05));
}

TEST_CASE("dilation adds a one-voxel shell") {
  LatentGrid grid(Vec3::Zero(), 1.0, 2);
  const std::vector<Vec3> pts{Vec3(0.5, 0.5, 0.5)};
  grid.allocate(pts, 1, 1);
  CHECK(grid.size() == 27);
}

TEST_CASE("local coordinates") {
  LatentGrid grid(Vec3(0.3, -0.2, 1.0), 0.25, 2);
  const VoxelIndex idx{2, -3, 5};
  const Vec3 c = grid.center(idx);
  CHECK((c - Vec3(0.3 + 2.5 * 0.25, -0.2 - 2.5 * 0.25, 1.0 + 5.5 * 0.25)).norm() < 1e-15);
  CHECK(grid.to_local(idx, c).norm() == 0.0);
  const Vec3 corner = grid.origin() + 0.25 * Vec3(2, -3, 5);
  CHECK((grid.to_local(idx, corner) - Vec3::Constant(-0.125)).norm() < 1e-15);
  CHECK((grid.to_decoder(idx, corner) - Vec3::Constant(-0.5)).norm() < 1e-14);
  const auto pts = uniform_points(100, -5.0, 5.0, 8);
  for (const auto& p : pts) CHECK((grid.to_world(idx, grid.to_local(idx, p)) - p).norm() < 1e-12);
}

TEST_CASE("a voxel-center point sees the 3x3x3 neighbourhood at factor 1.5") {
  // Oracle: enumerate every allocated center and test |delta|_inf < 1.5 v.
  LatentGrid grid(Vec3::Zero(), 1.0, 2);
  std::vector<Vec3> pts;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j)
      for (int k = -3; k <= 3; ++k) pts.emplace_back(i + 0.5, j + 0.5, k + 0.5);
  grid.allocate(pts, 1);
  const Vec3 q = grid.center({0, 0, 0});
  std::vector<VoxelIndex> expected;
  for (const auto& idx : grid.indices())
    if ((grid.center(idx) - q).cwiseAbs().maxCoeff() < 1.5) expected.push_back(idx);
  CHECK(expected.size() == 27);
  CHECK(grid.voxels_for_sample(q) == expected);
  CHECK(grid.voxels_for_sample(q, 0.5) == std::vector<VoxelIndex>{{0, 0, 0}});
  CHECK(grid.voxels_for_sample(Vec3(40, 0, 0)).empty());
}

TEST_CASE("receptive field membership matches a brute-force scan") {
  LatentGrid grid(Vec3(0.1, 0.0, -0.3), 0.5, 2);
  grid.allocate(uniform_points(200, -2.0, 2.0, 21), 1);
  for (double f : {0.5, 1.0, 1.25, 1.5, 2.0}) {
    for (const auto& q : uniform_points(200, -3.0, 3.0, 22)) {
      std::vector<VoxelIndex> expected;
      for (const auto& idx : grid.indices()) {
        const Vec3 d = (q - grid.center(idx)) / grid.voxel_size();
        if ((d.array() >= -f).all() && (d.array() < f).all()) expected.push_back(idx);
      }
      CHECK(grid.voxels_for_sample(q, f) == expected);
    }
  }
}

TEST_CASE("larger factors give supersets") {
  LatentGrid grid(Vec3::Zero(), 1.0, 2);
  grid.allocate(uniform_points(300, -4.0, 4.0, 5), 1);
  for (const auto& q : uniform_points(100, -5.0, 5.0, 6)) {
    const auto small = grid.voxels_for_sample(q, 1.0);
    const auto large = grid.voxels_for_sample(q, 1.5);
    CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
  }
}

TEST_CASE("queries use the containing voxel with half-open faces") {
  LatentGrid grid(Vec3::Zero(), 1.0, 2);
  const std::vector<Vec3> pts{Vec3(0.5, 0.5, 0.5), Vec3(1.5, 0.5, 0.5)};
  grid.allocate(pts, 1);
  CHECK(grid.voxel_for_query(Vec3(0.2, 0.3, 0.4)) == VoxelIndex{0, 0, 0});
  CHECK_FALSE(grid.voxel_for_query(Vec3(5, 5, 5)).has_value());
  // On the shared face x = 1 the larger index wins.
  CHECK(grid.voxel_for_query(Vec3(1.0, 0.5, 0.5)) == VoxelIndex{1, 0, 0});
  CHECK(grid.voxel_for_query(Vec3(0.0, 0.5, 0.5)) == VoxelIndex{0, 0, 0});
  CHECK_FALSE(grid.voxel_for_query(Vec3(2.0, 0.5, 0.5)).has_value());
}

TEST_CASE("partition: the query voxel is among the sample voxels") {
  LatentGrid grid(Vec3::Zero(), 0.7, 2);
  grid.allocate(uniform_points(500, -3.0, 3.0, 31), 1);
  for (const auto& q : uniform_points(2000, -3.0, 3.0, 32)) {
    const auto hit = grid.voxel_for_query(q);
    if (!hit) continue;
    const auto field = grid.voxels_for_sample(q, 0.5);
    CHECK(field == std::vector<VoxelIndex>{*hit});
    const auto wide = grid.voxels_for_sample(q);
    CHECK(std::find(wide.begin(), wide.end(), *hit) != wide.end());
  }
}

TEST_CASE("assign_samples lists members per slot") {
  LatentGrid grid(Vec3::Zero(), 1.0, 2);
  grid.allocate(uniform_points(50, 0.0, 3.0, 41), 1);
  const auto pts = uniform_points(300, -1.0, 4.0, 42);
  const auto members = assign_samples(grid, pts);
  REQUIRE(members.size() == grid.size());
  std::size_t total = 0, expected = 0;
  for (const auto& m : members) total += m.size();
  for (const auto& p : pts) expected += grid.slots_for_sample(p).size();
  CHECK(total == expected);
}

TEST_CASE("bounds are the union of voxel cubes") {
  LatentGrid grid(Vec3::Zero(), 0.5, 2);
  CHECK(grid.bounds().empty());
  const std::vector<Vec3> pts{Vec3(0.1, 0.1, 0.1), Vec3(1.2, -0.3, 0.7)};
  grid.allocate(pts, 1);
  const Aabb b = grid.bounds();
  CHECK((b.lo - Vec3(0.0, -0.5, 0.0)).norm() < 1e-15);
  CHECK((b.hi - Vec3(1.5, 0.5, 1.0)).norm() < 1e-15);
}

TEST_CASE("invalid grids are rejected") {
  CHECK_THROWS_AS(LatentGrid(Vec3::Zero(), 0.0, 2), ConfigError);
  CHECK_THROWS_AS(LatentGrid(Vec3::Zero(), 1.0, 0), ConfigError);
}
