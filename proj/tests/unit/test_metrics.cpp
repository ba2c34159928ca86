#include "deepls/metrics.hpp"
#include "deepls/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace deepls;

namespace {

std::vector<Vec3> cloud(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

double brute_one_way(std::span<const Vec3> from, std::span<const Vec3> to, bool squared) {
  double sum = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
    sum += squared ? best : std::sqrt(best);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

TEST_CASE("chamfer examples") {
  const std::vector<Vec3> a{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK(chamfer(a, a) == 0.0);
  const std::vector<Vec3> p{Vec3::Zero()}, q{Vec3(1, 0, 0)};
  CHECK(chamfer(p, q) == 2.0);
  CHECK(chamfer(p, q, ChamferConvention::linear) == 2.0);
  const std::vector<Vec3> r{Vec3(2, 0, 0)};
  CHECK(chamfer(p, r) == 8.0);
  CHECK(chamfer(p, r, ChamferConvention::linear) == 4.0);
  CHECK_THROWS_AS(chamfer(std::vector<Vec3>{}, a), DataError);
}

TEST_CASE("chamfer equals a brute-force double loop and is symmetric") {
  const auto a = cloud(500, 1), b = cloud(400, 2, 1.2);
  const double sq = brute_one_way(a, b, true) + brute_one_way(b, a, true);
  const double lin = brute_one_way(a, b, false) + brute_one_way(b, a, false);
  CHECK(chamfer(a, b) == doctest::Approx(sq).epsilon(1e-12));
  CHECK(chamfer(a, b, ChamferConvention::linear) == doctest::Approx(lin).epsilon(1e-12));
  CHECK(chamfer(a, b) == doctest::Approx(chamfer(b, a)).epsilon(1e-12));
}

TEST_CASE("chamfer is invariant under a rigid motion of both sets") {
  std::mt19937_64 rng(3);
  const RigidTransform t = RigidTransform::random_rotation(rng) * RigidTransform::translation_only(Vec3(1, -2, 0.5));
  auto a = cloud(300, 4), b = cloud(300, 5);
  const double before = chamfer(a, b);
  for (auto& p : a) p = t.apply(p);
  for (auto& p : b) p = t.apply(p);
  CHECK(chamfer(a, b) == doctest::Approx(before).epsilon(1e-9));
}

TEST_CASE("nearest-rank percentile") {
  std::vector<double> v(100, 0.0);
  for (int i = 0; i < 10; ++i) v[static_cast<std::size_t>(i)] = 1.0;
  CHECK(nearest_rank_percentile(v, 90.0) == 0.0);
  CHECK(nearest_rank_percentile(v, 91.0) == 1.0);
  CHECK(nearest_rank_percentile({5.0, 1.0, 3.0}, 50.0) == 3.0);
  CHECK(nearest_rank_percentile({5.0, 1.0, 3.0}, 100.0) == 5.0);
  CHECK_THROWS(nearest_rank_percentile({}, 50.0));
  CHECK_THROWS(nearest_rank_percentile({1.0}, 0.0));
}

TEST_CASE("accuracy is the 90th percentile of prediction-to-truth distances") {
  std::vector<Vec3> gt, pred;
  for (int i = 0; i < 100; ++i) gt.emplace_back(0.01 * i, 0, 0);
  for (int i = 0; i < 100; ++i) pred.emplace_back(0.01 * i, i < 95 ? 0.002 : 0.5, 0);
  CHECK(mesh_accuracy(pred, gt) == doctest::Approx(0.002).epsilon(1e-9));
}

TEST_CASE("completion counts gt points near the prediction") {
  // Points straddling a 7 mm threshold.
  const std::vector<Vec3> gt{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const std::vector<Vec3> pred{Vec3(0.0069, 0, 0), Vec3(1.0071, 0, 0)};
  CHECK(completion(gt, pred, 0.007) == 0.5);
  CHECK(completion(gt, std::vector<Vec3>{}, 0.007) == 0.0);
  CHECK_THROWS_AS(completion(std::vector<Vec3>{}, pred, 0.007), DataError);
  const auto a = cloud(400, 6), b = cloud(300, 7);
  double last = 0.0;
  for (double t : {0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 4.0}) {
    const double c = completion(a, b, t);
    CHECK(c >= last);
    last = c;
  }
  CHECK(last == 1.0);
}

TEST_CASE("relative SDF RMSE") {
  const auto gt = [](const Vec3& p) { return p.norm() - 1.0; };
  const double bias = 0.03, diag = 2.5;
  const auto probes = cloud(200, 8);
  std::size_t used = 0;
  const double e = sdf_rmse_relative([&](const Vec3& p) -> std::optional<double> { return gt(p) + bias; }, gt, probes,
                                     diag, &used);
  CHECK(e == doctest::Approx(bias / diag).epsilon(1e-9));
  CHECK(used == probes.size());
  // Probes without a prediction are skipped.
  const auto partial = [&](const Vec3& p) -> std::optional<double> {
    if (p.x() < 0) return std::nullopt;
    return gt(p);
  };
  CHECK(sdf_rmse_relative(partial, gt, probes, diag, &used) == 0.0);
  CHECK(used < probes.size());
  const std::vector<std::optional<double>> none(3);
  const std::vector<double> zeros(3, 0.0);
  CHECK_THROWS_AS(sdf_rmse_relative(none, zeros, diag), DataError);
  const std::vector<std::optional<double>> vals{1.0, 2.0, std::nullopt};
  CHECK(sdf_rmse_relative(vals, zeros, 1.0) == doctest::Approx(std::sqrt(2.5)));
}

TEST_CASE("evaluate_points handles an empty prediction") {
  const auto gt = cloud(50, 9);
  const auto r = evaluate_points({}, gt, 0.01);
  CHECK_FALSE(r.chamfer_valid);
  CHECK(r.completion == 0.0);
  const auto same = evaluate_points(gt, gt, 0.01);
  CHECK(same.chamfer_valid);
  CHECK(same.chamfer == 0.0);
  CHECK(same.completion == 1.0);
  CHECK(same.accuracy_p90 == 0.0);
}

TEST_CASE("convention names round-trip") {
  CHECK(chamfer_convention_from_string(to_string(ChamferConvention::linear)) == ChamferConvention::linear);
  CHECK(chamfer_convention_from_string("squared") == ChamferConvention::squared);
  CHECK_THROWS(chamfer_convention_from_string("cubic"));
}
