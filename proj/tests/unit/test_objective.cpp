#include "deepls/objective.hpp"

#include "gradient_check.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace deepls;

namespace {

DecoderConfig config() {
  DecoderConfig c;
  c.code_dim = 4;
  c.hidden_dim = 10;
  c.num_layers = 3;
  return c;
}

PatchSamples<double> random_patch(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_real_distribution<double> w(0.05, 1.0);
  PatchSamples<double> p;
  p.positions.resize(3, n);
  p.sdf.resize(n);
  p.weights.resize(n);
  for (int j = 0; j < n; ++j) {
    p.positions.col(j) = Vec3(u(rng), u(rng), u(rng));
    p.sdf(j) = u(rng);
    p.weights(j) = w(rng);
  }
  return p;
}

// Weighted mean L1 in tanh space plus the code penalty, written out by hand.
double reference_loss(const DecoderParams<double>& d, const VectorX<double>& code, const PatchSamples<double>& p,
                      double reg) {
  const double s = std::atanh(0.9) * d.truncation / 2.0;
  double num = 0.0, den = 0.0;
  for (int j = 0; j < p.size(); ++j) {
    VectorX<double> x(3 + code.size());
    x << p.positions.col(j), code;
    const double m = d.mlp.forward(x)(0);
    num += p.weights(j) * std::abs(std::tanh(m) - std::tanh(s * p.sdf(j) / d.truncation));
    den += p.weights(j);
  }
  double norm2 = 0.0;
  for (int i = 0; i < code.size(); ++i) norm2 += code(i) * code(i);
  return (den > 0 ? num / den : 0.0) + reg * norm2;
}

}  // namespace

TEST_CASE("zero network, zero code, zero targets give zero loss") {
  const auto d = DecoderParams<double>::zeros(config());
  std::mt19937_64 rng(1);
  auto p = random_patch(rng, 20);
  p.sdf.setZero();
  CHECK(patch_loss(d, VectorX<double>(VectorX<double>::Zero(4)), p, 1e-4) == 0.0);
}

TEST_CASE("zero network against one target t costs |encode_target(t)|") {
  const auto d = DecoderParams<double>::zeros(config());
  PatchSamples<double> p;
  p.positions = MatrixX<double>::Zero(3, 1);
  p.sdf = VectorX<double>::Constant(1, 0.7);
  p.weights = VectorX<double>::Ones(1);
  const VectorX<double> code = VectorX<double>::Zero(4);
  CHECK(std::abs(patch_loss(d, code, p, 1e-4) - std::abs(encode_target(0.7, d))) < 1e-15);
}

TEST_CASE("empty patch costs the regularizer only") {
  const auto d = DecoderParams<double>::init(config(), 2);
  PatchSamples<double> p;
  p.positions.resize(3, 0);
  VectorX<double> code(4);
  code << 1, 2, 0, -1;
  CHECK(patch_loss(d, code, p, 0.5) == doctest::Approx(3.0));
  const auto g = patch_loss_gradient(d, code, p, 0.5, true);
  CHECK((g.code_grad - code).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss matches a straight-line reimplementation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    const auto d = DecoderParams<double>::init(config(), rng());
    const auto p = random_patch(rng, 30);
    const VectorX<double> code = VectorX<double>::Random(4);
    const double got = patch_loss(d, code, p, 1e-2);
    CHECK(got >= 0.0);
    CHECK(std::abs(got - reference_loss(d, code, p, 1e-2)) < 1e-10);
    const auto g = patch_loss_gradient(d, code, p, 1e-2, true);
    CHECK(std::abs(g.loss - got) < 1e-12);
  }
}

TEST_CASE("analytic gradients match central differences on 100 configurations") {
  double worst = 0.0, code_path = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = testing::check_objective_gradient(seed);
    worst = std::max(worst, r.max_rel_error);
    code_path = std::max(code_path, r.code_only_error);
  }
  CHECK(worst < 1e-4);
  CHECK(code_path < 1e-12);
}

TEST_CASE("decoder gradient of a batch is the sum of per-voxel gradients") {
  std::mt19937_64 rng(13);
  const auto d = DecoderParams<double>::init(config(), 5);
  std::vector<PatchSamples<double>> patches;
  std::vector<VectorX<double>> codes;
  for (int v = 0; v < 3; ++v) {
    patches.push_back(random_patch(rng, 8 + v));
    codes.push_back(VectorX<double>::Random(4));
  }
  // Sequential accumulation oracle.
  auto summed = MlpGradients<double>::zeros(d.spec());
  for (int v = 0; v < 3; ++v) summed += patch_loss_gradient(d, codes[v], patches[v], 1e-4, true).decoder_grad;
  // Total-loss finite differences.
  auto flat = d.mlp.flatten();
  auto probe = d;
  const auto analytic = flatten(summed);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); i += 7) {
    auto p = flat;
    double total[2];
    for (int side = 0; side < 2; ++side) {
      p[i] = flat[i] + (side == 0 ? h : -h);
      probe.mlp.assign(p);
      total[side] = 0.0;
      for (int v = 0; v < 3; ++v) total[side] += patch_loss(probe, codes[v], patches[v], 1e-4);
    }
    worst = std::max(worst, testing::relative_error(analytic[i], (total[0] - total[1]) / (2 * h)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("uniform weight rescaling leaves the loss unchanged") {
  std::mt19937_64 rng(3);
  const auto d = DecoderParams<double>::init(config(), 9);
  auto p = random_patch(rng, 10);
  const VectorX<double> code = VectorX<double>::Random(4);
  auto q = p;
  q.weights *= 3.0;
  CHECK(std::abs(patch_loss(d, code, p, 0.0) - patch_loss(d, code, q, 0.0)) < 1e-12);
  const auto sub = p.subset(std::vector<int>{0, 3, 5});
  CHECK(sub.size() == 3);
  CHECK(sub.sdf(1) == p.sdf(3));
}

TEST_CASE("mismatched shapes are contract errors") {
  const auto d = DecoderParams<double>::init(config(), 9);
  std::mt19937_64 rng(3);
  auto p = random_patch(rng, 5);
  CHECK_THROWS_AS(patch_loss(d, VectorX<double>(VectorX<double>::Zero(3)), p, 0.0), ContractError);
  p.weights.resize(4);
  CHECK_THROWS_AS(patch_loss(d, VectorX<double>(VectorX<double>::Zero(4)), p, 0.0), ContractError);
}
