#include "deepls/decoder.hpp"
#include "deepls/training.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace deepls;

namespace {

DecoderConfig small_config(int dim = 3) {
  DecoderConfig c;
  c.dim = dim;
  c.code_dim = 6;
  c.hidden_dim = 16;
  c.num_layers = 3;
  return c;
}

}  // namespace

TEST_CASE("default configuration has 128 network inputs") {
  const auto d = DecoderParams<float>::init(DecoderConfig{}, 1);
  CHECK(d.spec().input_dim == 128);
  CHECK(d.code_dim == 125);
  CHECK(d.truncation == 2.0);
  CHECK(d.tanh_clamp == doctest::Approx(0.9));
  const auto planar = DecoderParams<float>::init(small_config(2), 1);
  CHECK(planar.spec().input_dim == 8);
}

TEST_CASE("target scale solves tanh(s * 2 voxels / truncation) = 0.9") {
  // atanh(0.9) = ln(19) / 2 with truncation = 2 voxels.
  const double frozen = 1.4722194895832204;
  const auto d = DecoderParams<double>::zeros(small_config());
  CHECK(std::abs(d.target_scale() - frozen) < 1e-14);
  CHECK(std::abs(encode_target(2.0, d) - 0.9) < 1e-6);
  CHECK(encode_target(0.0, d) == 0.0);
  CHECK(encode_target(1e6, d) == doctest::Approx(1.0));
  CHECK(encode_target(1e6, d) <= 1.0);

  DecoderConfig wide = small_config();
  wide.truncation = 4.0;
  const auto d4 = DecoderParams<double>::zeros(wide);
  CHECK(std::abs(encode_target(2.0, d4) - 0.9) < 1e-6);
}

TEST_CASE("encode_target is monotone increasing") {
  const auto d = DecoderParams<double>::zeros(small_config());
  double prev = -2.0;
  for (double x = -10.0; x <= 10.0; x += 0.01) {
    const double t = encode_target(x, d);
    CHECK(t > prev);
    prev = t;
  }
}

TEST_CASE("zero network decodes to zero") {
  const auto d = DecoderParams<double>::zeros(small_config());
  VectorX<double> pos = VectorX<double>::Constant(3, 0.3);
  VectorX<double> code = VectorX<double>::Constant(6, 2.0);
  CHECK(decode(d, pos, code) == 0.0);
}

TEST_CASE("decoding inverts encode_target below the knee") {
  const auto d = DecoderParams<double>::zeros(small_config());
  for (double raw : {-1.7, -1.0, -0.2, 0.0, 0.05, 0.9, 1.79}) {
    const double m = std::atanh(encode_target(raw, d));
    CHECK(std::abs(tanh_space_to_sdf(m, d) - raw) < 1e-12);
  }
}

TEST_CASE("decode output stays strictly inside the truncation") {
  const auto d = DecoderParams<double>::zeros(small_config());
  const auto f = DecoderParams<float>::zeros(small_config());
  double prev = -3.0;
  for (double m = -50.0; m <= 50.0; m += 0.01) {
    const double v = tanh_space_to_sdf(m, d);
    CHECK(std::abs(v) < d.truncation);
    CHECK(v >= prev);  // monotone
    prev = v;
    CHECK(std::abs(tanh_space_to_sdf(static_cast<float>(m), f)) < 2.0F);
  }
  CHECK(std::abs(tanh_space_to_sdf(1e30, d)) < d.truncation);
  // Random networks with large weights.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 5.0);
  auto big = DecoderParams<double>::init(small_config(), 2);
  auto flat = big.mlp.flatten();
  for (auto& x : flat) x = n(rng);
  big.mlp.assign(flat);
  for (int t = 0; t < 200; ++t) {
    VectorX<double> pos = VectorX<double>::Random(3);
    VectorX<double> code = 10.0 * VectorX<double>::Random(6);
    CHECK(std::abs(decode(big, pos, code)) < big.truncation);
  }
}

TEST_CASE("batched decode equals per-point decode") {
  const auto d = DecoderParams<double>::init(small_config(), 3);
  MatrixX<double> pos = MatrixX<double>::Random(3, 7);
  VectorX<double> code = VectorX<double>::Random(6);
  const VectorX<double> batch = decode_raw_batch(d, pos, code);
  const auto tape = d.mlp.forward(decoder_inputs(d, pos, code));
  for (int j = 0; j < 7; ++j) CHECK(std::abs(batch(j) - tape.output()(0, j)) < 1e-13);
}

TEST_CASE("code size mismatch is a contract error") {
  const auto d = DecoderParams<double>::init(small_config(), 3);
  VectorX<double> pos = VectorX<double>::Zero(3);
  CHECK_THROWS_AS(decode(d, pos, VectorX<double>(VectorX<double>::Zero(5))), ContractError);
  CHECK_THROWS_AS(decode(d, VectorX<double>(VectorX<double>::Zero(2)), VectorX<double>(VectorX<double>::Zero(6))),
                  ContractError);
}

TEST_CASE("a decoder trained on one flat patch decodes the plane near zero") {
  // Plane z = 0 through the voxel center; samples cover the 1.5x field.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  PatchSamples<Real> patch;
  const int n = 600;
  patch.positions.resize(3, n);
  patch.sdf.resize(n);
  patch.weights = VectorX<Real>::Ones(n);
  for (int j = 0; j < n; ++j) {
    const Vec3 p(u(rng), u(rng), u(rng));
    patch.positions.col(j) = p.cast<Real>();
    patch.sdf(j) = static_cast<Real>(std::clamp(p.z(), -2.0, 2.0));
  }
  PatchDataset data;
  data.patches.push_back(patch);
  data.scene.push_back(0);
  TrainConfig tc;
  tc.steps = 500;
  tc.batch_voxels = 1;
  tc.samples_per_voxel = 600;
  tc.seed = 4;
  DecoderConfig dc = small_config();
  dc.hidden_dim = 32;
  const auto result = train_prior(data, dc, tc);
  const VectorX<Real> code = result.codes.col(0);
  for (double x : {-0.4, 0.0, 0.3})
    for (double y : {-0.4, 0.1, 0.45}) {
      VectorX<Real> pos(3);
      pos << static_cast<Real>(x), static_cast<Real>(y), Real(0);
      CHECK(std::abs(decode(result.decoder, pos, code)) < 0.05 * dc.truncation);
    }
}
