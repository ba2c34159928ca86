#pragma once

// Finite-difference check of the per-voxel objective, shared by the unit and
// acceptance tests.

#include "deepls/decoder.hpp"
#include "deepls/objective.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace deepls::testing {

struct GradientCheck {
  double max_rel_error = 0.0;   // decoder parameters and code, full path
  double code_only_error = 0.0; // code-only pass vs full path
  std::size_t components = 0;
};

inline double relative_error(double analytic, double numeric) {
  // Floor keeps components that are zero up to rounding from dominating.
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

/// One random configuration; residuals are kept away from the L1 kink so the
/// central difference sees a smooth function.
inline GradientCheck check_objective_gradient(std::uint64_t seed, double h = 1e-5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  DecoderConfig dc;
  dc.dim = 3;
  dc.code_dim = 5;
  dc.hidden_dim = 8;
  dc.num_layers = 4;
  auto decoder = DecoderParams<double>::init(dc, rng());
  auto flat = decoder.mlp.flatten();
  for (auto& x : flat) x = 0.5 * normal(rng);
  decoder.mlp.assign(flat);
  VectorX<double> code(dc.code_dim);
  for (int i = 0; i < dc.code_dim; ++i) code(i) = normal(rng);

  const int n = 12;
  PatchSamples<double> samples;
  samples.positions.resize(3, n);
  samples.sdf.resize(n);
  samples.weights.resize(n);
  // Positions whose hidden pre-activations sit near a leaky-ReLU kink are
  // redrawn; a central difference straddling a kink measures nothing useful.
  for (int j = 0; j < n; ++j) {
    for (;;) {
      MatrixX<double> x(3, 1);
      for (int r = 0; r < 3; ++r) x(r, 0) = 1.5 * (2.0 * unit(rng) - 1.1);
      const auto tape = decoder.mlp.forward(decoder_inputs(decoder, x, code));
      bool smooth = true;
      for (std::size_t l = 0; l + 1 < tape.pre_activations.size(); ++l)
        smooth = smooth && tape.pre_activations[l].cwiseAbs().minCoeff() > 1e-3;
      if (!smooth) continue;
      samples.positions.col(j) = x.col(0);
      break;
    }
  }
  const VectorX<double> raw = decode_raw_batch(decoder, samples.positions, code);
  for (int j = 0; j < n; ++j) {
    samples.weights(j) = unit(rng);
    double s = 0.0;
    do {
      s = 1.5 * normal(rng);
    } while (std::abs(std::tanh(raw(j)) - encode_target(s, decoder)) < 1e-3);
    samples.sdf(j) = s;
  }
  const double reg = 0.05;

  const auto full = patch_loss_gradient(decoder, code, samples, reg, true);
  const auto code_only = patch_loss_gradient(decoder, code, samples, reg, false);
  GradientCheck out;
  out.code_only_error = (full.code_grad - code_only.code_grad).cwiseAbs().maxCoeff();
  const auto analytic = flatten(full.decoder_grad);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    auto p = flat;
    p[i] = flat[i] + h;
    decoder.mlp.assign(p);
    const double plus = patch_loss(decoder, code, samples, reg);
    p[i] = flat[i] - h;
    decoder.mlp.assign(p);
    const double minus = patch_loss(decoder, code, samples, reg);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[i], (plus - minus) / (2 * h)));
    ++out.components;
  }
  decoder.mlp.assign(flat);
  for (int i = 0; i < dc.code_dim; ++i) {
    VectorX<double> cp = code, cm = code;
    cp(i) += h;
    cm(i) -= h;
    const double fd = (patch_loss(decoder, cp, samples, reg) - patch_loss(decoder, cm, samples, reg)) / (2 * h);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(full.code_grad(i), fd));
    ++out.components;
  }
  return out;
}

}  // namespace deepls::testing
