#pragma once

// Per-voxel objective shared by prior training and code inference:
//   weighted mean |tanh(f(x_j, z)) - encode_target(s_j)| + reg_weight * |z|^2

#include "deepls/common.hpp"
#include "deepls/decoder.hpp"
#include "deepls/mlp.hpp"

#include <span>

namespace deepls {

template <typename T>
struct PatchSamples {
  MatrixX<T> positions;  // dim x n, voxel-local, voxel units
  VectorX<T> sdf;        // raw SDF in voxel units
  VectorX<T> weights;    // (0, 1]

  Eigen::Index size() const { return positions.cols(); }
  bool empty() const { return positions.cols() == 0; }
  PatchSamples subset(std::span<const int> indices) const;
};

template <typename T>
struct PatchGradient {
  T loss = T(0);
  VectorX<T> code_grad;
  MlpGradients<T> decoder_grad;  // empty unless requested
};

template <typename T>
T patch_loss(const DecoderParams<T>& decoder, const VectorX<T>& code,
             const PatchSamples<T>& samples, double reg_weight);

/// Loss and gradients. With `want_decoder_grad` the full tape path is used;
/// otherwise a code-only pass that never forms weight gradients.
template <typename T>
PatchGradient<T> patch_loss_gradient(const DecoderParams<T>& decoder, const VectorX<T>& code,
                                     const PatchSamples<T>& samples, double reg_weight,
                                     bool want_decoder_grad);

/// Mean |tanh-space residual| (weights ignored), for diagnostics.
template <typename T>
T mean_tanh_residual(const DecoderParams<T>& decoder, const VectorX<T>& code,
                     const PatchSamples<T>& samples);

}  // namespace deepls
