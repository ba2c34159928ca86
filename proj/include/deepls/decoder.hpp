#pragma once

// Shared local-shape decoder: (voxel-local position, latent code) -> truncated
// SDF. Positions are in voxel units (local offset divided by voxel side), so
// the truncation stored here is also in voxel units; callers multiply by the
// scene voxel size to get scene units.

#include "deepls/common.hpp"
#include "deepls/mlp.hpp"

#include <cstdint>

namespace deepls {

struct DecoderConfig {
  int dim = 3;  // 3 for scenes, 2 for the planar study
  int code_dim = 125;
  int hidden_dim = 128;
  int num_layers = 4;
  double leaky_slope = 0.01;
  double truncation = 2.0;  // voxel units
};

// Distance (voxel units) that tanh-space value `kTanhClamp` covers.
inline constexpr double kTargetCoverage = 2.0;
inline constexpr double kTanhClamp = 0.9;
// Fraction of the truncation over which decoding inverts encode_target exactly.
inline constexpr double kLinearFraction = 0.9;

template <typename T>
struct DecoderParams {
  Mlp<T> mlp;
  int dim = 3;
  int code_dim = 125;
  double truncation = 2.0;
  double tanh_clamp = kTanhClamp;

  static DecoderParams init(const DecoderConfig& config, std::uint64_t seed);
  static DecoderParams zeros(const DecoderConfig& config);

  const MlpSpec& spec() const { return mlp.spec(); }
  /// s with tanh(s * coverage / truncation) = tanh_clamp.
  double target_scale() const;
  void validate() const;
};

/// Scalar decode in voxel units (see tanh_space_to_sdf).
template <typename T>
T decode(const DecoderParams<T>& params, const VectorX<T>& local_pos, const VectorX<T>& code);

/// Map a raw SDF (voxel units) into tanh space: tanh(raw / truncation * s).
template <typename T>
T encode_target(T raw_sdf, const DecoderParams<T>& params);

/// Network output to SDF in voxel units: truncation * m / s (the inverse of
/// encode_target) near the surface, saturating smoothly below the truncation.
template <typename T>
T tanh_space_to_sdf(T mlp_out, const DecoderParams<T>& params);

/// Assemble the network input [positions; code broadcast] (dim+code_dim x n).
template <typename T>
MatrixX<T> decoder_inputs(const DecoderParams<T>& params, const MatrixX<T>& positions,
                          const VectorX<T>& code);

/// Raw network outputs (1 x n) for a batch of positions sharing one code.
/// Splits the first layer so the code contribution is computed once.
template <typename T>
VectorX<T> decode_raw_batch(const DecoderParams<T>& params, const MatrixX<T>& positions,
                            const VectorX<T>& code);

extern template struct DecoderParams<float>;
extern template struct DecoderParams<double>;

}  // namespace deepls
