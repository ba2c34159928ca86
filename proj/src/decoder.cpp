#include "deepls/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace deepls {
namespace {

MlpSpec spec_for(const DecoderConfig& config) {
  if (config.dim != 2 && config.dim != 3) throw ConfigError("decoder dim must be 2 or 3");
  if (config.code_dim <= 0) throw ConfigError("code_dim must be positive");
  if (!(config.truncation > 0.0)) throw ConfigError("truncation must be positive");
  MlpSpec spec;
  spec.input_dim = config.dim + config.code_dim;
  spec.hidden_dim = config.hidden_dim;
  spec.num_layers = config.num_layers;
  spec.output_dim = 1;
  spec.leaky_slope = config.leaky_slope;
  spec.validate();
  return spec;
}

}  // namespace

template <typename T>
DecoderParams<T> DecoderParams<T>::init(const DecoderConfig& config, std::uint64_t seed) {
  DecoderParams p;
  p.mlp = Mlp<T>::init(spec_for(config), seed);
  p.dim = config.dim;
  p.code_dim = config.code_dim;
  p.truncation = config.truncation;
  return p;
}

template <typename T>
DecoderParams<T> DecoderParams<T>::zeros(const DecoderConfig& config) {
  DecoderParams p;
  p.mlp = Mlp<T>::zeros(spec_for(config));
  p.dim = config.dim;
  p.code_dim = config.code_dim;
  p.truncation = config.truncation;
  return p;
}

template <typename T>
double DecoderParams<T>::target_scale() const {
  return std::atanh(tanh_clamp) * truncation / kTargetCoverage;
}

template <typename T>
void DecoderParams<T>::validate() const {
  if (dim != 2 && dim != 3) throw ConfigError("decoder dim must be 2 or 3");
  if (code_dim <= 0) throw ConfigError("code_dim must be positive");
  if (!(truncation > 0.0)) throw ConfigError("truncation must be positive");
  if (mlp.spec().input_dim != dim + code_dim || mlp.spec().output_dim != 1) {
    throw ConfigError("decoder network input must be dim + code_dim with scalar output");
  }
}

template <typename T>
MatrixX<T> decoder_inputs(const DecoderParams<T>& params, const MatrixX<T>& positions,
                          const VectorX<T>& code) {
  if (code.size() != params.code_dim) {
    throw ContractError("code has " + std::to_string(code.size()) + " entries, decoder expects " +
                        std::to_string(params.code_dim));
  }
  if (positions.rows() != params.dim) throw ContractError("position dimension mismatch");
  MatrixX<T> inputs(params.dim + params.code_dim, positions.cols());
  inputs.topRows(params.dim) = positions;
  inputs.bottomRows(params.code_dim) = code.replicate(1, positions.cols());
  return inputs;
}

template <typename T>
VectorX<T> decode_raw_batch(const DecoderParams<T>& params, const MatrixX<T>& positions,
                            const VectorX<T>& code) {
  if (code.size() != params.code_dim) {
    throw ContractError("code has " + std::to_string(code.size()) + " entries, decoder expects " +
                        std::to_string(params.code_dim));
  }
  if (positions.rows() != params.dim) throw ContractError("position dimension mismatch");
  const auto& layers = params.mlp.layers();
  const T slope = static_cast<T>(params.mlp.spec().leaky_slope);
  const auto& w0 = layers[0].weights;
  VectorX<T> shared = layers[0].biases;
  shared.noalias() += w0.rightCols(params.code_dim) * code;
  MatrixX<T> z(w0.rows(), positions.cols());
  z.noalias() = w0.leftCols(params.dim) * positions;
  z.colwise() += shared;
  for (std::size_t l = 1; l < layers.size(); ++l) {
    MatrixX<T> a = (z.array() > T(0)).select(z, slope * z);
    z.resize(layers[l].weights.rows(), a.cols());
    z.noalias() = layers[l].weights * a;
    z.colwise() += layers[l].biases;
  }
  return z.row(0).transpose();
}

template <typename T>
T tanh_space_to_sdf(T mlp_out, const DecoderParams<T>& params) {
  // Exact inverse of encode_target up to kLinearFraction * truncation, then a
  // C1 soft saturation so the result stays strictly inside the truncation.
  const double trunc = params.truncation;
  const double u = trunc * static_cast<double>(mlp_out) / params.target_scale();
  const double knee = kLinearFraction * trunc;
  const double a = std::abs(u);
  if (a <= knee) return static_cast<T>(u);
  const double tail = trunc - knee;
  const T bound = std::nextafter(static_cast<T>(trunc), T(0));
  const T mag = std::min(static_cast<T>(knee + tail * std::tanh((a - knee) / tail)), bound);
  return u < 0.0 ? -mag : mag;
}

template <typename T>
T decode(const DecoderParams<T>& params, const VectorX<T>& local_pos, const VectorX<T>& code) {
  MatrixX<T> pos = local_pos;
  const VectorX<T> out = decode_raw_batch(params, pos, code);
  return tanh_space_to_sdf(out(0), params);
}

template <typename T>
T encode_target(T raw_sdf, const DecoderParams<T>& params) {
  const double s = params.target_scale();
  return static_cast<T>(std::tanh(static_cast<double>(raw_sdf) / params.truncation * s));
}

#define DEEPLS_INSTANTIATE(T)                                                                  \
  template struct DecoderParams<T>;                                                            \
  template T decode(const DecoderParams<T>&, const VectorX<T>&, const VectorX<T>&);            \
  template T encode_target(T, const DecoderParams<T>&);                                        \
  template T tanh_space_to_sdf(T, const DecoderParams<T>&);                                    \
  template MatrixX<T> decoder_inputs(const DecoderParams<T>&, const MatrixX<T>&,               \
                                     const VectorX<T>&);                                       \
  template VectorX<T> decode_raw_batch(const DecoderParams<T>&, const MatrixX<T>&,             \
                                       const VectorX<T>&);

DEEPLS_INSTANTIATE(float)
DEEPLS_INSTANTIATE(double)
#undef DEEPLS_INSTANTIATE

}  // namespace deepls
