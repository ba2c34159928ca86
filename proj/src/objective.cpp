#include "deepls/objective.hpp"

#include <cmath>

namespace deepls {
namespace {

template <typename T>
VectorX<T> encoded_targets(const DecoderParams<T>& decoder, const VectorX<T>& sdf) {
  VectorX<T> t(sdf.size());
  for (Eigen::Index j = 0; j < sdf.size(); ++j) t(j) = encode_target(sdf(j), decoder);
  return t;
}

template <typename T>
void check_samples(const DecoderParams<T>& decoder, const VectorX<T>& code,
                   const PatchSamples<T>& samples) {
  if (code.size() != decoder.code_dim) throw ContractError("code dimension mismatch");
  if (samples.positions.rows() != decoder.dim && samples.size() > 0) {
    throw ContractError("sample dimension mismatch");
  }
  if (samples.sdf.size() != samples.size() || samples.weights.size() != samples.size()) {
    throw ContractError("sample arrays have inconsistent lengths");
  }
}

}  // namespace

template <typename T>
PatchSamples<T> PatchSamples<T>::subset(std::span<const int> indices) const {
  PatchSamples out;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.positions.resize(positions.rows(), n);
  out.sdf.resize(n);
  out.weights.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const int j = indices[static_cast<std::size_t>(k)];
    out.positions.col(k) = positions.col(j);
    out.sdf(k) = sdf(j);
    out.weights(k) = weights(j);
  }
  return out;
}

template <typename T>
T patch_loss(const DecoderParams<T>& decoder, const VectorX<T>& code,
             const PatchSamples<T>& samples, double reg_weight) {
  check_samples(decoder, code, samples);
  const T reg = static_cast<T>(reg_weight) * code.squaredNorm();
  if (samples.empty()) return reg;
  const VectorX<T> raw = decode_raw_batch(decoder, samples.positions, code);
  const VectorX<T> targets = encoded_targets(decoder, samples.sdf);
  const T wsum = samples.weights.sum();
  const T data = (samples.weights.array() * (raw.array().tanh() - targets.array()).abs()).sum() / wsum;
  return data + reg;
}

template <typename T>
PatchGradient<T> patch_loss_gradient(const DecoderParams<T>& decoder, const VectorX<T>& code,
                                     const PatchSamples<T>& samples, double reg_weight,
                                     bool want_decoder_grad) {
  check_samples(decoder, code, samples);
  PatchGradient<T> result;
  const T lambda = static_cast<T>(reg_weight);
  result.loss = lambda * code.squaredNorm();
  result.code_grad = T(2) * lambda * code;
  if (samples.empty()) {
    if (want_decoder_grad) result.decoder_grad = MlpGradients<T>::zeros(decoder.spec());
    return result;
  }
  const Eigen::Index n = samples.size();
  const VectorX<T> targets = encoded_targets(decoder, samples.sdf);
  const T inv_wsum = T(1) / samples.weights.sum();
  const auto& layers = decoder.mlp.layers();
  const T slope = static_cast<T>(decoder.spec().leaky_slope);

  // dLoss/dm_j = w_j / W * sign(y_j - t_j) * (1 - y_j^2) with y = tanh(m).
  auto output_grad = [&](const Eigen::Matrix<T, 1, Eigen::Dynamic>& m) {
    Eigen::Matrix<T, 1, Eigen::Dynamic> g(n);
    T data = T(0);
    for (Eigen::Index j = 0; j < n; ++j) {
      const T y = std::tanh(m(j));
      const T r = y - targets(j);
      const T w = samples.weights(j) * inv_wsum;
      data += w * std::abs(r);
      const T sign = r > T(0) ? T(1) : (r < T(0) ? T(-1) : T(0));
      g(j) = w * sign * (T(1) - y * y);
    }
    result.loss += data;
    return g;
  };

  if (want_decoder_grad) {
    const Tape<T> tape = decoder.mlp.forward(decoder_inputs(decoder, samples.positions, code));
    const MatrixX<T> upstream = output_grad(tape.output().row(0));
    result.decoder_grad = decoder.mlp.backward(tape, upstream, true);
    result.code_grad += result.decoder_grad.input_grad.bottomRows(decoder.code_dim).rowwise().sum();
    result.decoder_grad.input_grad.resize(0, 0);
    return result;
  }

  // Code-only pass: first layer split into position and shared code parts.
  const std::size_t num_layers = layers.size();
  std::vector<MatrixX<T>> pre(num_layers);
  std::vector<MatrixX<T>> act(num_layers - 1);
  const auto& w0 = layers[0].weights;
  VectorX<T> shared = layers[0].biases;
  shared.noalias() += w0.rightCols(decoder.code_dim) * code;
  pre[0].resize(w0.rows(), n);
  pre[0].noalias() = w0.leftCols(decoder.dim) * samples.positions;
  pre[0].colwise() += shared;
  for (std::size_t l = 1; l < num_layers; ++l) {
    act[l - 1] = (pre[l - 1].array() > T(0)).select(pre[l - 1], slope * pre[l - 1]);
    pre[l].resize(layers[l].weights.rows(), n);
    pre[l].noalias() = layers[l].weights * act[l - 1];
    pre[l].colwise() += layers[l].biases;
  }
  MatrixX<T> delta = output_grad(pre.back().row(0));
  for (std::size_t l = num_layers - 1; l >= 1; --l) {
    MatrixX<T> back(layers[l].weights.cols(), n);
    back.noalias() = layers[l].weights.transpose() * delta;
    delta = (pre[l - 1].array() > T(0)).select(back, slope * back);
  }
  const VectorX<T> delta_sum = delta.rowwise().sum();
  result.code_grad.noalias() += w0.rightCols(decoder.code_dim).transpose() * delta_sum;
  return result;
}

template <typename T>
T mean_tanh_residual(const DecoderParams<T>& decoder, const VectorX<T>& code,
                     const PatchSamples<T>& samples) {
  check_samples(decoder, code, samples);
  if (samples.empty()) return T(0);
  const VectorX<T> raw = decode_raw_batch(decoder, samples.positions, code);
  T sum = T(0);
  for (Eigen::Index j = 0; j < raw.size(); ++j) {
    sum += std::abs(std::tanh(raw(j)) - encode_target(samples.sdf(j), decoder));
  }
  return sum / static_cast<T>(raw.size());
}

#define DEEPLS_INSTANTIATE(T)                                                                   \
  template struct PatchSamples<T>;                                                              \
  template T patch_loss(const DecoderParams<T>&, const VectorX<T>&, const PatchSamples<T>&,     \
                        double);                                                                \
  template PatchGradient<T> patch_loss_gradient(const DecoderParams<T>&, const VectorX<T>&,     \
                                                const PatchSamples<T>&, double, bool);          \
  template T mean_tanh_residual(const DecoderParams<T>&, const VectorX<T>&,                     \
                                const PatchSamples<T>&);

DEEPLS_INSTANTIATE(float)
DEEPLS_INSTANTIATE(double)
#undef DEEPLS_INSTANTIATE

}  // namespace deepls
