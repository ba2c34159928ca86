#include "deepls/adam.hpp"

#include <cmath>

namespace deepls {

template <typename T>
AdamState<T>::AdamState(std::size_t size, AdamConfig config)
    : config_(config), first_moment_(size, T(0)), second_moment_(size, T(0)) {
  if (!(config.lr >= 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.eps > 0.0)) {
    throw ConfigError("invalid Adam configuration");
  }
}

template <typename T>
void AdamState<T>::restore(std::uint64_t step_count, std::vector<T> first, std::vector<T> second) {
  if (first.size() != size() || second.size() != size()) {
    throw ContractError("Adam restore: moment size mismatch");
  }
  step_count_ = step_count;
  first_moment_ = std::move(first);
  second_moment_ = std::move(second);
}

template <typename T>
void AdamState<T>::begin_step() {
  ++step_count_;
  correction1_ = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  correction2_ = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
}

template <typename T>
void AdamState<T>::update(std::size_t offset, std::span<T> params, std::span<const T> grads) {
  if (params.size() != grads.size() || offset + params.size() > size()) {
    throw ContractError("Adam update: parameter/gradient shape mismatch");
  }
  if (step_count_ == 0) throw ContractError("Adam update before begin_step");
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T step_size = static_cast<T>(config_.lr / correction1_);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2_));
  const T eps = static_cast<T>(config_.eps);
  T* m = first_moment_.data() + offset;
  T* v = second_moment_.data() + offset;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    params[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
  }
}

template <typename T>
void AdamState<T>::step(std::span<T> params, std::span<const T> grads) {
  if (params.size() != size()) throw ContractError("Adam step: parameter count mismatch");
  begin_step();
  update(0, params, grads);
}

template <typename T>
void adam_step(AdamState<T>& state, Mlp<T>& mlp, const MlpGradients<T>& grads) {
  if (state.size() != mlp.parameter_count() || grads.layers.size() != mlp.layers().size()) {
    throw ContractError("adam_step: optimizer state does not match network");
  }
  auto& layers = mlp.mutable_layers();
  state.begin_step();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weights;
    auto& b = layers[l].biases;
    const auto& gw = grads.layers[l].weights;
    const auto& gb = grads.layers[l].biases;
    if (gw.rows() != w.rows() || gw.cols() != w.cols() || gb.size() != b.size()) {
      throw ContractError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    }
    // Moments are laid out in Eigen storage order, which is fine because the
    // update is elementwise; flatten() ordering only matters for I/O.
    state.update(offset, std::span<T>(w.data(), w.size()), std::span<const T>(gw.data(), gw.size()));
    offset += w.size();
    state.update(offset, std::span<T>(b.data(), b.size()), std::span<const T>(gb.data(), gb.size()));
    offset += b.size();
  }
}

template class AdamState<float>;
template class AdamState<double>;
template void adam_step(AdamState<float>&, Mlp<float>&, const MlpGradients<float>&);
template void adam_step(AdamState<double>&, Mlp<double>&, const MlpGradients<double>&);

}  // namespace deepls
