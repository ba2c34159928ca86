#pragma once

#include "deepls/common.hpp"
#include "deepls/mlp.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace deepls {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a flat parameter vector. Multi-tensor
// models call begin_step() once and then update() per segment.
template <typename T>
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t size, AdamConfig config);

  std::size_t size() const { return first_moment_.size(); }
  std::uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::vector<T>& first_moment() const { return first_moment_; }
  const std::vector<T>& second_moment() const { return second_moment_; }

  void restore(std::uint64_t step_count, std::vector<T> first, std::vector<T> second);

  /// Single-tensor update covering the whole state.
  void step(std::span<T> params, std::span<const T> grads);

  void begin_step();
  void update(std::size_t offset, std::span<T> params, std::span<const T> grads);

 private:
  AdamConfig config_;
  std::vector<T> first_moment_;
  std::vector<T> second_moment_;
  std::uint64_t step_count_ = 0;
  double correction1_ = 1.0;
  double correction2_ = 1.0;
};

/// One Adam step over every tensor of `mlp`.
template <typename T>
void adam_step(AdamState<T>& state, Mlp<T>& mlp, const MlpGradients<T>& grads);

extern template class AdamState<float>;
extern template class AdamState<double>;

}  // namespace deepls
