#pragma once

// Small dense network engine: leaky-ReLU MLP with batched forward pass,
// exact reverse-mode gradients and per-call tapes.

#include "deepls/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace deepls {

struct MlpSpec {
  int input_dim = 128;
  int hidden_dim = 128;
  int num_layers = 4;
  int output_dim = 1;
  double leaky_slope = 0.01;

  /// Throws ConfigError on non-positive sizes or a slope outside (0, 1].
  void validate() const;
  /// (rows, cols) of each weight matrix, first layer first.
  std::vector<std::pair<int, int>> layer_shapes() const;
  std::size_t parameter_count() const;

  bool operator==(const MlpSpec&) const = default;
};

template <typename T>
struct LayerParams {
  MatrixX<T> weights;  // out x in
  VectorX<T> biases;   // out
};

template <typename T>
struct MlpGradients {
  std::vector<LayerParams<T>> layers;
  MatrixX<T> input_grad;  // in x batch; empty when not requested

  /// Zero gradients shaped like `spec`.
  static MlpGradients zeros(const MlpSpec& spec);
  MlpGradients& operator+=(const MlpGradients& other);
};

template <typename T>
class Mlp;

/// Activations recorded by one forward call. Only valid for the network
/// (and parameter generation) that produced it.
template <typename T>
struct Tape {
  std::uint64_t owner = 0;
  std::uint64_t generation = 0;
  MatrixX<T> input;
  std::vector<MatrixX<T>> pre_activations;  // one per layer
  std::vector<MatrixX<T>> activations;      // leaky(pre) for hidden layers

  const MatrixX<T>& output() const { return pre_activations.back(); }
};

template <typename T>
class Mlp {
 public:
  Mlp();
  Mlp(MlpSpec spec, std::vector<LayerParams<T>> layers);
  Mlp(const Mlp& other);
  Mlp(Mlp&& other) noexcept = default;
  Mlp& operator=(const Mlp& other);
  Mlp& operator=(Mlp&& other) noexcept = default;

  /// Fan-in scaled uniform weights, zero biases. Deterministic in `seed`.
  static Mlp init(const MlpSpec& spec, std::uint64_t seed);
  static Mlp zeros(const MlpSpec& spec);

  const MlpSpec& spec() const { return spec_; }
  const std::vector<LayerParams<T>>& layers() const { return layers_; }
  /// Mutable access invalidates outstanding tapes.
  std::vector<LayerParams<T>>& mutable_layers();
  std::size_t parameter_count() const { return spec_.parameter_count(); }

  /// inputs: input_dim x batch. Output lives in the returned tape.
  Tape<T> forward(const MatrixX<T>& inputs) const;
  VectorX<T> forward(const VectorX<T>& input, Tape<T>* tape = nullptr) const;

  /// upstream: output_dim x batch gradient of a scalar loss wrt outputs.
  MlpGradients<T> backward(const Tape<T>& tape, const MatrixX<T>& upstream,
                           bool want_input_grad = true) const;

  /// Flattened parameter copy in layer order (weights row-major, then
  /// biases). Used by the optimizer and by gradient checks.
  std::vector<T> flatten() const;
  void assign(std::span<const T> flat);

  T leaky(T z) const { return z > T(0) ? z : T(spec_.leaky_slope) * z; }

 private:
  void check_tape(const Tape<T>& tape) const;

  MlpSpec spec_;
  std::vector<LayerParams<T>> layers_;
  std::uint64_t id_;
  std::uint64_t generation_ = 0;
};

/// Flatten gradients in the same order as Mlp::flatten.
template <typename T>
std::vector<T> flatten(const MlpGradients<T>& grads);

extern template class Mlp<float>;
extern template class Mlp<double>;

}  // namespace deepls
