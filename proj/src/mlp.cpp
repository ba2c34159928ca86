#include "deepls/mlp.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <sstream>

namespace deepls {
namespace {

std::uint64_t next_mlp_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim <= 0 || hidden_dim <= 0 || num_layers <= 0 || output_dim <= 0) {
    std::ostringstream msg;
    msg << "invalid MLP dimensions: input=" << input_dim << " hidden=" << hidden_dim
        << " layers=" << num_layers << " output=" << output_dim;
    throw ConfigError(msg.str());
  }
  if (!(leaky_slope > 0.0 && leaky_slope <= 1.0)) {
    throw ConfigError("leaky_slope must lie in (0, 1]");
  }
}

std::vector<std::pair<int, int>> MlpSpec::layer_shapes() const {
  std::vector<std::pair<int, int>> shapes;
  shapes.reserve(num_layers);
  for (int l = 0; l < num_layers; ++l) {
    const int in = l == 0 ? input_dim : hidden_dim;
    const int out = l == num_layers - 1 ? output_dim : hidden_dim;
    shapes.emplace_back(out, in);
  }
  return shapes;
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (auto [out, in] : layer_shapes()) n += static_cast<std::size_t>(out) * (in + 1);
  return n;
}

template <typename T>
MlpGradients<T> MlpGradients<T>::zeros(const MlpSpec& spec) {
  MlpGradients g;
  for (auto [out, in] : spec.layer_shapes()) {
    g.layers.push_back({MatrixX<T>::Zero(out, in), VectorX<T>::Zero(out)});
  }
  return g;
}

template <typename T>
MlpGradients<T>& MlpGradients<T>::operator+=(const MlpGradients& other) {
  if (other.layers.size() != layers.size()) throw ContractError("gradient layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weights += other.layers[l].weights;
    layers[l].biases += other.layers[l].biases;
  }
  return *this;
}

template <typename T>
Mlp<T>::Mlp() : id_(next_mlp_id()) {}

template <typename T>
Mlp<T>::Mlp(MlpSpec spec, std::vector<LayerParams<T>> layers)
    : spec_(spec), layers_(std::move(layers)), id_(next_mlp_id()) {
  spec_.validate();
  const auto shapes = spec_.layer_shapes();
  if (shapes.size() != layers_.size()) throw ConfigError("layer count does not match spec");
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weights.rows() != shapes[l].first || layer.weights.cols() != shapes[l].second ||
        layer.biases.size() != shapes[l].first) {
      throw ConfigError("layer " + std::to_string(l) + " shape does not match spec");
    }
    if (!layer.weights.allFinite() || !layer.biases.allFinite()) {
      throw ConfigError("layer " + std::to_string(l) + " has non-finite entries");
    }
  }
}

template <typename T>
Mlp<T>::Mlp(const Mlp& other)
    : spec_(other.spec_), layers_(other.layers_), id_(next_mlp_id()) {}

template <typename T>
Mlp<T>& Mlp<T>::operator=(const Mlp& other) {
  if (this != &other) {
    spec_ = other.spec_;
    layers_ = other.layers_;
    ++generation_;
  }
  return *this;
}

template <typename T>
Mlp<T> Mlp<T>::init(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::vector<LayerParams<T>> layers;
  for (auto [out, in] : spec.layer_shapes()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    LayerParams<T> layer{MatrixX<T>(out, in), VectorX<T>::Zero(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weights(r, c) = static_cast<T>(dist(rng));
    layers.push_back(std::move(layer));
  }
  return Mlp(spec, std::move(layers));
}

template <typename T>
Mlp<T> Mlp<T>::zeros(const MlpSpec& spec) {
  spec.validate();
  std::vector<LayerParams<T>> layers;
  for (auto [out, in] : spec.layer_shapes()) {
    layers.push_back({MatrixX<T>::Zero(out, in), VectorX<T>::Zero(out)});
  }
  return Mlp(spec, std::move(layers));
}

template <typename T>
std::vector<LayerParams<T>>& Mlp<T>::mutable_layers() {
  ++generation_;
  return layers_;
}

template <typename T>
Tape<T> Mlp<T>::forward(const MatrixX<T>& inputs) const {
  if (inputs.rows() != spec_.input_dim) {
    throw ContractError("forward: input has " + std::to_string(inputs.rows()) +
                        " rows, network expects " + std::to_string(spec_.input_dim));
  }
  Tape<T> tape;
  tape.owner = id_;
  tape.generation = generation_;
  tape.input = inputs;
  tape.pre_activations.reserve(layers_.size());
  tape.activations.reserve(layers_.size() - 1);
  const T slope = static_cast<T>(spec_.leaky_slope);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const MatrixX<T>& x = l == 0 ? tape.input : tape.activations.back();
    MatrixX<T> z = layers_[l].weights * x;
    z.colwise() += layers_[l].biases;
    if (l + 1 < layers_.size()) {
      tape.activations.push_back((z.array() > T(0)).select(z, slope * z));
    }
    tape.pre_activations.push_back(std::move(z));
  }
  return tape;
}

template <typename T>
VectorX<T> Mlp<T>::forward(const VectorX<T>& input, Tape<T>* tape) const {
  Tape<T> t = forward(MatrixX<T>(input));
  VectorX<T> out = t.output().col(0);
  if (tape) *tape = std::move(t);
  return out;
}

template <typename T>
void Mlp<T>::check_tape(const Tape<T>& tape) const {
  if (tape.owner != id_ || tape.generation != generation_) {
    throw ContractError("backward: tape was not produced by this network's current parameters");
  }
  if (tape.pre_activations.size() != layers_.size()) {
    throw ContractError("backward: tape layer count mismatch");
  }
}

template <typename T>
MlpGradients<T> Mlp<T>::backward(const Tape<T>& tape, const MatrixX<T>& upstream,
                                 bool want_input_grad) const {
  check_tape(tape);
  const Eigen::Index batch = tape.input.cols();
  if (upstream.rows() != spec_.output_dim || upstream.cols() != batch) {
    throw ContractError("backward: upstream gradient shape mismatch");
  }
  const T slope = static_cast<T>(spec_.leaky_slope);
  MlpGradients<T> grads;
  grads.layers.resize(layers_.size());
  MatrixX<T> delta = upstream;  // gradient wrt current layer's pre-activation
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const MatrixX<T>& x = li == 0 ? tape.input : tape.activations[li - 1];
    grads.layers[li].weights.noalias() = delta * x.transpose();
    grads.layers[li].biases = delta.rowwise().sum();
    if (li == 0) {
      if (want_input_grad) grads.input_grad.noalias() = layers_[0].weights.transpose() * delta;
      break;
    }
    MatrixX<T> back(layers_[li].weights.cols(), batch);
    back.noalias() = layers_[li].weights.transpose() * delta;
    const auto& z = tape.pre_activations[li - 1];
    delta = (z.array() > T(0)).select(back, slope * back);
  }
  return grads;
}

template <typename T>
std::vector<T> Mlp<T>::flatten() const {
  std::vector<T> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) flat.push_back(layer.weights(r, c));
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) flat.push_back(layer.biases(r));
  }
  return flat;
}

template <typename T>
void Mlp<T>::assign(std::span<const T> flat) {
  if (flat.size() != parameter_count()) throw ContractError("assign: parameter count mismatch");
  std::size_t i = 0;
  for (auto& layer : mutable_layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = flat[i++];
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) layer.biases(r) = flat[i++];
  }
}

template <typename T>
std::vector<T> flatten(const MlpGradients<T>& grads) {
  std::vector<T> flat;
  for (const auto& layer : grads.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) flat.push_back(layer.weights(r, c));
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) flat.push_back(layer.biases(r));
  }
  return flat;
}

template struct MlpGradients<float>;
template struct MlpGradients<double>;
template class Mlp<float>;
template class Mlp<double>;
template std::vector<float> flatten(const MlpGradients<float>&);
template std::vector<double> flatten(const MlpGradients<double>&);

}  // namespace deepls
