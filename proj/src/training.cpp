#include "deepls/training.hpp"

#include "deepls/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace deepls {

std::size_t PatchDataset::total_samples() const {
  std::size_t n = 0;
  for (const auto& p : patches) n += static_cast<std::size_t>(p.size());
  return n;
}

PatchSamples<Real> make_patch(const LatentGrid& grid, int slot, std::span<const SdfSample> samples,
                              std::span<const int> members, double truncation_voxels) {
  const VoxelIndex idx = grid.indices()[static_cast<std::size_t>(slot)];
  const auto n = static_cast<Eigen::Index>(members.size());
  PatchSamples<Real> patch;
  patch.positions.resize(3, n);
  patch.sdf.resize(n);
  patch.weights.resize(n);
  const double inv = 1.0 / grid.voxel_size();
  for (Eigen::Index c = 0; c < n; ++c) {
    const SdfSample& s = samples[static_cast<std::size_t>(members[static_cast<std::size_t>(c)])];
    patch.positions.col(c) = grid.to_decoder(idx, s.position).cast<Real>();
    patch.sdf(c) = static_cast<Real>(std::clamp(s.sdf * inv, -truncation_voxels, truncation_voxels));
    patch.weights(c) = static_cast<Real>(s.weight);
  }
  return patch;
}

void append_patches(PatchDataset& dataset, const LatentGrid& grid, std::span<const SdfSample> samples,
                    double truncation_voxels, int scene_id, std::span<const int> slots) {
  if (dataset.dim != 3) throw ContractError("3D patches appended to a planar dataset");
  const auto positions = positions_of(samples);
  const auto members = assign_samples(grid, positions);
  auto add = [&](int s) {
    dataset.patches.push_back(make_patch(grid, s, samples, members[static_cast<std::size_t>(s)], truncation_voxels));
    dataset.scene.push_back(scene_id);
  };
  if (slots.empty()) {
    for (std::size_t s = 0; s < grid.size(); ++s) add(static_cast<int>(s));
  } else {
    for (int s : slots) add(s);
  }
}

void PatchSamplerConfig::validate() const {
  if (!(voxel_size > 0.0)) throw ConfigError("voxel size must be positive");
  if (!(receptive_factor >= 0.5)) throw ConfigError("receptive factor must be at least 0.5");
  if (!(truncation_voxels > 0.0)) throw ConfigError("truncation must be positive");
  if (!(allocation_band > 0.0)) throw ConfigError("allocation band must be positive");
  if (!(surface_density > 0.0) || !(uniform_density >= 0.0)) throw ConfigError("sample densities must be positive");
  if (!(tessellation_step > 0.0)) throw ConfigError("tessellation step must be positive");
  if (max_patches_per_shape < 0) throw ConfigError("patch cap must be nonnegative");
}

PatchDataset build_patch_dataset(std::span<const PrimitiveShape> shapes, const PatchSamplerConfig& config) {
  config.validate();
  if (shapes.empty()) throw DataError("no training shapes");
  PatchDataset dataset;
  const double v = config.voxel_size;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::span<const PrimitiveShape> scene(&shapes[i], 1);
    const TriangleMesh mesh = primitive_mesh(scene, config.tessellation_step * v);
    const Aabb box = scene_bounds(scene);
    const double pad = 0.05 * box.diagonal();
    const Vec3 ext = box.extent().array() + 2.0 * pad;
    SurfaceSampleConfig sc;
    sc.seed = mix_seed(config.seed, i);
    sc.n_surface = static_cast<std::size_t>(std::ceil(config.surface_density * mesh.area() / (v * v)));
    sc.n_uniform = static_cast<std::size_t>(std::ceil(config.uniform_density * ext.prod() / (v * v * v)));
    for (double s : config.sigmas) sc.sigmas.push_back(s * v);
    sc.truncation = config.truncation_voxels * v;
    const auto samples = sample_primitives(scene, sc, config.tessellation_step * v);
    if (samples.empty()) throw DataError("training shape produced no samples");
    LatentGrid grid(Vec3::Zero(), v, 1, config.receptive_factor);
    grid.allocate(near_surface_positions(samples, config.allocation_band * v), 0);
    std::vector<int> slots(grid.size());
    std::iota(slots.begin(), slots.end(), 0);
    const auto cap = static_cast<std::size_t>(config.max_patches_per_shape);
    if (cap > 0 && slots.size() > cap) {
      std::mt19937_64 rng(mix_seed(config.seed ^ 0x5eedULL, i));
      std::shuffle(slots.begin(), slots.end(), rng);
      slots.resize(cap);
      std::sort(slots.begin(), slots.end());
    }
    append_patches(dataset, grid, samples, config.truncation_voxels, static_cast<int>(i), slots);
  }
  return dataset;
}

void TrainConfig::validate() const {
  if (steps <= 0) throw ConfigError("training steps must be positive");
  if (batch_voxels <= 0 || samples_per_voxel <= 0) throw ConfigError("batch sizes must be positive");
  if (!(lr > 0.0) || !(code_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(decay_fractions[0] > 0.0 && decay_fractions[0] < decay_fractions[1] && decay_fractions[1] < 1.0)) {
    throw ConfigError("decay fractions must satisfy 0 < first < second < 1");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("decay factor must be in (0, 1]");
  if (!(reg_weight >= 0.0)) throw ConfigError("regularizer weight must be nonnegative");
  if (!(code_init_std >= 0.0)) throw ConfigError("code init std must be nonnegative");
  if (threads < 0) throw ConfigError("threads must be nonnegative");
}

long TrainConfig::steps_per_epoch(std::size_t patches) const {
  return std::max<long>(1, static_cast<long>((patches + batch_voxels - 1) / batch_voxels));
}

namespace {

constexpr int kChunkVoxels = 8;

struct ChunkResult {
  MlpGradients<Real> grads;
  double loss = 0.0;
};

}  // namespace

TrainResult train_prior(const PatchDataset& dataset, const DecoderConfig& decoder_config,
                        const TrainConfig& config, const TrainProgress& progress) {
  config.validate();
  if (dataset.patches.empty()) throw DataError("training dataset has no patches");
  if (decoder_config.dim != dataset.dim) throw ConfigError("decoder and dataset dimensions differ");
  const std::size_t num_patches = dataset.size();

  TrainResult result;
  result.decoder = DecoderParams<Real>::init(decoder_config, mix_seed(config.seed, 1));
  const int code_dim = decoder_config.code_dim;
  const int dim = decoder_config.dim;
  result.codes.resize(code_dim, static_cast<Eigen::Index>(num_patches));
  {
    std::mt19937_64 rng(mix_seed(config.seed, 2));
    std::normal_distribution<double> normal(0.0, config.code_init_std);
    for (Eigen::Index c = 0; c < result.codes.cols(); ++c)
      for (int r = 0; r < code_dim; ++r) result.codes(r, c) = static_cast<Real>(normal(rng));
  }
  AdamConfig adam;
  adam.lr = config.lr;
  result.optimizer = AdamState<Real>(result.decoder.mlp.parameter_count(), adam);
  AdamConfig code_adam = adam;
  code_adam.lr = config.code_lr;
  std::vector<AdamState<Real>> code_states(num_patches, AdamState<Real>(static_cast<std::size_t>(code_dim), code_adam));

  const long per_epoch = config.steps_per_epoch(num_patches);
  const long decay1 = static_cast<long>(std::floor(config.decay_fractions[0] * static_cast<double>(config.steps)));
  const long decay2 = static_cast<long>(std::floor(config.decay_fractions[1] * static_cast<double>(config.steps)));
  std::mt19937_64 rng(mix_seed(config.seed, 3));
  std::vector<int> order(num_patches);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = num_patches;  // forces a shuffle on the first step
  double lr_scale = 1.0;
  double epoch_sum = 0.0;
  long epoch_voxels = 0;
  const Real lambda = static_cast<Real>(config.reg_weight);

  for (long step = 0; step < config.steps; ++step) {
    if (step == decay1 || step == decay2) lr_scale *= config.decay_factor;
    result.optimizer.set_lr(config.lr * lr_scale);

    // Batch of voxels from the current epoch permutation.
    std::vector<int> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_voxels));
    for (int b = 0; b < config.batch_voxels && b < static_cast<int>(num_patches); ++b) {
      if (cursor >= num_patches) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    // Per-voxel sample draws (with replacement) from the step RNG.
    std::vector<std::vector<int>> picks(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto n = dataset.patches[static_cast<std::size_t>(batch[b])].size();
      if (n == 0) continue;
      if (n <= config.samples_per_voxel) {
        picks[b].resize(static_cast<std::size_t>(n));
        std::iota(picks[b].begin(), picks[b].end(), 0);
      } else {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(n) - 1);
        picks[b].resize(static_cast<std::size_t>(config.samples_per_voxel));
        for (auto& p : picks[b]) p = pick(rng);
      }
    }

    const std::size_t num_chunks = (batch.size() + kChunkVoxels - 1) / kChunkVoxels;
    std::vector<ChunkResult> chunks(num_chunks);
    std::vector<VectorX<Real>> code_grads(batch.size());
    const auto& decoder = result.decoder;
    parallel_for(num_chunks, config.threads, [&](std::size_t chunk) {
      const std::size_t b0 = chunk * kChunkVoxels;
      const std::size_t b1 = std::min(batch.size(), b0 + kChunkVoxels);
      Eigen::Index cols = 0;
      for (std::size_t b = b0; b < b1; ++b) cols += static_cast<Eigen::Index>(picks[b].size());
      MatrixX<Real> inputs(dim + code_dim, cols);
      VectorX<Real> targets(cols);
      VectorX<Real> scale(cols);  // w_j / W_voxel
      Eigen::Index c = 0;
      for (std::size_t b = b0; b < b1; ++b) {
        const auto& patch = dataset.patches[static_cast<std::size_t>(batch[b])];
        Real wsum = 0;
        for (int j : picks[b]) wsum += patch.weights(j);
        for (int j : picks[b]) {
          inputs.col(c).head(dim) = patch.positions.col(j);
          inputs.col(c).tail(code_dim) = result.codes.col(batch[b]);
          targets(c) = encode_target(patch.sdf(j), decoder);
          scale(c) = patch.weights(j) / wsum;
          ++c;
        }
      }
      ChunkResult& out = chunks[chunk];
      MatrixX<Real> upstream(1, cols);
      double loss = 0.0;
      if (cols > 0) {
        const Tape<Real> tape = decoder.mlp.forward(inputs);
        const auto& m = tape.output();
        for (Eigen::Index k = 0; k < cols; ++k) {
          const Real y = std::tanh(m(0, k));
          const Real r = y - targets(k);
          loss += static_cast<double>(scale(k) * std::abs(r));
          const Real sign = r > Real(0) ? Real(1) : (r < Real(0) ? Real(-1) : Real(0));
          upstream(0, k) = scale(k) * sign * (Real(1) - y * y);
        }
        out.grads = decoder.mlp.backward(tape, upstream, true);
      } else {
        out.grads = MlpGradients<Real>::zeros(decoder.spec());
      }
      c = 0;
      for (std::size_t b = b0; b < b1; ++b) {
        const auto code = result.codes.col(batch[b]);
        VectorX<Real> g = Real(2) * lambda * code;
        const auto n = static_cast<Eigen::Index>(picks[b].size());
        if (n > 0) g += out.grads.input_grad.block(dim, c, code_dim, n).rowwise().sum();
        code_grads[b] = std::move(g);
        loss += static_cast<double>(lambda * code.squaredNorm());
        c += n;
      }
      out.grads.input_grad.resize(0, 0);
      out.loss = loss;
    });

    MlpGradients<Real> total = std::move(chunks[0].grads);
    double step_loss = chunks[0].loss;
    for (std::size_t k = 1; k < num_chunks; ++k) {
      total += chunks[k].grads;
      step_loss += chunks[k].loss;
    }
    if (!std::isfinite(step_loss)) {
      throw NumericalError("training loss became non-finite at step " + std::to_string(step));
    }
    adam_step(result.optimizer, result.decoder.mlp, total);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto& state = code_states[static_cast<std::size_t>(batch[b])];
      state.set_lr(config.code_lr * lr_scale);
      Real* col = result.codes.col(batch[b]).data();
      state.step(std::span<Real>(col, static_cast<std::size_t>(code_dim)),
                 std::span<const Real>(code_grads[b].data(), static_cast<std::size_t>(code_dim)));
    }

    epoch_sum += step_loss;
    epoch_voxels += static_cast<long>(batch.size());
    if ((step + 1) % per_epoch == 0 || step + 1 == config.steps) {
      const double mean = epoch_sum / static_cast<double>(std::max<long>(1, epoch_voxels));
      result.epoch_loss.push_back(mean);
      result.epoch_lr.push_back(config.lr * lr_scale);
      epoch_sum = 0.0;
      epoch_voxels = 0;
      if (progress) progress(step + 1, config.steps, mean);
    }
  }
  return result;
}

void write_loss_csv(const std::string& path, const TrainResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss curve to " + path);
  out << "epoch,lr,loss\n";
  out.precision(9);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    out << e << ',' << result.epoch_lr[e] << ',' << result.epoch_loss[e] << '\n';
  }
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace deepls
