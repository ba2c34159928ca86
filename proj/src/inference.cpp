#include "deepls/inference.hpp"

#include "deepls/adam.hpp"
#include "deepls/objective.hpp"
#include "deepls/parallel.hpp"
#include "deepls/training.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <unordered_map>

namespace deepls {

void EncodeConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be nonnegative");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(reg_weight >= 0.0)) throw ConfigError("regularizer weight must be nonnegative");
  if (!(convergence_tol >= 0.0)) throw ConfigError("convergence tolerance must be nonnegative");
  if (window < 1) throw ConfigError("convergence window must be positive");
  if (max_samples < 0) throw ConfigError("max samples must be nonnegative");
  if (threads < 0) throw ConfigError("threads must be nonnegative");
}

double EncodeReport::mean_loss() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < final_loss.size(); ++s) {
    if (empty[s]) continue;
    sum += final_loss[s];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double EncodeReport::mean_tanh_residual() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < mean_residual.size(); ++s) {
    if (empty[s]) continue;
    sum += mean_residual[s];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::size_t EncodeReport::empty_count() const {
  std::size_t n = 0;
  for (auto e : empty) n += e ? 1 : 0;
  return n;
}

void check_compatible(const DecoderParams<Real>& decoder, const LatentGrid& grid) {
  if (decoder.dim != 3) throw ContractError("scene encoding needs a 3D decoder");
  if (decoder.code_dim != grid.code_dim()) {
    throw ContractError("decoder expects codes of size " + std::to_string(decoder.code_dim) +
                        " but the grid stores " + std::to_string(grid.code_dim()));
  }
}

PatchEncodeResult encode_patch(const DecoderParams<Real>& decoder, VectorX<Real>& code,
                               const PatchSamples<Real>& patch, const EncodeConfig& config, std::uint64_t seed) {
  if (patch.empty()) throw ContractError("cannot encode an empty patch");
  AdamConfig adam;
  adam.lr = config.lr;
  AdamState<Real> state(static_cast<std::size_t>(decoder.code_dim), adam);
  std::mt19937_64 rng(seed);
  const auto count = static_cast<int>(patch.size());
  const bool minibatch = config.max_samples > 0 && count > config.max_samples;
  std::uniform_int_distribution<int> pick(0, count - 1);
  std::vector<int> chosen(minibatch ? static_cast<std::size_t>(config.max_samples) : 0);
  double previous = config.early_exit ? static_cast<double>(patch_loss(decoder, code, patch, config.reg_weight)) : 0.0;
  int it = 0;
  while (it < config.iterations) {
    PatchGradient<Real> g;
    if (minibatch) {
      for (auto& c : chosen) c = pick(rng);
      g = patch_loss_gradient(decoder, code, patch.subset(chosen), config.reg_weight, false);
    } else {
      g = patch_loss_gradient(decoder, code, patch, config.reg_weight, false);
    }
    state.step(std::span<Real>(code.data(), static_cast<std::size_t>(code.size())),
               std::span<const Real>(g.code_grad.data(), static_cast<std::size_t>(g.code_grad.size())));
    ++it;
    if (config.early_exit && it % config.window == 0) {
      const double now = patch_loss(decoder, code, patch, config.reg_weight);
      if (previous - now < config.convergence_tol) break;
      previous = now;
    }
  }
  if (!code.allFinite()) throw NumericalError("code optimization diverged");
  PatchEncodeResult result;
  result.iterations_run = it;
  result.final_loss = patch_loss(decoder, code, patch, config.reg_weight);
  result.mean_residual = mean_tanh_residual(decoder, code, patch);
  return result;
}

EncodeReport encode_scene(const DecoderParams<Real>& decoder, LatentGrid& grid,
                          std::span<const SdfSample> samples, const EncodeConfig& config) {
  config.validate();
  check_compatible(decoder, grid);
  const auto start = std::chrono::steady_clock::now();
  const auto positions = positions_of(samples);
  const auto members = assign_samples(grid, positions);
  const std::size_t n = grid.size();
  EncodeReport report;
  report.final_loss.assign(n, 0.0);
  report.mean_residual.assign(n, 0.0);
  report.iterations_run.assign(n, 0);
  report.sample_count.assign(n, 0);
  report.empty.assign(n, 0);
  parallel_for(n, config.threads, [&](std::size_t s) {
    const auto slot = static_cast<int>(s);
    VectorX<Real> code = grid.code(slot);
    report.sample_count[s] = members[s].size();
    if (members[s].empty()) {
      report.empty[s] = 1;
      report.final_loss[s] = config.reg_weight * static_cast<double>(code.squaredNorm());
      return;
    }
    const PatchSamples<Real> patch = make_patch(grid, slot, samples, members[s], decoder.truncation);
    const auto r = encode_patch(decoder, code, patch, config, mix_seed(config.seed, VoxelIndexHash{}(grid.indices()[s])));
    grid.code(slot) = code;
    report.iterations_run[s] = r.iterations_run;
    report.final_loss[s] = r.final_loss;
    report.mean_residual[s] = r.mean_residual;
  });
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double decode_in_voxel(const DecoderParams<Real>& decoder, const LatentGrid& grid, int slot, const Vec3& world) {
  const VoxelIndex idx = grid.indices()[static_cast<std::size_t>(slot)];
  const VectorX<Real> pos = grid.to_decoder(idx, world).cast<Real>();
  const VectorX<Real> code = grid.code(slot);
  return static_cast<double>(decode(decoder, pos, code)) * grid.voxel_size();
}

std::optional<double> query_sdf(const DecoderParams<Real>& decoder, const LatentGrid& grid, const Vec3& world) {
  check_compatible(decoder, grid);
  const auto slot = grid.slot_for_query(world);
  if (!slot) return std::nullopt;
  return decode_in_voxel(decoder, grid, *slot, world);
}

void query_sdf_batch(const DecoderParams<Real>& decoder, const LatentGrid& grid, std::span<const Vec3> points,
                     std::span<double> values, std::span<std::uint8_t> valid) {
  check_compatible(decoder, grid);
  if (values.size() != points.size() || valid.size() != points.size()) {
    throw ContractError("query output spans must match the point count");
  }
  std::unordered_map<int, std::vector<std::size_t>> groups;
  std::vector<int> slot_order;
  for (std::size_t j = 0; j < points.size(); ++j) {
    const auto slot = grid.slot_for_query(points[j]);
    valid[j] = slot ? 1 : 0;
    values[j] = 0.0;
    if (!slot) continue;
    auto [it, inserted] = groups.try_emplace(*slot);
    if (inserted) slot_order.push_back(*slot);
    it->second.push_back(j);
  }
  const double v = grid.voxel_size();
  for (int slot : slot_order) {
    const auto& members = groups[slot];
    const VoxelIndex idx = grid.indices()[static_cast<std::size_t>(slot)];
    MatrixX<Real> pos(3, static_cast<Eigen::Index>(members.size()));
    for (std::size_t c = 0; c < members.size(); ++c) {
      pos.col(static_cast<Eigen::Index>(c)) = grid.to_decoder(idx, points[members[c]]).cast<Real>();
    }
    const VectorX<Real> raw = decode_raw_batch(decoder, pos, VectorX<Real>(grid.code(slot)));
    for (std::size_t c = 0; c < members.size(); ++c) {
      values[members[c]] = static_cast<double>(tanh_space_to_sdf(raw(static_cast<Eigen::Index>(c)), decoder)) * v;
    }
  }
}

SdfBatchFn grid_source(const DecoderParams<Real>& decoder, const LatentGrid& grid) {
  check_compatible(decoder, grid);
  return [&decoder, &grid](std::span<const Vec3> points, std::span<double> values, std::span<std::uint8_t> valid) {
    query_sdf_batch(decoder, grid, points, values, valid);
  };
}

}  // namespace deepls
