#pragma once

// Joint optimization of the shared decoder and per-patch codes.

#include "deepls/adam.hpp"
#include "deepls/common.hpp"
#include "deepls/decoder.hpp"
#include "deepls/geometry.hpp"
#include "deepls/latent_grid.hpp"
#include "deepls/objective.hpp"
#include "deepls/sampling.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace deepls {

// Patches in decoder units: positions relative to the voxel center divided by
// the voxel size, SDF divided by the voxel size and clamped to the decoder
// truncation.
struct PatchDataset {
  int dim = 3;
  std::vector<PatchSamples<Real>> patches;
  std::vector<int> scene;  // scene id per patch

  std::size_t size() const { return patches.size(); }
  std::size_t total_samples() const;
};

/// Appends one patch per allocated voxel of `grid` (or per listed slot)
/// holding every sample inside that voxel's receptive field.
void append_patches(PatchDataset& dataset, const LatentGrid& grid, std::span<const SdfSample> samples,
                    double truncation_voxels, int scene_id = 0, std::span<const int> slots = {});

/// Sample assignment for one voxel, in decoder units.
PatchSamples<Real> make_patch(const LatentGrid& grid, int slot, std::span<const SdfSample> samples,
                              std::span<const int> members, double truncation_voxels);

struct PatchSamplerConfig {
  double voxel_size = 1.0;
  double receptive_factor = kDefaultReceptiveFactor;
  double truncation_voxels = 2.0;
  /// Voxels are allocated where samples satisfy |sdf| <= band * voxel_size.
  double allocation_band = 0.5;
  double surface_density = 24.0;   // surface samples per voxel face area
  double uniform_density = 2.0;    // uniform samples per voxel volume
  std::vector<double> sigmas = {0.05, 0.3};  // perturbation scales, voxel units
  double tessellation_step = 0.25;           // voxel units
  int max_patches_per_shape = 0;             // random subset per shape; 0 keeps all
  std::uint64_t seed = 0;

  void validate() const;
};

/// Samples each primitive as its own scene, allocates a grid at the origin
/// and collects patches.
PatchDataset build_patch_dataset(std::span<const PrimitiveShape> shapes, const PatchSamplerConfig& config);

struct TrainConfig {
  long steps = 20000;
  int batch_voxels = 32;
  int samples_per_voxel = 64;
  double lr = 0.01;
  double code_lr = 0.01;
  std::array<double, 2> decay_fractions = {0.5, 0.75};
  double decay_factor = 0.5;
  double reg_weight = 1e-4;  // 1 / sigma^2
  double code_init_std = kCodeInitStd;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
  long steps_per_epoch(std::size_t patches) const;
};

struct TrainResult {
  DecoderParams<Real> decoder;
  MatrixX<Real> codes;             // code_dim x patches
  std::vector<double> epoch_loss;  // mean per-voxel loss over each epoch
  std::vector<double> epoch_lr;
  AdamState<Real> optimizer;
};

using TrainProgress = std::function<void(long step, long total, double epoch_loss)>;

/// Decoder initialized from `decoder_config` with `seed`.
TrainResult train_prior(const PatchDataset& dataset, const DecoderConfig& decoder_config,
                        const TrainConfig& config, const TrainProgress& progress = {});

/// Writes "epoch,lr,loss" rows.
void write_loss_csv(const std::string& path, const TrainResult& result);

}  // namespace deepls
