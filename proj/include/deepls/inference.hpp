#pragma once

// Code-only MAP inference with a frozen decoder, and SDF queries on an
// encoded grid.

#include "deepls/common.hpp"
#include "deepls/decoder.hpp"
#include "deepls/latent_grid.hpp"
#include "deepls/meshing.hpp"
#include "deepls/objective.hpp"
#include "deepls/sampling.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace deepls {

struct EncodeConfig {
  int iterations = 300;
  double lr = 0.01;
  double reg_weight = 1e-4;
  double convergence_tol = 1e-4;
  bool early_exit = true;
  int window = 50;        // iterations between convergence checks
  int max_samples = 64;   // per-iteration minibatch; 0 uses every sample
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

struct EncodeReport {
  std::vector<double> final_loss;       // full-patch loss per slot
  std::vector<double> mean_residual;    // mean |tanh-space residual| per slot
  std::vector<int> iterations_run;
  std::vector<std::size_t> sample_count;
  std::vector<std::uint8_t> empty;      // slot had no samples; code untouched
  double seconds = 0.0;

  double mean_loss() const;
  double mean_tanh_residual() const;  // over non-empty slots
  std::size_t empty_count() const;
};

struct PatchEncodeResult {
  double final_loss = 0.0;
  double mean_residual = 0.0;
  int iterations_run = 0;
};

/// Optimizes one code in place against a non-empty patch with the frozen
/// decoder. `seed` drives the minibatch draws.
PatchEncodeResult encode_patch(const DecoderParams<Real>& decoder, VectorX<Real>& code,
                               const PatchSamples<Real>& patch, const EncodeConfig& config, std::uint64_t seed);

/// Optimizes every allocated code of `grid` against the samples (scene units)
/// within its receptive field. Each voxel is independent and seeded by its
/// index, so the result does not depend on order or thread count.
EncodeReport encode_scene(const DecoderParams<Real>& decoder, LatentGrid& grid,
                          std::span<const SdfSample> samples, const EncodeConfig& config);

/// Indicator-rule query in scene units; none outside allocated voxels.
std::optional<double> query_sdf(const DecoderParams<Real>& decoder, const LatentGrid& grid, const Vec3& world);

/// Batched query grouping points by voxel.
void query_sdf_batch(const DecoderParams<Real>& decoder, const LatentGrid& grid, std::span<const Vec3> points,
                     std::span<double> values, std::span<std::uint8_t> valid);

/// Decode with an explicit voxel's code (not necessarily the containing one).
double decode_in_voxel(const DecoderParams<Real>& decoder, const LatentGrid& grid, int slot, const Vec3& world);

/// Meshing source over the grid. The grid and decoder must outlive it.
SdfBatchFn grid_source(const DecoderParams<Real>& decoder, const LatentGrid& grid);

/// Checks that a decoder matches a grid (code size) and is 3D.
void check_compatible(const DecoderParams<Real>& decoder, const LatentGrid& grid);

}  // namespace deepls
