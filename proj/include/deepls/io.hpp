#pragma once

// File formats. Binary formats are little-endian with a magic and version.
//
// Checkpoint ("DLS1", version 1):
//   u32 dim, code_dim, hidden_dim, num_layers, output_dim
//   f64 leaky_slope, truncation (voxel units), tanh_clamp
//   per layer: f32 weights (out x in, row-major), f32 biases
//   u8 has_optimizer; then u64 step, f64 lr, beta1, beta2, eps,
//     f32 first moment[P], f32 second moment[P] (optimizer order)
//   u8 has_grid; then f64 origin[3], f64 voxel_size, u64 count,
//     per entry i32 index[3], f32 code[code_dim]
// Depth frame ("DLSD"): u32 width, height; f32 fx, fy, cx, cy;
//   f32 camera_to_world[16] row-major; f32 depth[height * width] row-major.
// TSDF volume ("DLST", version 1): f64 origin[3], voxel_size, truncation;
//   i32 dims[3]; f32 tsdf[n]; f32 weight[n] (x fastest).

#include "deepls/adam.hpp"
#include "deepls/common.hpp"
#include "deepls/decoder.hpp"
#include "deepls/fusion.hpp"
#include "deepls/latent_grid.hpp"
#include "deepls/mesh.hpp"
#include "deepls/sampling.hpp"

#include <optional>
#include <string>
#include <vector>

namespace deepls {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kTsdfVersion = 1;

TriangleMesh load_obj(const std::string& path);
void save_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_ply(const std::string& path);
void save_ply(const TriangleMesh& mesh, const std::string& path);
/// Dispatch on the extension (.ply, otherwise OBJ).
TriangleMesh load_mesh(const std::string& path);
void save_mesh(const TriangleMesh& mesh, const std::string& path);

DepthFrame load_depth(const std::string& path);
void save_depth(const DepthFrame& frame, const std::string& path);

struct Checkpoint {
  DecoderParams<Real> decoder;
  std::optional<AdamState<Real>> optimizer;
  std::optional<LatentGrid> grid;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// CSV with header x,y,z,sdf,weight.
void save_samples(const std::vector<SdfSample>& samples, const std::string& path);
std::vector<SdfSample> load_samples(const std::string& path);

void save_tsdf(const TsdfVolume& volume, const std::string& path);
TsdfVolume load_tsdf(const std::string& path);

}  // namespace deepls
