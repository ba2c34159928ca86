#pragma once

// Scene-level helpers shared by the command line tool, the Python module and
// the tests: voxel-relative sampling, grid allocation and evaluation probes.

#include "deepls/common.hpp"
#include "deepls/decoder.hpp"
#include "deepls/latent_grid.hpp"
#include "deepls/mesh.hpp"
#include "deepls/sampling.hpp"
#include "deepls/spatial.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace deepls {

// Sample counts and perturbations expressed relative to the voxel size.
struct VoxelSamplingConfig {
  double voxel_size = 0.05;
  double surface_density = 24.0;             // per voxel face area of surface
  double uniform_density = 2.0;              // per voxel volume of the padded box
  std::vector<double> sigmas = {0.05, 0.3};  // voxel units
  double pad_voxels = 2.0;
  double truncation_voxels = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
  SurfaceSampleConfig resolve(double surface_area, const Aabb& bounds) const;
};

std::vector<SdfSample> sample_mesh_scene(const TriangleMesh& mesh, const MeshDistance& distance,
                                         const VoxelSamplingConfig& config);

struct GridSetup {
  double voxel_size = 0.05;
  double receptive_factor = kDefaultReceptiveFactor;
  double allocation_band = 0.5;  // voxels; samples with |sdf| <= band allocate
  int dilation = 0;
  int code_dim = 125;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Grid aligned to multiples of the voxel size, holding every voxel that
/// contains a near-surface sample.
LatentGrid allocate_grid(std::span<const SdfSample> samples, const GridSetup& setup);

struct ProbeSet {
  std::vector<Vec3> points;
  std::vector<double> sdf;  // ground truth
};

/// Surface points jittered by `sigma` and kept when |sdf| <= band.
ProbeSet near_surface_probes(const TriangleMesh& mesh, const MeshDistance& distance, std::size_t count,
                             double sigma, double band, std::uint64_t seed);
ProbeSet near_surface_probes(const std::function<double(const Vec3&)>& sdf, const TriangleMesh& surface,
                             std::size_t count, double sigma, double band, std::uint64_t seed);

struct RmseReport {
  double rmse = 0.0;
  double relative = 0.0;  // rmse / diagonal
  std::size_t used = 0;
  double coverage = 0.0;  // fraction of probes with a value
};

RmseReport grid_rmse(const DecoderParams<Real>& decoder, const LatentGrid& grid, const ProbeSet& probes,
                     double diagonal);
RmseReport field_rmse(const std::function<std::optional<double>(const Vec3&)>& field, const ProbeSet& probes,
                      double diagonal);

struct BorderReport {
  double median = 0.0;  // scene units
  double p90 = 0.0;
  std::size_t count = 0;
};

/// Disagreement |decode(A, p) - decode(B, p)| for points p drawn uniformly on
/// the faces shared by allocated neighbours, kept where |gt(p)| <= band.
BorderReport border_disagreement(const DecoderParams<Real>& decoder, const LatentGrid& grid,
                                 const std::function<double(const Vec3&)>& gt, int points_per_face,
                                 double band, std::uint64_t seed);

}  // namespace deepls
