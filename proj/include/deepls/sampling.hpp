#pragma once

// SDF sample generation from analytic primitives, triangle meshes and depth
// frames.

#include "deepls/common.hpp"
#include "deepls/geometry.hpp"
#include "deepls/mesh.hpp"
#include "deepls/spatial.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace deepls {

struct SdfSample {
  Vec3 position = Vec3::Zero();
  double sdf = 0.0;
  double weight = 1.0;
};

struct CameraIntrinsics {
  int width = 64;
  int height = 48;
  double fx = 60.0;
  double fy = 60.0;
  double cx = 32.0;
  double cy = 24.0;

  void validate() const;
};

// Pinhole depth image. Stored in the precision of the file format so that
// save/load round trips are exact. Pixel (u, v) looks through image point
// (u, v); depth is the camera-space z of the hit, 0 where invalid.
struct DepthFrame {
  int width = 0;
  int height = 0;
  float fx = 0.0F;
  float fy = 0.0F;
  float cx = 0.0F;
  float cy = 0.0F;
  std::array<float, 16> camera_to_world{};  // row-major
  std::vector<float> depth;                 // row-major, height x width

  void validate() const;
  float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
  RigidTransform pose() const;
  void set_pose(const RigidTransform& pose);
  CameraIntrinsics intrinsics() const;
  /// Camera-space ray direction with unit z component.
  Vec3 ray_camera(int u, int v) const;
  /// World point for pixel (u, v) at depth z.
  Vec3 backproject(int u, int v, double z) const;
  std::size_t valid_count() const;
};

DepthFrame make_frame(const CameraIntrinsics& intrinsics, const RigidTransform& camera_to_world);

/// Ray casting. Primitive scenes are the union of their shapes (sphere traced
/// on the min of the exact SDFs); meshes use the triangle BVH.
DepthFrame render_depth(std::span<const PrimitiveShape> scene, const CameraIntrinsics& intrinsics,
                        const RigidTransform& camera_to_world);
DepthFrame render_depth(const MeshDistance& mesh, const CameraIntrinsics& intrinsics,
                        const RigidTransform& camera_to_world);

/// Additive Gaussian noise on valid pixels (values stay positive).
void add_depth_noise(DepthFrame& frame, double sigma, std::uint64_t seed);

inline constexpr double kMinDepthWeight = 0.05;

/// clamp(z_ref / z, w_min, 1). Throws ContractError for z <= 0.
double weight_for_depth(double z, double z_ref, double w_min = kMinDepthWeight);

struct DepthSampleConfig {
  double displacement = 0.015;
  double truncation = 0.1;
  double free_space_step = 0.05;
  int free_space_per_ray = 2;  // samples per pixel, starting one truncation from the surface
  int pixel_stride = 1;
  double z_ref = 1.0;
  double w_min = kMinDepthWeight;
  /// Pixels whose 4-neighbourhood differs in depth by more than this fraction
  /// of the pixel depth are treated as silhouettes and skipped.
  double max_relative_jump = 0.05;

  void validate() const;
};

/// Pixels that receive samples: valid depth, all four neighbours valid and
/// continuous, on the stride lattice.
std::vector<std::uint8_t> usable_pixels(const DepthFrame& frame, const DepthSampleConfig& config);

/// Per usable pixel: a zero sample at the surface point, samples at +/-d along
/// the camera-facing normal with sdf +/-d, then free-space samples along the
/// ray toward the camera with sdf = min(distance to the surface point,
/// truncation). Samples appear pixel by pixel in row-major order.
std::vector<SdfSample> samples_from_depth(const DepthFrame& frame, const DepthSampleConfig& config);

/// Estimated unit normal (camera-facing) of a usable pixel, world frame.
Vec3 depth_normal(const DepthFrame& frame, int u, int v);

struct SurfaceSampleConfig {
  std::size_t n_surface = 0;
  std::size_t n_uniform = 0;
  std::uint64_t seed = 0;
  /// Perturbation scales (absolute). Empty: 0.5% and 0.05% of the bounding
  /// box diagonal. Surface samples cycle through the scales.
  std::vector<double> sigmas;
  double pad_fraction = 0.05;  // uniform box padding, fraction of the diagonal
  double truncation = std::numeric_limits<double>::infinity();
};

/// Signed distances from the mesh's closest triangle (pseudonormal sign).
std::vector<SdfSample> sample_mesh(const MeshDistance& mesh, const SurfaceSampleConfig& config);
std::vector<SdfSample> sample_mesh(const TriangleMesh& mesh, const SurfaceSampleConfig& config);

/// Union SDF of a primitive scene.
double scene_sdf(std::span<const PrimitiveShape> scene, const Vec3& p);
Aabb scene_bounds(std::span<const PrimitiveShape> scene);

/// Same scheme for analytic primitive scenes: surface points come from a
/// fine marching-cubes tessellation projected onto the exact surface.
std::vector<SdfSample> sample_primitives(std::span<const PrimitiveShape> scene,
                                         const SurfaceSampleConfig& config,
                                         double tessellation_step);

/// Triangle mesh of a primitive scene (marching cubes at `step`).
TriangleMesh primitive_mesh(std::span<const PrimitiveShape> scene, double step);

std::vector<Vec3> positions_of(std::span<const SdfSample> samples);

/// Positions of samples with |sdf| <= band.
std::vector<Vec3> near_surface_positions(std::span<const SdfSample> samples, double band);

}  // namespace deepls
