#pragma once

// Sparse voxel partition holding one latent code per allocated voxel.
// Voxel (i,j,k) covers [origin + i*size, origin + (i+1)*size) per axis.

#include "deepls/common.hpp"
#include "deepls/geometry.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace deepls {

struct VoxelIndex {
  int i = 0;
  int j = 0;
  int k = 0;

  bool operator==(const VoxelIndex&) const = default;
  auto operator<=>(const VoxelIndex&) const = default;
};

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(v.i);
    h = h * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint32_t>(v.j);
    h = h * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint32_t>(v.k);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

inline constexpr double kDefaultReceptiveFactor = 1.5;
inline constexpr double kCodeInitStd = 0.01;

class LatentGrid {
 public:
  LatentGrid() = default;
  LatentGrid(Vec3 origin, double voxel_size, int code_dim,
             double receptive_factor = kDefaultReceptiveFactor);

  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  int code_dim() const { return code_dim_; }
  double receptive_factor() const { return receptive_factor_; }
  void set_receptive_factor(double factor);

  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  /// Allocated voxels in ascending (i, j, k) order; slot s refers to indices()[s].
  const std::vector<VoxelIndex>& indices() const { return indices_; }
  std::optional<int> slot(const VoxelIndex& idx) const;

  Eigen::Ref<VectorX<Real>> code(int slot) { return codes_.col(slot); }
  Eigen::Ref<const VectorX<Real>> code(int slot) const { return codes_.col(slot); }
  const MatrixX<Real>& codes() const { return codes_; }  // code_dim x size
  MatrixX<Real>& codes() { return codes_; }

  /// Allocates every voxel containing a point (plus a `dilation`-voxel shell).
  /// New codes ~ N(0, init_std^2), seeded per voxel index so the result does
  /// not depend on point order. Existing codes are kept. Returns the number of
  /// newly allocated voxels.
  std::size_t allocate(std::span<const Vec3> points, std::uint64_t seed, int dilation = 0,
                       double init_std = kCodeInitStd);
  /// Inserts explicit voxels with the given codes (used by loaders).
  void assign(std::vector<VoxelIndex> indices, MatrixX<Real> codes);

  VoxelIndex containing(const Vec3& world) const;
  Vec3 center(const VoxelIndex& idx) const;
  /// world - center(idx), scene units.
  Vec3 to_local(const VoxelIndex& idx, const Vec3& world) const { return world - center(idx); }
  Vec3 to_world(const VoxelIndex& idx, const Vec3& local) const { return local + center(idx); }
  /// Local offset divided by the voxel size: the decoder's input coordinates.
  Vec3 to_decoder(const VoxelIndex& idx, const Vec3& world) const {
    return to_local(idx, world) / voxel_size_;
  }

  /// Allocated voxels whose center c satisfies -f*size <= world - c < f*size
  /// on every axis (f = receptive factor unless given). Ascending order.
  std::vector<int> slots_for_sample(const Vec3& world, std::optional<double> factor = {}) const;
  std::vector<VoxelIndex> voxels_for_sample(const Vec3& world,
                                            std::optional<double> factor = {}) const;
  /// Slot of the containing voxel, if allocated.
  std::optional<int> slot_for_query(const Vec3& world) const;
  std::optional<VoxelIndex> voxel_for_query(const Vec3& world) const;
  /// Union of the allocated voxel cubes (empty box when nothing is allocated).
  Aabb bounds() const;

 private:
  void rebuild_lookup();

  Vec3 origin_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  int code_dim_ = 0;
  double receptive_factor_ = kDefaultReceptiveFactor;
  std::vector<VoxelIndex> indices_;
  MatrixX<Real> codes_;
  std::unordered_map<VoxelIndex, int, VoxelIndexHash> lookup_;
};

/// Per-slot sample index lists under the grid's receptive field.
std::vector<std::vector<int>> assign_samples(const LatentGrid& grid, std::span<const Vec3> positions,
                                             std::optional<double> factor = {});

}  // namespace deepls
