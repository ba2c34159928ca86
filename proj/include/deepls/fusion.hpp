#pragma once

// Dense TSDF volume with weighted running-average integration of depth frames.
// Voxel (i, j, k) stores the field at origin + (i, j, k) * voxel_size.

#include "deepls/common.hpp"
#include "deepls/geometry.hpp"
#include "deepls/meshing.hpp"
#include "deepls/sampling.hpp"

#include <array>
#include <optional>
#include <vector>

namespace deepls {

struct FusionConfig {
  double z_ref = 1.0;
  double w_min = kMinDepthWeight;
  double max_weight = 0.0;  // 0: no cap
  double min_weight = 0.0;  // queries need weight > min_weight at every corner
};

class TsdfVolume {
 public:
  TsdfVolume() = default;
  TsdfVolume(Vec3 origin, double voxel_size, std::array<int, 3> dims, double truncation);
  /// Volume covering `region` with the given spacing.
  static TsdfVolume covering(const Aabb& region, double voxel_size, double truncation);

  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  const std::array<int, 3>& dims() const { return dims_; }
  double truncation() const { return truncation_; }
  std::size_t voxel_count() const { return tsdf_.size(); }

  std::size_t linear(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
  }
  Vec3 position(int i, int j, int k) const { return origin_ + voxel_size_ * Vec3(i, j, k); }
  float tsdf(int i, int j, int k) const { return tsdf_[linear(i, j, k)]; }
  float weight(int i, int j, int k) const { return weight_[linear(i, j, k)]; }
  const std::vector<float>& tsdf_values() const { return tsdf_; }
  const std::vector<float>& weights() const { return weight_; }
  /// Raw setter used by loaders; validates ranges.
  void assign(std::vector<float> tsdf, std::vector<float> weight);

  void integrate(const DepthFrame& frame, const FusionConfig& config = {});

  /// Trilinear tsdf * truncation; none outside the volume or when a corner
  /// has weight <= min_weight.
  std::optional<double> query(const Vec3& world, double min_weight = 0.0) const;

  SdfBatchFn source(double min_weight = 0.0) const;
  Aabb bounds() const;

 private:
  Vec3 origin_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  std::array<int, 3> dims_{0, 0, 0};
  double truncation_ = 1.0;
  std::vector<float> tsdf_;
  std::vector<float> weight_;
};

}  // namespace deepls
