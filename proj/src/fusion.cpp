#include "deepls/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace deepls {

TsdfVolume::TsdfVolume(Vec3 origin, double voxel_size, std::array<int, 3> dims, double truncation)
    : origin_(std::move(origin)), voxel_size_(voxel_size), dims_(dims), truncation_(truncation) {
  if (!(voxel_size > 0.0)) throw ConfigError("fusion voxel size must be positive");
  if (!(truncation > 0.0)) throw ConfigError("fusion truncation must be positive");
  for (int d : dims)
    if (d < 1) throw ConfigError("fusion volume dimensions must be positive");
  const double count = static_cast<double>(dims[0]) * dims[1] * dims[2];
  if (count > 2e9) throw ConfigError("fusion volume is too large");
  tsdf_.assign(static_cast<std::size_t>(count), 1.0F);
  weight_.assign(static_cast<std::size_t>(count), 0.0F);
}

TsdfVolume TsdfVolume::covering(const Aabb& region, double voxel_size, double truncation) {
  if (region.empty()) throw ConfigError("fusion region is empty");
  if (!(voxel_size > 0.0)) throw ConfigError("fusion voxel size must be positive");
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) {
    dims[a] = static_cast<int>(std::ceil(region.extent()(a) / voxel_size - 1e-9)) + 1;
  }
  return TsdfVolume(region.lo, voxel_size, dims, truncation);
}

void TsdfVolume::assign(std::vector<float> tsdf, std::vector<float> weight) {
  if (tsdf.size() != tsdf_.size() || weight.size() != weight_.size()) {
    throw DataError("tsdf payload does not match the volume dimensions");
  }
  for (std::size_t i = 0; i < tsdf.size(); ++i) {
    if (!(tsdf[i] >= -1.0F && tsdf[i] <= 1.0F)) throw DataError("tsdf value outside [-1, 1]");
    if (!(weight[i] >= 0.0F) || !std::isfinite(weight[i])) throw DataError("tsdf weight must be nonnegative");
  }
  tsdf_ = std::move(tsdf);
  weight_ = std::move(weight);
}

void TsdfVolume::integrate(const DepthFrame& frame, const FusionConfig& config) {
  frame.validate();
  const RigidTransform world_to_camera = frame.pose().inverse();
  const double fx = frame.fx;
  const double fy = frame.fy;
  const double cx = frame.cx;
  const double cy = frame.cy;
  for (int k = 0; k < dims_[2]; ++k) {
    for (int j = 0; j < dims_[1]; ++j) {
      for (int i = 0; i < dims_[0]; ++i) {
        const Vec3 q = world_to_camera.apply(position(i, j, k));
        if (q.z() <= 0.0) continue;
        const long u = std::lround(fx * q.x() / q.z() + cx);
        const long v = std::lround(fy * q.y() / q.z() + cy);
        if (u < 0 || v < 0 || u >= frame.width || v >= frame.height) continue;
        const double depth = frame.at(static_cast<int>(u), static_cast<int>(v));
        if (depth <= 0.0) continue;
        const double d = depth - q.z();
        if (d < -truncation_) continue;
        const float obs = static_cast<float>(std::min(d, truncation_) / truncation_);
        const float w_new = static_cast<float>(weight_for_depth(depth, config.z_ref, config.w_min));
        const std::size_t at = linear(i, j, k);
        const double w = weight_[at];
        const double fused = (w * tsdf_[at] + static_cast<double>(w_new) * obs) / (w + w_new);
        tsdf_[at] = static_cast<float>(std::clamp(fused, -1.0, 1.0));
        double w_total = w + w_new;
        if (config.max_weight > 0.0) w_total = std::min(w_total, config.max_weight);
        weight_[at] = static_cast<float>(w_total);
      }
    }
  }
}

std::optional<double> TsdfVolume::query(const Vec3& world, double min_weight) const {
  const Vec3 u = (world - origin_) / voxel_size_;
  std::array<int, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    if (!(u(a) >= 0.0) || u(a) > dims_[a] - 1) return std::nullopt;
    base[a] = std::min(static_cast<int>(std::floor(u(a))), std::max(dims_[a] - 2, 0));
    frac[a] = u(a) - base[a];
  }
  double value = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int di = c & 1;
    const int dj = (c >> 1) & 1;
    const int dk = (c >> 2) & 1;
    const double wx = di ? frac[0] : 1.0 - frac[0];
    const double wy = dj ? frac[1] : 1.0 - frac[1];
    const double wz = dk ? frac[2] : 1.0 - frac[2];
    const int i = std::min(base[0] + di, dims_[0] - 1);
    const int j = std::min(base[1] + dj, dims_[1] - 1);
    const int k = std::min(base[2] + dk, dims_[2] - 1);
    if (weight_[linear(i, j, k)] <= min_weight) return std::nullopt;
    value += wx * wy * wz * tsdf_[linear(i, j, k)];
  }
  return value * truncation_;
}

SdfBatchFn TsdfVolume::source(double min_weight) const {
  return [this, min_weight](std::span<const Vec3> points, std::span<double> values,
                            std::span<std::uint8_t> valid) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      const auto q = query(points[j], min_weight);
      valid[j] = q ? 1 : 0;
      values[j] = q.value_or(0.0);
    }
  };
}

Aabb TsdfVolume::bounds() const {
  return {origin_, position(dims_[0] - 1, dims_[1] - 1, dims_[2] - 1)};
}

}  // namespace deepls
