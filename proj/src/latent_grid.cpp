#include "deepls/latent_grid.hpp"

#include "deepls/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace deepls {
namespace {

int floor_index(double u) {
  const double f = std::floor(u);
  if (!(std::abs(f) < 1e9)) throw DataError("point lies outside the representable voxel range");
  return static_cast<int>(f);
}

}  // namespace

LatentGrid::LatentGrid(Vec3 origin, double voxel_size, int code_dim, double receptive_factor)
    : origin_(std::move(origin)), voxel_size_(voxel_size), code_dim_(code_dim) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) throw ConfigError("voxel size must be positive");
  if (code_dim <= 0) throw ConfigError("code_dim must be positive");
  if (!origin_.allFinite()) throw ConfigError("grid origin must be finite");
  set_receptive_factor(receptive_factor);
  codes_.resize(code_dim_, 0);
}

void LatentGrid::set_receptive_factor(double factor) {
  if (!(factor >= 0.5) || !std::isfinite(factor)) {
    throw ConfigError("receptive factor must be at least 0.5");
  }
  receptive_factor_ = factor;
}

std::optional<int> LatentGrid::slot(const VoxelIndex& idx) const {
  auto it = lookup_.find(idx);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

void LatentGrid::rebuild_lookup() {
  lookup_.clear();
  lookup_.reserve(indices_.size());
  for (std::size_t s = 0; s < indices_.size(); ++s) lookup_.emplace(indices_[s], static_cast<int>(s));
}

std::size_t LatentGrid::allocate(std::span<const Vec3> points, std::uint64_t seed, int dilation,
                                 double init_std) {
  if (dilation < 0) throw ConfigError("dilation must be nonnegative");
  std::set<VoxelIndex> wanted;
  for (const auto& p : points) {
    if (!p.allFinite()) throw DataError("cannot allocate from a non-finite point");
    const VoxelIndex c = containing(p);
    for (int di = -dilation; di <= dilation; ++di)
      for (int dj = -dilation; dj <= dilation; ++dj)
        for (int dk = -dilation; dk <= dilation; ++dk) wanted.insert({c.i + di, c.j + dj, c.k + dk});
  }
  for (const auto& idx : indices_) wanted.insert(idx);
  if (wanted.size() == indices_.size()) return 0;

  std::vector<VoxelIndex> merged(wanted.begin(), wanted.end());
  MatrixX<Real> codes(code_dim_, static_cast<Eigen::Index>(merged.size()));
  std::size_t added = 0;
  for (std::size_t s = 0; s < merged.size(); ++s) {
    if (auto old = slot(merged[s])) {
      codes.col(static_cast<Eigen::Index>(s)) = codes_.col(*old);
      continue;
    }
    const VoxelIndex& v = merged[s];
    std::mt19937_64 rng(mix_seed(seed, VoxelIndexHash{}(v) ^ mix_seed(static_cast<std::uint64_t>(v.k))));
    std::normal_distribution<double> normal(0.0, init_std);
    for (int c = 0; c < code_dim_; ++c) codes(c, static_cast<Eigen::Index>(s)) = static_cast<Real>(normal(rng));
    ++added;
  }
  indices_ = std::move(merged);
  codes_ = std::move(codes);
  rebuild_lookup();
  return added;
}

void LatentGrid::assign(std::vector<VoxelIndex> indices, MatrixX<Real> codes) {
  if (codes.rows() != code_dim_ || codes.cols() != static_cast<Eigen::Index>(indices.size())) {
    throw ContractError("code matrix does not match the voxel list");
  }
  std::vector<std::size_t> order(indices.size());
  for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return indices[a] < indices[b]; });
  indices_.resize(indices.size());
  codes_.resize(code_dim_, codes.cols());
  for (std::size_t s = 0; s < order.size(); ++s) {
    indices_[s] = indices[order[s]];
    codes_.col(static_cast<Eigen::Index>(s)) = codes.col(static_cast<Eigen::Index>(order[s]));
    if (s > 0 && indices_[s] == indices_[s - 1]) throw DataError("duplicate voxel index in grid");
  }
  rebuild_lookup();
}

VoxelIndex LatentGrid::containing(const Vec3& world) const {
  const Vec3 u = (world - origin_) / voxel_size_;
  return {floor_index(u.x()), floor_index(u.y()), floor_index(u.z())};
}

Vec3 LatentGrid::center(const VoxelIndex& idx) const {
  return origin_ + voxel_size_ * Vec3(idx.i + 0.5, idx.j + 0.5, idx.k + 0.5);
}

std::vector<int> LatentGrid::slots_for_sample(const Vec3& world, std::optional<double> factor) const {
  const double f = factor.value_or(receptive_factor_);
  std::vector<int> out;
  if (indices_.empty()) return out;
  const Vec3 u = (world - origin_) / voxel_size_;
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};
  const VoxelIndex own = containing(world);
  const std::array<int, 3> own_arr{own.i, own.j, own.k};
  for (int a = 0; a < 3; ++a) {
    // Candidates bracket the exact test below; the test decides membership.
    lo[a] = floor_index(u(a) - 0.5 - f) - 1;
    hi[a] = floor_index(u(a) - 0.5 + f) + 1;
  }
  auto inside = [&](int a, int i) {
    if (i == own_arr[a]) return true;  // the containing voxel always qualifies
    const double d = (u(a) - i) - 0.5;
    return -f <= d && d < f;
  };
  for (int i = lo[0]; i <= hi[0]; ++i) {
    if (!inside(0, i)) continue;
    for (int j = lo[1]; j <= hi[1]; ++j) {
      if (!inside(1, j)) continue;
      for (int k = lo[2]; k <= hi[2]; ++k) {
        if (!inside(2, k)) continue;
        if (auto s = slot({i, j, k})) out.push_back(*s);
      }
    }
  }
  return out;
}

std::vector<VoxelIndex> LatentGrid::voxels_for_sample(const Vec3& world,
                                                      std::optional<double> factor) const {
  std::vector<VoxelIndex> out;
  for (int s : slots_for_sample(world, factor)) out.push_back(indices_[s]);
  return out;
}

std::optional<int> LatentGrid::slot_for_query(const Vec3& world) const {
  return slot(containing(world));
}

std::optional<VoxelIndex> LatentGrid::voxel_for_query(const Vec3& world) const {
  const VoxelIndex idx = containing(world);
  if (!slot(idx)) return std::nullopt;
  return idx;
}

Aabb LatentGrid::bounds() const {
  Aabb box;
  const Vec3 half = Vec3::Constant(0.5 * voxel_size_);
  for (const auto& idx : indices_) {
    box.extend(center(idx) - half);
    box.extend(center(idx) + half);
  }
  return box;
}

std::vector<std::vector<int>> assign_samples(const LatentGrid& grid, std::span<const Vec3> positions,
                                             std::optional<double> factor) {
  std::vector<std::vector<int>> per_slot(grid.size());
  for (std::size_t j = 0; j < positions.size(); ++j) {
    for (int s : grid.slots_for_sample(positions[j], factor)) per_slot[s].push_back(static_cast<int>(j));
  }
  return per_slot;
}

}  // namespace deepls
