#include "deepls/pipeline.hpp"

#include "deepls/inference.hpp"
#include "deepls/metrics.hpp"
#include "deepls/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace deepls {

void VoxelSamplingConfig::validate() const {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) throw ConfigError("voxel size must be positive");
  if (!(surface_density >= 0.0 && uniform_density >= 0.0)) throw ConfigError("sample densities must be nonnegative");
  if (sigmas.empty()) throw ConfigError("at least one perturbation scale is needed");
  for (double s : sigmas)
    if (!(s >= 0.0)) throw ConfigError("perturbation scales must be nonnegative");
  if (!(pad_voxels >= 0.0)) throw ConfigError("padding must be nonnegative");
  if (!(truncation_voxels > 0.0)) throw ConfigError("truncation must be positive");
}

SurfaceSampleConfig VoxelSamplingConfig::resolve(double surface_area, const Aabb& bounds) const {
  validate();
  const double v = voxel_size;
  const double diag = bounds.diagonal();
  SurfaceSampleConfig sc;
  sc.seed = seed;
  sc.pad_fraction = diag > 0.0 ? pad_voxels * v / diag : 0.0;
  const Vec3 ext = bounds.extent().array() + 2.0 * pad_voxels * v;
  sc.n_surface = static_cast<std::size_t>(std::ceil(surface_density * surface_area / (v * v)));
  sc.n_uniform = static_cast<std::size_t>(std::ceil(uniform_density * ext.prod() / (v * v * v)));
  for (double s : sigmas) sc.sigmas.push_back(s * v);
  sc.truncation = truncation_voxels * v;
  return sc;
}

std::vector<SdfSample> sample_mesh_scene(const TriangleMesh& mesh, const MeshDistance& distance,
                                         const VoxelSamplingConfig& config) {
  if (mesh.triangles.empty()) throw DataError("cannot sample an empty mesh");
  return sample_mesh(distance, config.resolve(mesh.area(), mesh.bounds()));
}

void GridSetup::validate() const {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) throw ConfigError("voxel size must be positive");
  if (!(receptive_factor >= 0.5)) throw ConfigError("receptive factor must be at least 0.5");
  if (!(allocation_band >= 0.0)) throw ConfigError("allocation band must be nonnegative");
  if (dilation < 0) throw ConfigError("dilation must be nonnegative");
  if (code_dim < 1) throw ConfigError("code size must be positive");
}

LatentGrid allocate_grid(std::span<const SdfSample> samples, const GridSetup& setup) {
  setup.validate();
  const auto near = near_surface_positions(samples, setup.allocation_band * setup.voxel_size);
  if (near.empty()) throw DataError("no samples lie near the surface; nothing to allocate");
  Aabb box;
  for (const auto& p : near) box.extend(p);
  const Vec3 origin = (box.lo / setup.voxel_size).array().floor() * setup.voxel_size;
  LatentGrid grid(origin, setup.voxel_size, setup.code_dim, setup.receptive_factor);
  grid.allocate(near, setup.seed, setup.dilation);
  return grid;
}

ProbeSet near_surface_probes(const std::function<double(const Vec3&)>& sdf, const TriangleMesh& surface,
                             std::size_t count, double sigma, double band, std::uint64_t seed) {
  if (surface.triangles.empty()) throw DataError("cannot probe an empty surface");
  if (!(sigma >= 0.0 && band >= 0.0)) throw ConfigError("probe scales must be nonnegative");
  std::mt19937_64 rng(seed);
  const auto base = sample_surface(surface, count, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  ProbeSet probes;
  for (const auto& b : base) {
    const Vec3 p = b + sigma * Vec3(normal(rng), normal(rng), normal(rng));
    const double d = sdf(p);
    if (std::abs(d) > band) continue;
    probes.points.push_back(p);
    probes.sdf.push_back(d);
  }
  return probes;
}

ProbeSet near_surface_probes(const TriangleMesh& mesh, const MeshDistance& distance, std::size_t count,
                             double sigma, double band, std::uint64_t seed) {
  return near_surface_probes([&](const Vec3& p) { return distance.signed_distance(p); }, mesh, count, sigma,
                             band, seed);
}

RmseReport field_rmse(const std::function<std::optional<double>(const Vec3&)>& field, const ProbeSet& probes,
                      double diagonal) {
  if (probes.points.empty()) throw DataError("probe set is empty");
  std::vector<std::optional<double>> predicted(probes.points.size());
  for (std::size_t i = 0; i < probes.points.size(); ++i) predicted[i] = field(probes.points[i]);
  RmseReport r;
  r.relative = sdf_rmse_relative(predicted, probes.sdf, diagonal, &r.used);
  r.rmse = r.relative * diagonal;
  r.coverage = static_cast<double>(r.used) / static_cast<double>(probes.points.size());
  return r;
}

RmseReport grid_rmse(const DecoderParams<Real>& decoder, const LatentGrid& grid, const ProbeSet& probes,
                     double diagonal) {
  if (probes.points.empty()) throw DataError("probe set is empty");
  std::vector<double> values(probes.points.size());
  std::vector<std::uint8_t> valid(probes.points.size());
  query_sdf_batch(decoder, grid, probes.points, values, valid);
  std::vector<std::optional<double>> predicted(probes.points.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (valid[i]) predicted[i] = values[i];
  RmseReport r;
  r.relative = sdf_rmse_relative(predicted, probes.sdf, diagonal, &r.used);
  r.rmse = r.relative * diagonal;
  r.coverage = static_cast<double>(r.used) / static_cast<double>(probes.points.size());
  return r;
}

BorderReport border_disagreement(const DecoderParams<Real>& decoder, const LatentGrid& grid,
                                 const std::function<double(const Vec3&)>& gt, int points_per_face,
                                 double band, std::uint64_t seed) {
  check_compatible(decoder, grid);
  if (points_per_face < 1) throw ConfigError("points per face must be positive");
  const double v = grid.voxel_size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  std::vector<double> gaps;
  const auto& indices = grid.indices();
  for (std::size_t s = 0; s < indices.size(); ++s) {
    for (int axis = 0; axis < 3; ++axis) {
      VoxelIndex nb = indices[s];
      (axis == 0 ? nb.i : axis == 1 ? nb.j : nb.k) += 1;
      const auto other = grid.slot(nb);
      if (!other) continue;
      const Vec3 c = grid.center(indices[s]);
      for (int k = 0; k < points_per_face; ++k) {
        Vec3 p = c;
        p(axis) += 0.5 * v;
        p((axis + 1) % 3) += unit(rng) * v;
        p((axis + 2) % 3) += unit(rng) * v;
        if (std::abs(gt(p)) > band) continue;
        gaps.push_back(std::abs(decode_in_voxel(decoder, grid, static_cast<int>(s), p) -
                                decode_in_voxel(decoder, grid, *other, p)));
      }
    }
  }
  if (gaps.empty()) throw DataError("no shared faces near the surface");
  BorderReport r;
  r.count = gaps.size();
  r.median = nearest_rank_percentile(gaps, 50.0);
  r.p90 = nearest_rank_percentile(gaps, 90.0);
  return r;
}

}  // namespace deepls
