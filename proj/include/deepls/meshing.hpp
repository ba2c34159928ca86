#pragma once

// Marching-cubes isosurface extraction from any batched SDF source, with an
// optional mask that skips cells far from observed points.

#include "deepls/common.hpp"
#include "deepls/geometry.hpp"
#include "deepls/mesh.hpp"
#include "deepls/spatial.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <span>

namespace deepls {

/// Fills values[j] for points[j]; sets valid[j] = 0 where the source has no
/// value (unallocated voxel, unobserved fusion cell).
using SdfBatchFn =
    std::function<void(std::span<const Vec3> points, std::span<double> values, std::span<std::uint8_t> valid)>;

/// Adapter for a pointwise analytic SDF.
SdfBatchFn pointwise_source(std::function<double(const Vec3&)> sdf);

struct ExtractionConfig {
  double resolution = 0.01;  // lattice spacing
  double mask_radius = std::numeric_limits<double>::infinity();
  double iso_value = 0.0;

  void validate() const;
};

struct ExtractionStats {
  std::size_t nodes = 0;
  std::size_t cells_with_crossing = 0;  // sign change among available corners
  std::size_t cells_unavailable = 0;    // skipped: a corner without a value
  std::size_t cells_masked = 0;         // skipped: a corner beyond mask_radius
  std::size_t cells_emitted = 0;
};

/// Lattice nodes lo + i * resolution covering `region`. A corner value equal
/// to the iso level counts as outside. `mask` may be null (no mask); with a
/// finite mask_radius it must be given.
TriangleMesh extract(const SdfBatchFn& source, const Aabb& region, const ExtractionConfig& config,
                     const PointIndex* mask = nullptr, ExtractionStats* stats = nullptr);

}  // namespace deepls
