#pragma once

// Procedural scenes: the random-pose primitive corpus, smooth blob meshes and
// orbiting camera rigs.

#include "deepls/common.hpp"
#include "deepls/geometry.hpp"
#include "deepls/mesh.hpp"
#include "deepls/sampling.hpp"

#include <cstdint>
#include <vector>

namespace deepls {

struct CorpusConfig {
  int count = 200;
  double min_size = 1.5;  // half-extent / radius range, scene units
  double max_size = 6.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Random kinds, sizes and rotations, each centered at the origin.
std::vector<PrimitiveShape> generate_primitive_corpus(const CorpusConfig& config);

struct BlobConfig {
  int lobes = 5;
  double extent = 1.0;      // largest bounding-box side of the result
  double smoothness = 0.15;  // smooth-min blend radius, fraction of extent
  int lattice = 96;         // marching-cubes cells along the largest side
  std::uint64_t seed = 7;
};

/// Smooth union of random ellipsoids, meshed and centered at the origin.
TriangleMesh make_blob_mesh(const BlobConfig& config);

/// `count` cameras on a circle around `target` at `elevation` radians,
/// looking at the target with world z up.
std::vector<RigidTransform> orbit_cameras(const Vec3& target, double radius, int count, double elevation);

/// Eight cameras along the cube-corner directions (+-1, +-1, +-1) at
/// `radius` from `target`, covering every side of a convex object.
std::vector<RigidTransform> corner_cameras(const Vec3& target, double radius);

}  // namespace deepls
