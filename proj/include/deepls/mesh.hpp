#pragma once

#include "deepls/common.hpp"
#include "deepls/geometry.hpp"

#include <array>
#include <random>
#include <vector>

namespace deepls {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  /// Throws DataError on out-of-range indices or non-finite vertices.
  void validate() const;
  Aabb bounds() const;
  double area() const;
  /// Signed enclosed volume (positive for outward-oriented closed meshes).
  double signed_volume() const;
  /// V - E + F counting unique undirected edges.
  long euler_characteristic() const;
  /// Number of undirected edges not shared by exactly two triangles.
  std::size_t boundary_edge_count() const;
};

/// Subdivided icosahedron projected to a sphere.
TriangleMesh make_icosphere(const Vec3& center, double radius, int subdivisions);

/// Area-weighted random surface points; degenerate triangles never chosen.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count,
                                 std::mt19937_64& rng, std::vector<int>* triangle_ids = nullptr);

/// Vertices plus triangle centroids; a deterministic surface point set.
std::vector<Vec3> surface_points_deterministic(const TriangleMesh& mesh);

Vec3 triangle_normal(const TriangleMesh& mesh, int tri);  // unnormalized (2x area)

}  // namespace deepls
