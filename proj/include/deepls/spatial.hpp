#pragma once

// Exact nearest-neighbour and closest-triangle acceleration structures.

#include "deepls/common.hpp"
#include "deepls/geometry.hpp"
#include "deepls/mesh.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace deepls {

// Static kd-tree over 3D points. Queries return the same squared distance as
// a brute-force scan computing (q - p).squaredNorm().
class PointIndex {
 public:
  PointIndex() = default;
  explicit PointIndex(std::vector<Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  struct Hit {
    int index = -1;
    double squared_distance = std::numeric_limits<double>::infinity();
  };
  Hit nearest(const Vec3& query) const;
  /// +inf for an empty index.
  double nearest_distance(const Vec3& query) const;

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int left = -1;
    int right = -1;
    int axis = -1;
    double split = 0.0;
  };
  int build(int begin, int end);
  void search(int node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Nearest distance from `query` to `points` (exact; +inf when empty).
double nearest_observation_distance(std::span<const Vec3> points, const Vec3& query);

// BVH over a triangle mesh: closest point, signed distance via angle-weighted
// pseudonormals, and ray casting.
class MeshDistance {
 public:
  explicit MeshDistance(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }

  struct Closest {
    Vec3 point = Vec3::Zero();
    double squared_distance = std::numeric_limits<double>::infinity();
    int triangle = -1;
    int feature = -1;  // 0..2 vertex, 3..5 edge (01, 12, 20), 6 face
  };
  Closest closest(const Vec3& p) const;
  /// Negative inside, using the mesh's outward orientation.
  double signed_distance(const Vec3& p) const;
  /// Distance along the ray to the first hit, if any.
  std::optional<double> raycast(const Vec3& origin, const Vec3& direction,
                                double max_t = std::numeric_limits<double>::infinity()) const;
  /// Number of triangle crossings of a ray (for parity inside tests).
  int crossing_count(const Vec3& origin, const Vec3& direction) const;

 private:
  struct Node {
    Aabb box;
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;
  };
  int build(int begin, int end);
  void closest_in(int node, const Vec3& p, Closest& best) const;
  Vec3 pseudonormal(int triangle, int feature) const;

  TriangleMesh mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  std::vector<Vec3> face_normals_;
  std::vector<Vec3> vertex_normals_;
  std::vector<std::array<Vec3, 3>> edge_normals_;  // per triangle edge
};

}  // namespace deepls
