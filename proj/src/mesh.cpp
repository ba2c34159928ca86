#include "deepls/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace deepls {
namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace

void TriangleMesh::validate() const {
  const auto n = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int idx : triangles[t]) {
      if (idx < 0 || idx >= n) {
        throw DataError("triangle " + std::to_string(t) + " references vertex " +
                        std::to_string(idx) + " but mesh has " + std::to_string(n));
      }
    }
  }
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw DataError("mesh has a non-finite vertex");
  }
}

Aabb TriangleMesh::bounds() const {
  Aabb box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

Vec3 triangle_normal(const TriangleMesh& mesh, int tri) {
  const auto& t = mesh.triangles[tri];
  const Vec3& a = mesh.vertices[t[0]];
  return (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
}

double TriangleMesh::area() const {
  double sum = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    sum += 0.5 * triangle_normal(*this, static_cast<int>(t)).norm();
  }
  return sum;
}

double TriangleMesh::signed_volume() const {
  double sum = 0.0;
  for (const auto& t : triangles) {
    sum += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  }
  return sum / 6.0;
}

long TriangleMesh::euler_characteristic() const {
  std::unordered_map<std::uint64_t, int> edges;
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) ++edges[edge_key(t[k], t[(k + 1) % 3])];
  }
  std::vector<bool> used(vertices.size(), false);
  for (const auto& t : triangles)
    for (int idx : t) used[idx] = true;
  const long v = std::count(used.begin(), used.end(), true);
  return v - static_cast<long>(edges.size()) + static_cast<long>(triangles.size());
}

std::size_t TriangleMesh::boundary_edge_count() const {
  std::unordered_map<std::uint64_t, int> edges;
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) ++edges[edge_key(t[k], t[(k + 1) % 3])];
  }
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [](const auto& e) { return e.second != 2; }));
}

TriangleMesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                             {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                             {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::uint64_t, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = edge_key(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[a] + verts[b]).normalized());
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  TriangleMesh mesh;
  mesh.vertices.reserve(verts.size());
  for (const auto& v : verts) mesh.vertices.push_back(center + radius * v);
  mesh.triangles = std::move(faces);
  return mesh;
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count,
                                 std::mt19937_64& rng, std::vector<int>* triangle_ids) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += 0.5 * triangle_normal(mesh, static_cast<int>(t)).norm();
    cumulative.push_back(total);
  }
  if (count > 0 && !(total > 0.0)) throw DataError("cannot sample a mesh with zero area");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> points;
  points.reserve(count);
  if (triangle_ids) triangle_ids->clear();
  for (std::size_t i = 0; i < count; ++i) {
    const double r = uni(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    if (it == cumulative.end()) --it;
    const int tri = static_cast<int>(it - cumulative.begin());
    double u = uni(rng);
    double v = uni(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const auto& f = mesh.triangles[tri];
    const Vec3& a = mesh.vertices[f[0]];
    points.push_back(a + u * (mesh.vertices[f[1]] - a) + v * (mesh.vertices[f[2]] - a));
    if (triangle_ids) triangle_ids->push_back(tri);
  }
  return points;
}

std::vector<Vec3> surface_points_deterministic(const TriangleMesh& mesh) {
  std::vector<Vec3> points = mesh.vertices;
  points.reserve(mesh.vertices.size() + mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    points.push_back((mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0);
  }
  return points;
}

}  // namespace deepls
