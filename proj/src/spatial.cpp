#include "deepls/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace deepls {

// ---------------------------------------------------------------- PointIndex

PointIndex::PointIndex(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / 4 + 1);
    build(0, static_cast<int>(points_.size()));
  }
}

int PointIndex::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= 8) return id;
  Aabb box;
  for (int i = begin; i < end; ++i) box.extend(points_[order_[i]]);
  int axis = 0;
  box.extent().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a](axis) < points_[b](axis); });
  const double split = points_[order_[mid]](axis);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void PointIndex::search(int node_id, const Vec3& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d = (q - points_[idx]).squaredNorm();
      if (d < best.squared_distance || (d == best.squared_distance && idx < best.index)) {
        best.squared_distance = d;
        best.index = idx;
      }
    }
    return;
  }
  const double diff = q(node.axis) - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, best);
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

PointIndex::Hit PointIndex::nearest(const Vec3& query) const {
  Hit best;
  if (!points_.empty()) search(0, query, best);
  return best;
}

double PointIndex::nearest_distance(const Vec3& query) const {
  if (points_.empty()) return std::numeric_limits<double>::infinity();
  return std::sqrt(nearest(query).squared_distance);
}

double nearest_observation_distance(std::span<const Vec3> points, const Vec3& query) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : points) best = std::min(best, (query - p).squaredNorm());
  return std::sqrt(best);
}

// -------------------------------------------------------------- MeshDistance

namespace {

// Closest point on triangle abc (Ericson, Real-Time Collision Detection 5.1.5)
// with the Voronoi feature that contains it.
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, int& feature) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    feature = 0;
    return a;
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    feature = 1;
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    feature = 3;
    const double v = d1 / (d1 - d3);
    return a + v * ab;
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    feature = 2;
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    feature = 5;
    const double w = d2 / (d2 - d6);
    return a + w * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    feature = 4;
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }
  feature = 6;
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return a + ab * v + ac * w;
}

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

bool ray_box(const Aabb& box, const Vec3& o, const Vec3& inv_d, double max_t) {
  double t0 = 0.0;
  double t1 = max_t;
  for (int k = 0; k < 3; ++k) {
    double ta = (box.lo(k) - o(k)) * inv_d(k);
    double tb = (box.hi(k) - o(k)) * inv_d(k);
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

// Moller-Trumbore; returns t > 0 on hit.
std::optional<double> ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                                   const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pvec = d.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tvec = o - a;
  const double u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = d.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qvec) * inv;
  if (t <= 1e-12) return std::nullopt;
  return t;
}

}  // namespace

MeshDistance::MeshDistance(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  mesh_.validate();
  if (mesh_.triangles.empty()) throw DataError("mesh has no triangles");
  const std::size_t nt = mesh_.triangles.size();
  face_normals_.resize(nt);
  vertex_normals_.assign(mesh_.vertices.size(), Vec3::Zero());
  std::unordered_map<std::uint64_t, Vec3> edge_sum;
  for (std::size_t t = 0; t < nt; ++t) {
    const Vec3 n = triangle_normal(mesh_, static_cast<int>(t));
    const double len = n.norm();
    face_normals_[t] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    const auto& f = mesh_.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const Vec3& v = mesh_.vertices[f[k]];
      const Vec3 e1 = mesh_.vertices[f[(k + 1) % 3]] - v;
      const Vec3 e2 = mesh_.vertices[f[(k + 2) % 3]] - v;
      const double n1 = e1.norm();
      const double n2 = e2.norm();
      if (n1 > 0.0 && n2 > 0.0) {
        const double angle = std::acos(std::clamp(e1.dot(e2) / (n1 * n2), -1.0, 1.0));
        vertex_normals_[f[k]] += angle * face_normals_[t];
      }
      auto [it, inserted] = edge_sum.try_emplace(edge_key(f[k], f[(k + 1) % 3]), Vec3::Zero());
      it->second += face_normals_[t];
    }
  }
  edge_normals_.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& f = mesh_.triangles[t];
    for (int k = 0; k < 3; ++k) edge_normals_[t][k] = edge_sum[edge_key(f[k], f[(k + 1) % 3])];
  }
  order_.resize(nt);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * nt);
  build(0, static_cast<int>(nt));
}

int MeshDistance::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Aabb box;
  Aabb centroids;
  for (int i = begin; i < end; ++i) {
    const auto& f = mesh_.triangles[order_[i]];
    Vec3 c = Vec3::Zero();
    for (int idx : f) {
      box.extend(mesh_.vertices[idx]);
      c += mesh_.vertices[idx];
    }
    centroids.extend(c / 3.0);
  }
  nodes_[id].box = box;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= 4) return id;
  int axis = 0;
  centroids.extent().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  auto centroid = [&](int t) {
    const auto& f = mesh_.triangles[t];
    return mesh_.vertices[f[0]](axis) + mesh_.vertices[f[1]](axis) + mesh_.vertices[f[2]](axis);
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return centroid(a) < centroid(b); });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void MeshDistance::closest_in(int node_id, const Vec3& p, Closest& best) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int t = order_[i];
      const auto& f = mesh_.triangles[t];
      int feature = 6;
      const Vec3 c =
          closest_on_triangle(p, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]], feature);
      const double d = (p - c).squaredNorm();
      if (d < best.squared_distance) {
        best = {c, d, t, feature};
      }
    }
    return;
  }
  const double dl = nodes_[node.left].box.squared_distance(p);
  const double dr = nodes_[node.right].box.squared_distance(p);
  const int first = dl <= dr ? node.left : node.right;
  const int second = dl <= dr ? node.right : node.left;
  const double d_first = std::min(dl, dr);
  const double d_second = std::max(dl, dr);
  if (d_first < best.squared_distance) closest_in(first, p, best);
  if (d_second < best.squared_distance) closest_in(second, p, best);
}

MeshDistance::Closest MeshDistance::closest(const Vec3& p) const {
  Closest best;
  closest_in(0, p, best);
  return best;
}

Vec3 MeshDistance::pseudonormal(int triangle, int feature) const {
  const auto& f = mesh_.triangles[triangle];
  if (feature <= 2) return vertex_normals_[f[feature]];
  if (feature <= 5) {
    // 3 = ab, 4 = bc, 5 = ca, matching edge_normals_ slot k = (k, k+1).
    return edge_normals_[triangle][feature - 3];
  }
  return face_normals_[triangle];
}

double MeshDistance::signed_distance(const Vec3& p) const {
  const Closest c = closest(p);
  const double dist = std::sqrt(c.squared_distance);
  if (dist == 0.0) return 0.0;
  const double side = (p - c.point).dot(pseudonormal(c.triangle, c.feature));
  return side < 0.0 ? -dist : dist;
}

std::optional<double> MeshDistance::raycast(const Vec3& origin, const Vec3& direction,
                                            double max_t) const {
  const Vec3 inv_d = direction.cwiseInverse();
  std::optional<double> best;
  double limit = max_t;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& node = nodes_[id];
    if (!ray_box(node.box, origin, inv_d, limit)) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto& f = mesh_.triangles[order_[i]];
        auto t = ray_triangle(origin, direction, mesh_.vertices[f[0]], mesh_.vertices[f[1]],
                              mesh_.vertices[f[2]]);
        if (t && *t < limit) {
          limit = *t;
          best = t;
        }
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return best;
}

int MeshDistance::crossing_count(const Vec3& origin, const Vec3& direction) const {
  const Vec3 inv_d = direction.cwiseInverse();
  int count = 0;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& node = nodes_[id];
    if (!ray_box(node.box, origin, inv_d, std::numeric_limits<double>::infinity())) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto& f = mesh_.triangles[order_[i]];
        if (ray_triangle(origin, direction, mesh_.vertices[f[0]], mesh_.vertices[f[1]],
                         mesh_.vertices[f[2]])) {
          ++count;
        }
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return count;
}

}  // namespace deepls
