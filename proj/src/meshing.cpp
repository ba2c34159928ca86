#include "deepls/meshing.hpp"

#include "marching_cubes_tables.hpp"

#include <array>
#include <cmath>
#include <unordered_map>
#include <vector>

namespace deepls {
namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

// Edge -> (lower corner, axis) in the canonical low-to-high direction.
struct EdgeDef {
  int corner;
  int axis;
};
constexpr std::array<EdgeDef, 12> kEdge = {{
    {0, 0}, {1, 1}, {3, 0}, {0, 1}, {4, 0}, {5, 1}, {7, 0}, {4, 1}, {0, 2}, {1, 2}, {2, 2}, {3, 2},
}};

struct Slab {
  std::vector<double> value;
  std::vector<std::uint8_t> valid;
  std::vector<double> mask_distance;  // NaN until computed
};

}  // namespace

SdfBatchFn pointwise_source(std::function<double(const Vec3&)> sdf) {
  return [sdf = std::move(sdf)](std::span<const Vec3> points, std::span<double> values,
                                std::span<std::uint8_t> valid) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      values[j] = sdf(points[j]);
      valid[j] = std::isfinite(values[j]) ? 1 : 0;
    }
  };
}

void ExtractionConfig::validate() const {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw ConfigError("resolution must be positive");
  if (!(mask_radius > 0.0)) throw ConfigError("mask radius must be positive");
  if (!std::isfinite(iso_value)) throw ConfigError("iso value must be finite");
}

TriangleMesh extract(const SdfBatchFn& source, const Aabb& region, const ExtractionConfig& config,
                     const PointIndex* mask, ExtractionStats* stats) {
  config.validate();
  const bool use_mask = std::isfinite(config.mask_radius);
  if (use_mask && mask == nullptr) throw ContractError("finite mask radius needs observed points");
  ExtractionStats local;
  TriangleMesh mesh;
  if (region.empty()) {
    if (stats) *stats = local;
    return mesh;
  }
  const double h = config.resolution;
  const Vec3 ext = region.extent();
  std::array<long, 3> n{};
  for (int a = 0; a < 3; ++a) n[a] = static_cast<long>(std::floor(ext(a) / h + 1e-9)) + 1;
  if (n[0] < 2 || n[1] < 2 || n[2] < 2) {
    if (stats) *stats = local;
    return mesh;
  }
  const long nx = n[0];
  const long ny = n[1];
  const long nz = n[2];
  if (static_cast<double>(nx) * ny * nz > 4e9) throw ConfigError("extraction lattice is too large");
  local.nodes = static_cast<std::size_t>(nx * ny * nz);
  const std::size_t slab_size = static_cast<std::size_t>(nx * ny);

  auto node_pos = [&](long i, long j, long k) {
    return Vec3(region.lo.x() + static_cast<double>(i) * h, region.lo.y() + static_cast<double>(j) * h,
                region.lo.z() + static_cast<double>(k) * h);
  };
  std::vector<Vec3> slab_points(slab_size);
  auto fill = [&](Slab& slab, long k) {
    for (long j = 0; j < ny; ++j)
      for (long i = 0; i < nx; ++i) slab_points[static_cast<std::size_t>(i + nx * j)] = node_pos(i, j, k);
    slab.value.assign(slab_size, 0.0);
    slab.valid.assign(slab_size, 0);
    slab.mask_distance.assign(slab_size, std::numeric_limits<double>::quiet_NaN());
    source(slab_points, slab.value, slab.valid);
  };

  std::array<Slab, 2> slabs;
  fill(slabs[0], 0);
  std::unordered_map<std::uint64_t, int> edge_vertex;
  const double iso = config.iso_value;

  for (long k = 0; k + 1 < nz; ++k) {
    Slab& lower = slabs[k % 2];
    Slab& upper = slabs[(k + 1) % 2];
    fill(upper, k + 1);
    auto slab_of = [&](int corner) -> Slab& { return kCorner[corner][2] ? upper : lower; };

    for (long j = 0; j + 1 < ny; ++j) {
      for (long i = 0; i + 1 < nx; ++i) {
        std::array<double, 8> v{};
        std::array<std::size_t, 8> at{};
        bool available = true;
        for (int c = 0; c < 8; ++c) {
          at[c] = static_cast<std::size_t>((i + kCorner[c][0]) + nx * (j + kCorner[c][1]));
          const Slab& s = slab_of(c);
          if (!s.valid[at[c]]) {
            available = false;
            break;
          }
          v[c] = s.value[at[c]];
        }
        if (!available) {
          ++local.cells_unavailable;
          continue;
        }
        int cube = 0;
        for (int c = 0; c < 8; ++c)
          if (v[c] < iso) cube |= 1 << c;
        const int edges = mc_tables::kEdgeTable[cube];
        if (edges == 0) continue;
        ++local.cells_with_crossing;
        if (use_mask) {
          bool near = true;
          for (int c = 0; c < 8 && near; ++c) {
            Slab& s = slab_of(c);
            double& d = s.mask_distance[at[c]];
            if (std::isnan(d)) {
              d = mask->nearest_distance(node_pos(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]));
            }
            near = d <= config.mask_radius;
          }
          if (!near) {
            ++local.cells_masked;
            continue;
          }
        }
        ++local.cells_emitted;
        std::array<int, 12> vid{};
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          const int c0 = kEdge[e].corner;
          const int axis = kEdge[e].axis;
          const long gi = i + kCorner[c0][0];
          const long gj = j + kCorner[c0][1];
          const long gk = k + kCorner[c0][2];
          const std::uint64_t key =
              (static_cast<std::uint64_t>(gi + nx * (gj + ny * gk)) * 3U) + static_cast<std::uint64_t>(axis);
          auto it = edge_vertex.find(key);
          if (it != edge_vertex.end()) {
            vid[e] = it->second;
            continue;
          }
          int c1 = c0;
          for (int c = 0; c < 8; ++c) {
            bool match = true;
            for (int a = 0; a < 3; ++a)
              match = match && kCorner[c][a] == kCorner[c0][a] + (a == axis ? 1 : 0);
            if (match) c1 = c;
          }
          const double va = v[c0];
          const double vb = v[c1];
          const double t = (iso - va) / (vb - va);
          Vec3 p = node_pos(gi, gj, gk);
          p(axis) += t * h;
          mesh.vertices.push_back(p);
          vid[e] = static_cast<int>(mesh.vertices.size()) - 1;
          edge_vertex.emplace(key, vid[e]);
        }
        const auto& tri = mc_tables::kTriangleTable[cube];
        for (int t = 0; t < 16 && tri[t] >= 0; t += 3) {
          // Table winding faces inward for "inside = below iso"; reverse it.
          mesh.triangles.push_back({vid[tri[t]], vid[tri[t + 2]], vid[tri[t + 1]]});
        }
      }
    }
  }
  if (stats) *stats = local;
  return mesh;
}

}  // namespace deepls
