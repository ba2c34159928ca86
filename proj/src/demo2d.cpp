#include "deepls/demo2d.hpp"

#include "deepls/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

namespace deepls {
namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

double Shape2D::sdf(const Vec2& p) const {
  switch (kind) {
    case Shape2DKind::circle:
      return (p - center).norm() - half_size.x();
    case Shape2DKind::rectangle: {
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      const Vec2 d = p - center;
      const Vec2 local(c * d.x() + s * d.y(), -s * d.x() + c * d.y());
      const Vec2 q = local.cwiseAbs() - half_size;
      return q.cwiseMax(0.0).norm() + std::min(std::max(q.x(), q.y()), 0.0);
    }
    case Shape2DKind::triangle: {
      double d = std::numeric_limits<double>::infinity();
      bool inside = true;
      for (int e = 0; e < 3; ++e) {
        const Vec2& a = corners[e];
        const Vec2& b = corners[(e + 1) % 3];
        d = std::min(d, segment_distance(p, a, b));
        if (cross2(b - a, p - a) < 0.0) inside = false;
      }
      return inside ? -d : d;
    }
  }
  throw ContractError("unknown planar shape");
}

double Scene2D::sdf(const Vec2& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : shapes) d = std::min(d, s.sdf(p));
  return d;
}

void Scene2DConfig::validate() const {
  if (!(width > 0.0 && height > 0.0)) throw ConfigError("scene extent must be positive");
  if (shapes < 1) throw ConfigError("a planar scene needs at least one shape");
  if (!(min_size > 0.0 && max_size >= min_size)) throw ConfigError("planar shape size range is invalid");
  if (2.0 * max_size >= std::min(width, height)) throw ConfigError("planar shapes do not fit the scene");
}

Scene2D make_scene2d(const Scene2DConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> size(config.min_size, config.max_size);
  std::uniform_real_distribution<double> cx(config.max_size, config.width - config.max_size);
  std::uniform_real_distribution<double> cy(config.max_size, config.height - config.max_size);
  std::uniform_real_distribution<double> turn(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> kind(0, 2);
  Scene2D scene;
  scene.width = config.width;
  scene.height = config.height;
  for (int i = 0; i < config.shapes; ++i) {
    Shape2D s;
    s.kind = static_cast<Shape2DKind>(kind(rng));
    s.center = Vec2(cx(rng), cy(rng));
    s.half_size = Vec2(size(rng), size(rng));
    s.angle = turn(rng);
    if (s.kind == Shape2DKind::triangle) {
      // Corners at increasing angles on an ellipse, so the winding is CCW.
      std::array<double, 3> a{turn(rng), turn(rng), turn(rng)};
      std::sort(a.begin(), a.end());
      if (a[1] - a[0] < 0.6 || a[2] - a[1] < 0.6 || 2.0 * std::numbers::pi - (a[2] - a[0]) < 0.6) {
        a = {a[0], a[0] + 2.0 * std::numbers::pi / 3.0, a[0] + 4.0 * std::numbers::pi / 3.0};
      }
      for (int k = 0; k < 3; ++k)
        s.corners[k] = s.center + Vec2(s.half_size.x() * std::cos(a[k]), s.half_size.y() * std::sin(a[k]));
    }
    scene.shapes.push_back(s);
  }
  return scene;
}

Vec2 CellGrid2D::center(int cx, int cy) const {
  return Vec2((cx + 0.5) * cell_size, (cy + 0.5) * cell_size);
}

std::array<int, 2> CellGrid2D::containing(const Vec2& p) const {
  const int cx = std::clamp(static_cast<int>(std::floor(p.x() / cell_size)), 0, nx - 1);
  const int cy = std::clamp(static_cast<int>(std::floor(p.y() / cell_size)), 0, ny - 1);
  return {cx, cy};
}

std::vector<PlanarSample> sample_cells(const Scene2D& scene, const CellGrid2D& grid, int per_cell,
                                       std::uint64_t seed) {
  if (per_cell < 0) throw ConfigError("samples per cell must be nonnegative");
  std::vector<PlanarSample> out;
  out.reserve(static_cast<std::size_t>(per_cell) * static_cast<std::size_t>(grid.nx * grid.ny));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int cy = 0; cy < grid.ny; ++cy) {
    for (int cx = 0; cx < grid.nx; ++cx) {
      std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(cy * grid.nx + cx)));
      for (int k = 0; k < per_cell; ++k) {
        const Vec2 p((cx + unit(rng)) * grid.cell_size, (cy + unit(rng)) * grid.cell_size);
        out.push_back({p, scene.sdf(p)});
      }
    }
  }
  return out;
}

PatchSamples<Real> planar_patch(const CellGrid2D& grid, int cx, int cy, std::span<const PlanarSample> samples,
                                double radius_factor, double truncation_cells) {
  const Vec2 c = grid.center(cx, cy);
  const double r = radius_factor * grid.cell_size;
  std::vector<int> members;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const Vec2 d = samples[j].position - c;
    if (-r <= d.x() && d.x() < r && -r <= d.y() && d.y() < r) members.push_back(static_cast<int>(j));
  }
  PatchSamples<Real> patch;
  const auto n = static_cast<Eigen::Index>(members.size());
  patch.positions.resize(2, n);
  patch.sdf.resize(n);
  patch.weights = VectorX<Real>::Ones(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& s = samples[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])];
    patch.positions.col(k) = ((s.position - c) / grid.cell_size).cast<Real>();
    patch.sdf(k) = static_cast<Real>(std::clamp(s.sdf / grid.cell_size, -truncation_cells, truncation_cells));
  }
  return patch;
}

Demo2DConfig::Demo2DConfig() {
  train.steps = 3000;
  train.batch_voxels = 16;
  train.samples_per_voxel = 64;
  encode.iterations = 300;
  encode.max_samples = 0;
  encode.early_exit = false;
}

void Demo2DConfig::validate() const {
  scene.validate();
  if (!(cell_size > 0.0)) throw ConfigError("cell size must be positive");
  if (train_scenes < 1) throw ConfigError("at least one training scene is needed");
  if (train_samples_per_cell < 1 || test_samples_per_cell < 1 || eval_samples_per_cell < 1)
    throw ConfigError("sample counts per cell must be positive");
  if (!(allocation_band > 0.0)) throw ConfigError("allocation band must be positive");
  if (!(test_noise >= 0.0)) throw ConfigError("test noise must be nonnegative");
  if (radii.empty()) throw ConfigError("the radius sweep is empty");
  for (double r : radii)
    if (!(r >= 0.5)) throw ConfigError("receptive radius must cover the cell (>= 0.5)");
  if (decoder.dim != 2) throw ConfigError("the planar study needs a 2D decoder");
  train.validate();
  encode.validate();
}

namespace {

// Cells whose samples come within `band` of the surface.
std::vector<std::array<int, 2>> used_cells(const CellGrid2D& grid, std::span<const PlanarSample> samples,
                                           int per_cell, double band) {
  std::vector<std::array<int, 2>> cells;
  for (int cy = 0; cy < grid.ny; ++cy) {
    for (int cx = 0; cx < grid.nx; ++cx) {
      const std::size_t base = static_cast<std::size_t>(cy * grid.nx + cx) * static_cast<std::size_t>(per_cell);
      bool near = false;
      for (int k = 0; k < per_cell && !near; ++k) near = std::abs(samples[base + static_cast<std::size_t>(k)].sdf) <= band;
      if (near) cells.push_back({cx, cy});
    }
  }
  return cells;
}

}  // namespace

Demo2DResult run_demo2d(const Demo2DConfig& config, const Demo2DProgress& progress) {
  config.validate();
  Demo2DResult result;
  CellGrid2D grid;
  grid.cell_size = config.cell_size;
  grid.nx = static_cast<int>(std::ceil(config.scene.width / config.cell_size));
  grid.ny = static_cast<int>(std::ceil(config.scene.height / config.cell_size));
  result.grid = grid;
  const double trunc = config.decoder.truncation;
  const double band = config.allocation_band * config.cell_size;

  std::vector<Scene2D> train_scenes;
  std::vector<std::vector<PlanarSample>> train_samples;
  for (int i = 0; i < config.train_scenes; ++i) {
    Scene2DConfig sc = config.scene;
    sc.seed = mix_seed(config.seed, static_cast<std::uint64_t>(i));
    train_scenes.push_back(make_scene2d(sc));
    train_samples.push_back(sample_cells(train_scenes.back(), grid, config.train_samples_per_cell, sc.seed ^ 0x7a11ULL));
  }
  Scene2DConfig test_config = config.scene;
  test_config.seed = mix_seed(config.seed, 0x7e57ULL);
  result.test_scene = make_scene2d(test_config);
  auto test_samples = sample_cells(result.test_scene, grid, config.test_samples_per_cell, test_config.seed ^ 1U);
  if (config.test_noise > 0.0) {
    std::mt19937_64 rng(mix_seed(test_config.seed, 0x401eULL));
    std::normal_distribution<double> noise(0.0, config.test_noise);
    for (auto& s : test_samples) s.sdf += noise(rng);
  }
  const auto eval_samples = sample_cells(result.test_scene, grid, config.eval_samples_per_cell, test_config.seed ^ 2U);
  const auto test_cells = used_cells(grid, test_samples, config.test_samples_per_cell, band);

  const int width = static_cast<int>(std::ceil(config.scene.width));
  const int height = static_cast<int>(std::ceil(config.scene.height));

  for (double radius : config.radii) {
    PatchDataset dataset;
    dataset.dim = 2;
    for (int i = 0; i < config.train_scenes; ++i) {
      for (const auto& c : used_cells(grid, train_samples[static_cast<std::size_t>(i)], config.train_samples_per_cell, band)) {
        dataset.patches.push_back(planar_patch(grid, c[0], c[1], train_samples[static_cast<std::size_t>(i)], radius, trunc));
        dataset.scene.push_back(i);
      }
    }
    const TrainResult trained = train_prior(dataset, config.decoder, config.train);

    // Encode the held-out scene's cells with the frozen decoder.
    std::vector<int> cell_slot(static_cast<std::size_t>(grid.nx * grid.ny), -1);
    MatrixX<Real> codes(config.decoder.code_dim, static_cast<Eigen::Index>(test_cells.size()));
    parallel_for(test_cells.size(), config.encode.threads, [&](std::size_t s) {
      const auto& c = test_cells[s];
      const std::uint64_t key = static_cast<std::uint64_t>(c[1] * grid.nx + c[0]);
      std::mt19937_64 rng(mix_seed(config.encode.seed, key));
      std::normal_distribution<double> normal(0.0, config.train.code_init_std);
      VectorX<Real> code(config.decoder.code_dim);
      for (Eigen::Index r = 0; r < code.size(); ++r) code(r) = static_cast<Real>(normal(rng));
      const auto patch = planar_patch(grid, c[0], c[1], test_samples, radius, trunc);
      if (!patch.empty()) encode_patch(trained.decoder, code, patch, config.encode, mix_seed(config.encode.seed ^ 0xc0deULL, key));
      codes.col(static_cast<Eigen::Index>(s)) = code;
    });
    for (std::size_t s = 0; s < test_cells.size(); ++s)
      cell_slot[static_cast<std::size_t>(test_cells[s][1] * grid.nx + test_cells[s][0])] = static_cast<int>(s);

    auto predict = [&](const Vec2& p) -> double {
      const auto c = grid.containing(p);
      const int slot = cell_slot[static_cast<std::size_t>(c[1] * grid.nx + c[0])];
      if (slot < 0) return std::numeric_limits<double>::quiet_NaN();
      VectorX<Real> local = ((p - grid.center(c[0], c[1])) / grid.cell_size).cast<Real>();
      const VectorX<Real> code = codes.col(slot);
      return static_cast<double>(decode(trained.decoder, local, code)) * grid.cell_size;
    };

    Demo2DRow row;
    row.radius = radius;
    row.train_patches = dataset.size();
    row.train_loss = trained.epoch_loss.empty() ? 0.0 : trained.epoch_loss.back();
    double sum = 0.0;
    double border_sum = 0.0;
    std::size_t border_count = 0;
    for (const auto& s : eval_samples) {
      if (std::abs(s.sdf) >= trunc * grid.cell_size) continue;
      const double pred = predict(s.position);
      if (std::isnan(pred)) continue;
      const double err = std::abs(pred - s.sdf);
      sum += err;
      ++row.eval_points;
      const double fx = std::fmod(s.position.x(), grid.cell_size);
      const double fy = std::fmod(s.position.y(), grid.cell_size);
      const double edge = std::min({fx, grid.cell_size - fx, fy, grid.cell_size - fy});
      if (edge < 1.0) {
        border_sum += err;
        ++border_count;
      }
    }
    if (row.eval_points == 0) throw DataError("the planar test scene has no evaluation points");
    row.test_error = sum / static_cast<double>(row.eval_points);
    row.border_error = border_count ? border_sum / static_cast<double>(border_count) : 0.0;
    if (!std::isfinite(row.test_error)) throw NumericalError("planar test error is not finite");

    std::vector<double> image(static_cast<std::size_t>(width * height));
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) image[static_cast<std::size_t>(y * width + x)] = predict(Vec2(x + 0.5, y + 0.5));
    result.predicted.push_back(std::move(image));
    result.rows.push_back(row);
    if (progress) progress(row);
  }
  bool up = false;
  bool down = false;
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    up = up || result.rows[i].test_error > result.rows[i - 1].test_error;
    down = down || result.rows[i].test_error < result.rows[i - 1].test_error;
  }
  result.non_monotone = up && down;
  return result;
}

std::vector<std::uint8_t> render_contour(std::span<const double> sdf, int width, int height, double scale) {
  if (width < 1 || height < 1 || sdf.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw ContractError("image size does not match the SDF buffer");
  if (!(scale > 0.0)) throw ConfigError("contour scale must be positive");
  std::vector<std::uint8_t> out(sdf.size());
  auto at = [&](int x, int y) { return sdf[static_cast<std::size_t>(y * width + x)]; };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = at(x, y);
      std::uint8_t g = 255;
      if (!std::isnan(v)) {
        g = static_cast<std::uint8_t>(std::clamp(128.0 + 100.0 * v / scale, 28.0, 228.0));
        // Zero contour: sign change towards the right or lower neighbour.
        const bool right = x + 1 < width && !std::isnan(at(x + 1, y)) && (v < 0.0) != (at(x + 1, y) < 0.0);
        const bool below = y + 1 < height && !std::isnan(at(x, y + 1)) && (v < 0.0) != (at(x, y + 1) < 0.0);
        if (right || below) g = 0;
      }
      out[static_cast<std::size_t>(y * width + x)] = g;
    }
  }
  return out;
}

void save_pgm(const std::string& path, std::span<const std::uint8_t> pixels, int width, int height) {
  if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw ContractError("pixel buffer does not match the image size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw DataError("failed writing " + path);
}

void write_demo2d_csv(const std::string& path, const Demo2DResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(9);
  out << "radius,train_patches,train_loss,test_error_px,border_error_px,eval_points\n";
  for (const auto& r : result.rows) {
    out << r.radius << ',' << r.train_patches << ',' << r.train_loss << ',' << r.test_error << ','
        << r.border_error << ',' << r.eval_points << '\n';
  }
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace deepls
