#pragma once

// Planar receptive-field study: a 2D decoder trained on cells of procedural
// scenes (circles, rectangles, triangles), evaluated on a held-out scene for
// several receptive-field radii. Units are pixels; cells are square.

#include "deepls/common.hpp"
#include "deepls/decoder.hpp"
#include "deepls/inference.hpp"
#include "deepls/training.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace deepls {

enum class Shape2DKind { circle, rectangle, triangle };

struct Shape2D {
  Shape2DKind kind = Shape2DKind::circle;
  Vec2 center = Vec2::Zero();
  Vec2 half_size = Vec2::Ones();  // circle uses x as radius
  double angle = 0.0;             // rectangle rotation, radians
  std::array<Vec2, 3> corners{};  // triangle, counter-clockwise

  double sdf(const Vec2& p) const;
};

struct Scene2D {
  double width = 64.0;
  double height = 64.0;
  std::vector<Shape2D> shapes;

  /// Union of the shapes; +inf for an empty scene.
  double sdf(const Vec2& p) const;
};

struct Scene2DConfig {
  double width = 64.0;
  double height = 64.0;
  int shapes = 3;
  double min_size = 6.0;   // pixels
  double max_size = 16.0;
  std::uint64_t seed = 0;

  void validate() const;
};

Scene2D make_scene2d(const Scene2DConfig& config);

/// Cells of side `cell_size` tiling [0, width) x [0, height).
struct CellGrid2D {
  double cell_size = 8.0;
  int nx = 0;
  int ny = 0;

  Vec2 center(int cx, int cy) const;
  /// Containing cell, clamped to the grid.
  std::array<int, 2> containing(const Vec2& p) const;
};

struct PlanarSample {
  Vec2 position;
  double sdf = 0.0;
};

/// `per_cell` uniform samples in every cell, in row-major cell order.
std::vector<PlanarSample> sample_cells(const Scene2D& scene, const CellGrid2D& grid, int per_cell, std::uint64_t seed);

/// Samples whose offset from the cell center d satisfies -r*cell <= d < r*cell
/// on both axes, as a patch in cell units with SDF clamped to the truncation.
PatchSamples<Real> planar_patch(const CellGrid2D& grid, int cx, int cy, std::span<const PlanarSample> samples,
                                double radius_factor, double truncation_cells);

struct Demo2DConfig {
  Scene2DConfig scene;
  double cell_size = 8.0;
  int train_scenes = 6;
  int train_samples_per_cell = 1000;
  int test_samples_per_cell = 100;
  int eval_samples_per_cell = 200;
  double test_noise = 0.0;  // Gaussian noise on observed test SDF values, pixels
  /// Cells whose samples come within band * cell_size of the surface are used.
  double allocation_band = 1.0;
  std::vector<double> radii = {1.0, 1.25, 1.5, 1.75, 2.0};
  DecoderConfig decoder{2, 16, 64, 4, 0.01, 2.0};
  TrainConfig train;
  EncodeConfig encode;
  std::uint64_t seed = 3;

  Demo2DConfig();
  void validate() const;
};

struct Demo2DRow {
  double radius = 0.0;
  std::size_t train_patches = 0;
  double train_loss = 0.0;     // final epoch loss
  double test_error = 0.0;     // mean |predicted - true| SDF, pixels
  double border_error = 0.0;   // same, on points within 1 px of a cell edge
  std::size_t eval_points = 0;
};

struct Demo2DResult {
  std::vector<Demo2DRow> rows;
  Scene2D test_scene;
  CellGrid2D grid;
  std::vector<std::vector<double>> predicted;  // per radius, row-major pixel centers; NaN outside used cells
  bool non_monotone = false;                   // errors over the sweep are not monotone
};

using Demo2DProgress = std::function<void(const Demo2DRow&)>;

Demo2DResult run_demo2d(const Demo2DConfig& config, const Demo2DProgress& progress = {});

/// 8-bit grayscale rendering of an SDF sampled at pixel centers: mid-gray
/// scaled by distance, black on the zero contour, white where undefined.
std::vector<std::uint8_t> render_contour(std::span<const double> sdf, int width, int height, double scale);

/// Binary PGM (P5).
void save_pgm(const std::string& path, std::span<const std::uint8_t> pixels, int width, int height);

void write_demo2d_csv(const std::string& path, const Demo2DResult& result);

}  // namespace deepls
