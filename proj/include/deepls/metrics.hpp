#pragma once

// Reconstruction metrics on point sets, with exact kd-tree nearest neighbours.

#include "deepls/common.hpp"
#include "deepls/mesh.hpp"
#include "deepls/spatial.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace deepls {

enum class ChamferConvention {
  squared,  // mean squared nearest distance, both directions summed (default)
  linear,   // mean nearest distance, both directions summed
};

ChamferConvention chamfer_convention_from_string(const std::string& s);
const char* to_string(ChamferConvention c);

/// Throws DataError when either set is empty.
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b,
               ChamferConvention convention = ChamferConvention::squared);

/// Nearest-rank percentile (p in (0, 100]) of the values.
double nearest_rank_percentile(std::vector<double> values, double p);

/// 90th percentile of nearest distances from predicted points to the ground
/// truth points (or mesh surface).
double mesh_accuracy(std::span<const Vec3> pred, std::span<const Vec3> gt);
double mesh_accuracy(std::span<const Vec3> pred, const MeshDistance& gt);

/// Fraction of gt points with a predicted point within `threshold`. Empty
/// prediction gives 0; empty gt throws DataError.
double completion(std::span<const Vec3> gt, std::span<const Vec3> pred, double threshold);

/// RMSE of (query - gt) over probes where the query has a value, divided by
/// the diagonal. Throws DataError when no probe has a value.
double sdf_rmse_relative(const std::function<std::optional<double>(const Vec3&)>& query,
                         const std::function<double(const Vec3&)>& gt, std::span<const Vec3> probes,
                         double diagonal, std::size_t* used = nullptr);
/// Same from precomputed values (nullopt = unavailable).
double sdf_rmse_relative(std::span<const std::optional<double>> predicted, std::span<const double> gt,
                         double diagonal, std::size_t* used = nullptr);

struct EvalReport {
  double chamfer = 0.0;
  ChamferConvention convention = ChamferConvention::squared;
  double accuracy_p90 = 0.0;
  double completion = 0.0;
  double completion_threshold = 0.0;
  std::size_t pred_points = 0;
  std::size_t gt_points = 0;
  bool chamfer_valid = true;  // false when the prediction is empty
};

/// Chamfer, accuracy and completion between point sets. An empty prediction
/// yields completion 0 and chamfer_valid = false instead of throwing.
EvalReport evaluate_points(std::span<const Vec3> pred, std::span<const Vec3> gt, double completion_threshold,
                           ChamferConvention convention = ChamferConvention::squared);

}  // namespace deepls
