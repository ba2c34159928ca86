#include "deepls/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace deepls {
namespace {

double mean_nearest(std::span<const Vec3> from, const PointIndex& to, bool squared) {
  double sum = 0.0;
  for (const auto& p : from) {
    const double d2 = to.nearest(p).squared_distance;
    sum += squared ? d2 : std::sqrt(d2);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

ChamferConvention chamfer_convention_from_string(const std::string& s) {
  if (s == "squared") return ChamferConvention::squared;
  if (s == "linear") return ChamferConvention::linear;
  throw ConfigError("unknown chamfer convention '" + s + "' (expected squared or linear)");
}

const char* to_string(ChamferConvention c) {
  return c == ChamferConvention::squared ? "squared" : "linear";
}

double chamfer(std::span<const Vec3> a, std::span<const Vec3> b, ChamferConvention convention) {
  if (a.empty() || b.empty()) throw DataError("chamfer distance needs two non-empty point sets");
  const bool squared = convention == ChamferConvention::squared;
  const PointIndex ia(std::vector<Vec3>(a.begin(), a.end()));
  const PointIndex ib(std::vector<Vec3>(b.begin(), b.end()));
  return mean_nearest(a, ib, squared) + mean_nearest(b, ia, squared);
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DataError("percentile of an empty set");
  if (!(p > 0.0 && p <= 100.0)) throw ConfigError("percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

double mesh_accuracy(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  if (pred.empty() || gt.empty()) throw DataError("mesh accuracy needs non-empty inputs");
  const PointIndex index(std::vector<Vec3>(gt.begin(), gt.end()));
  std::vector<double> d;
  d.reserve(pred.size());
  for (const auto& p : pred) d.push_back(std::sqrt(index.nearest(p).squared_distance));
  return nearest_rank_percentile(std::move(d), 90.0);
}

double mesh_accuracy(std::span<const Vec3> pred, const MeshDistance& gt) {
  if (pred.empty()) throw DataError("mesh accuracy needs non-empty inputs");
  std::vector<double> d;
  d.reserve(pred.size());
  for (const auto& p : pred) d.push_back(std::sqrt(gt.closest(p).squared_distance));
  return nearest_rank_percentile(std::move(d), 90.0);
}

double completion(std::span<const Vec3> gt, std::span<const Vec3> pred, double threshold) {
  if (gt.empty()) throw DataError("completion needs ground-truth points");
  if (!(threshold >= 0.0)) throw ConfigError("completion threshold must be nonnegative");
  if (pred.empty()) return 0.0;
  const PointIndex index(std::vector<Vec3>(pred.begin(), pred.end()));
  const double t2 = threshold * threshold;
  std::size_t hit = 0;
  for (const auto& g : gt)
    if (index.nearest(g).squared_distance <= t2) ++hit;
  return static_cast<double>(hit) / static_cast<double>(gt.size());
}

double sdf_rmse_relative(std::span<const std::optional<double>> predicted, std::span<const double> gt,
                         double diagonal, std::size_t* used) {
  if (predicted.size() != gt.size()) throw ContractError("prediction and ground truth sizes differ");
  if (!(diagonal > 0.0)) throw ConfigError("diagonal must be positive");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!predicted[i]) continue;
    const double r = *predicted[i] - gt[i];
    sum += r * r;
    ++n;
  }
  if (used) *used = n;
  if (n == 0) throw DataError("no probe falls inside an allocated region");
  return std::sqrt(sum / static_cast<double>(n)) / diagonal;
}

double sdf_rmse_relative(const std::function<std::optional<double>(const Vec3&)>& query,
                         const std::function<double(const Vec3&)>& gt, std::span<const Vec3> probes,
                         double diagonal, std::size_t* used) {
  std::vector<std::optional<double>> pred;
  std::vector<double> truth;
  pred.reserve(probes.size());
  truth.reserve(probes.size());
  for (const auto& p : probes) {
    pred.push_back(query(p));
    truth.push_back(gt(p));
  }
  return sdf_rmse_relative(pred, truth, diagonal, used);
}

EvalReport evaluate_points(std::span<const Vec3> pred, std::span<const Vec3> gt, double completion_threshold,
                           ChamferConvention convention) {
  if (gt.empty()) throw DataError("evaluation needs ground-truth points");
  EvalReport r;
  r.convention = convention;
  r.completion_threshold = completion_threshold;
  r.pred_points = pred.size();
  r.gt_points = gt.size();
  r.completion = completion(gt, pred, completion_threshold);
  if (pred.empty()) {
    r.chamfer_valid = false;
    r.chamfer = std::numeric_limits<double>::infinity();
    r.accuracy_p90 = std::numeric_limits<double>::infinity();
    return r;
  }
  r.chamfer = chamfer(pred, gt, convention);
  r.accuracy_p90 = mesh_accuracy(pred, gt);
  return r;
}

}  // namespace deepls
