#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/mesh.hpp"
#include "surfnn/spatial_grid.hpp"
#include "surfnn/volume.hpp"

namespace surfnn {

struct SurfaceMetrics {
  double cd = 0.0;
  double ad = 0.0;
  double hd90 = 0.0;
  int n_points = 0;
};

/// Per-point nearest distances in both directions, in output units.
struct DistanceSamples {
  std::vector<double> pred_to_target;
  std::vector<double> target_to_pred;
};

/// Linear interpolation between order statistics, q in [0, 1].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - double(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

/// Nearest distances from every query to the reference set.
inline std::vector<double> nearest_distances(const std::vector<Vec3>& queries, const std::vector<Vec3>& reference) {
  const PointGrid grid(reference);
  std::vector<double> d(queries.size());
  parallel_for(std::ptrdiff_t(queries.size()),
               [&](std::ptrdiff_t i) { d[i] = std::sqrt(grid.nearest(queries[i]).dist2); });
  return d;
}

inline SurfaceMetrics metrics_from_distances(const DistanceSamples& s) {
  SurfaceMetrics m;
  m.n_points = int(s.pred_to_target.size());
  double sq_pt = 0.0, sq_tp = 0.0, sum = 0.0;
  for (double d : s.pred_to_target) {
    sq_pt += d * d;
    sum += d;
  }
  for (double d : s.target_to_pred) {
    sq_tp += d * d;
    sum += d;
  }
  m.cd = sq_pt / double(s.pred_to_target.size()) + sq_tp / double(s.target_to_pred.size());
  m.ad = sum / double(s.pred_to_target.size() + s.target_to_pred.size());
  m.hd90 = std::max(percentile(s.pred_to_target, 0.9), percentile(s.target_to_pred, 0.9));
  return m;
}

/// Samples n points on each mesh (same seed) and measures the distances.
/// With a frame the points are mapped from normalized to physical units
/// first; otherwise distances are in mesh units.
inline DistanceSamples surface_distances(const TriMesh& pred, const TriMesh& target, int n, std::uint64_t seed,
                                         const std::optional<NormalizedFrame>& frame = std::nullopt) {
  if (n < 1) throw InputError("sample count must be at least 1");
  std::vector<Vec3> p = sample_points_uniform(pred, n, seed);
  std::vector<Vec3> t = sample_points_uniform(target, n, seed);
  if (frame) {
    for (Vec3& x : p) x = frame->to_physical(x);
    for (Vec3& x : t) x = frame->to_physical(x);
  }
  return {nearest_distances(p, t), nearest_distances(t, p)};
}

inline SurfaceMetrics evaluate(const TriMesh& pred, const TriMesh& target, int n, std::uint64_t seed,
                               const std::optional<NormalizedFrame>& frame = std::nullopt) {
  return metrics_from_distances(surface_distances(pred, target, n, seed, frame));
}

}  // namespace surfnn
