#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/parallel.hpp"

namespace surfnn {

struct Nearest {
  int index = -1;
  double dist2 = std::numeric_limits<double>::infinity();
};

/// Exact nearest-neighbor queries over a fixed point set, bucketed into a
/// uniform grid over its bounding box. Equal distances resolve to the lowest
/// point index, so results match a brute-force scan bit for bit.
class PointGrid {
 public:
  PointGrid() = default;
  explicit PointGrid(std::span<const Vec3> points) { build(points); }

  void build(std::span<const Vec3> points) {
    if (points.empty()) throw InputError("point set is empty");
    const std::size_t n = points.size();
    lo_ = points[0];
    Vec3 hi = points[0];
    for (const Vec3& p : points) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 extent = hi - lo_;
    const double longest = std::max(extent.maxCoeff(), 1e-12);
    // A surface-like set of n points has spacing ~ L / sqrt(n); cells a few
    // spacings wide hold a handful of points each.
    cell_ = std::max(kCellFactor * longest / std::sqrt(double(n)), longest / std::cbrt(double(kMaxCells)));
    inv_cell_ = 1.0 / cell_;
    std::size_t total = 1;
    for (int a = 0; a < 3; ++a) {
      res_[a] = std::max(1, int(std::floor(extent[a] * inv_cell_)) + 1);
      total *= std::size_t(res_[a]);
    }

    std::vector<int> cell_of(n);
    cell_start_.assign(total + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = cell_coords(points[i]);
      cell_of[i] = int(flat(c[0], c[1], c[2]));
      ++cell_start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < total; ++c) cell_start_[c + 1] += cell_start_[c];
    ids_.resize(n);
    slot_of_.resize(n);
    for (auto& v : coords_) v.resize(n);
    std::vector<int> cursor(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const int slot = cursor[cell_of[i]]++;
      ids_[slot] = int(i);
      slot_of_[i] = slot;
      for (int a = 0; a < 3; ++a) coords_[a][slot] = points[i][a];
    }
  }

  std::size_t size() const { return ids_.size(); }

  Nearest nearest(const Vec3& q) const { return search(q, Nearest{}); }

  /// Same result as nearest(q); `hint` (a point index, or -1) only seeds the
  /// search bound, which pays off when queries move little between calls.
  Nearest nearest(const Vec3& q, int hint) const {
    Nearest seed;
    if (hint >= 0 && std::size_t(hint) < ids_.size()) {
      seed.index = hint;
      seed.dist2 = dist2_at(q, slot_of_[hint]);
    }
    return search(q, seed);
  }

  std::vector<Nearest> nearest_all(std::span<const Vec3> queries) const {
    std::vector<Nearest> out(queries.size());
    parallel_for(std::ptrdiff_t(queries.size()), [&](std::ptrdiff_t i) { out[i] = nearest(queries[i]); });
    return out;
  }

 private:
  static constexpr std::size_t kMaxCells = std::size_t(1) << 22;
  static constexpr double kCellFactor = 5.0;
  static constexpr int kMaxBallCells = 64;

  double dist2_at(const Vec3& q, int slot) const {
    const double dx = q[0] - coords_[0][slot], dy = q[1] - coords_[1][slot], dz = q[2] - coords_[2][slot];
    return dx * dx + dy * dy + dz * dz;
  }

  Nearest search(const Vec3& q, Nearest best) const {
    if (best.index >= 0 && scan_ball(q, best)) return best;
    const auto c = cell_coords(q);
    const int max_ring = std::max({res_[0], res_[1], res_[2]});
    for (int r = 0; r <= max_ring; ++r) {
      visit_ring(q, c, r, best);
      // Lower bound on the distance to any cell outside the searched block.
      double bound = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (c[a] - r > 0) bound = std::min(bound, q[a] - (lo_[a] + double(c[a] - r) * cell_));
        if (c[a] + r < res_[a] - 1) bound = std::min(bound, (lo_[a] + double(c[a] + r + 1) * cell_) - q[a]);
      }
      if (bound == std::numeric_limits<double>::infinity()) break;
      bound = std::max(bound, 0.0) * (1.0 - 1e-12);
      if (bound * bound > best.dist2) break;
    }
    return best;
  }

  // Every point closer than the current best lies in the ball around q of
  // that radius, so scanning the cells overlapping the ball is exact. Gives
  // up (returns false) when the ball covers too many cells.
  bool scan_ball(const Vec3& q, Nearest& best) const {
    const double r = std::sqrt(best.dist2) * (1.0 + 1e-9) + 1e-300;
    std::array<int, 3> c0, c1;
    int cells = 1;
    for (int a = 0; a < 3; ++a) {
      c0[a] = cell_index(q[a] - r, a);
      c1[a] = cell_index(q[a] + r, a);
      cells *= c1[a] - c0[a] + 1;
    }
    if (cells > kMaxBallCells) return false;
    for (int k = c0[2]; k <= c1[2]; ++k)
      for (int j = c0[1]; j <= c1[1]; ++j)
        for (int i = c0[0]; i <= c1[0]; ++i) visit_cell(q, i, j, k, best);
    return true;
  }

  int cell_index(double x, int a) const {
    const double t = std::floor((x - lo_[a]) * inv_cell_);
    return t < 0.0 ? 0 : (t >= double(res_[a]) ? res_[a] - 1 : int(t));
  }

  std::array<int, 3> cell_coords(const Vec3& p) const {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a) {
      const double t = std::floor((p[a] - lo_[a]) * inv_cell_);
      c[a] = t < 0.0 ? 0 : (t >= double(res_[a]) ? res_[a] - 1 : int(t));
    }
    return c;
  }

  std::size_t flat(int i, int j, int k) const {
    return std::size_t(i) + std::size_t(res_[0]) * (std::size_t(j) + std::size_t(res_[1]) * std::size_t(k));
  }

  void visit_cell(const Vec3& q, int i, int j, int k, Nearest& best) const {
    const std::size_t cell = flat(i, j, k);
    const int s0 = cell_start_[cell], s1 = cell_start_[cell + 1];
    if (s0 == s1) return;
    // Box distance lower bound, relaxed slightly against rounding.
    double box = 0.0;
    const int idx[3] = {i, j, k};
    for (int a = 0; a < 3; ++a) {
      const double lo = lo_[a] + double(idx[a]) * cell_;
      const double hi = lo + cell_;
      const double d = q[a] < lo ? lo - q[a] : (q[a] > hi ? q[a] - hi : 0.0);
      box += d * d;
    }
    if (box * (1.0 - 1e-9) > best.dist2) return;
    for (int s = s0; s < s1; ++s) {
      const double d2 = dist2_at(q, s);
      if (d2 < best.dist2 || (d2 == best.dist2 && ids_[s] < best.index)) {
        best.dist2 = d2;
        best.index = ids_[s];
      }
    }
  }

  void visit_ring(const Vec3& q, const std::array<int, 3>& c, int r, Nearest& best) const {
    const int k0 = std::max(0, c[2] - r), k1 = std::min(res_[2] - 1, c[2] + r);
    const int j0 = std::max(0, c[1] - r), j1 = std::min(res_[1] - 1, c[1] + r);
    const int i0 = std::max(0, c[0] - r), i1 = std::min(res_[0] - 1, c[0] + r);
    for (int k = k0; k <= k1; ++k) {
      const bool kface = std::abs(k - c[2]) == r;
      for (int j = j0; j <= j1; ++j) {
        const bool jface = kface || std::abs(j - c[1]) == r;
        if (jface) {
          for (int i = i0; i <= i1; ++i) visit_cell(q, i, j, k, best);
        } else {
          if (c[0] - r >= 0) visit_cell(q, c[0] - r, j, k, best);
          if (r > 0 && c[0] + r < res_[0]) visit_cell(q, c[0] + r, j, k, best);
        }
      }
    }
  }

  Vec3 lo_ = Vec3::Zero();
  double cell_ = 1.0, inv_cell_ = 1.0;
  std::array<int, 3> res_{1, 1, 1};
  std::vector<int> cell_start_;
  std::vector<int> ids_;
  std::vector<int> slot_of_;
  std::array<std::vector<double>, 3> coords_;
};

}  // namespace surfnn
