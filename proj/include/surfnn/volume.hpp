#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/parallel.hpp"

namespace surfnn {

/// Dense 3D grid, row-major with x fastest. Used for intensities, masks,
/// signed distances and parameter fields (`Grid<double>`), and for velocity
/// and displacement fields (`Grid<Vec3>`).
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;

  explicit Grid(Index3 dims, std::array<double, 3> spacing = {1.0, 1.0, 1.0})
      : dims_(dims), spacing_(spacing) {
    check_shape();
    data_.assign(voxel_count(), zero_value<T>());
  }

  Grid(Index3 dims, std::array<double, 3> spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    check_shape();
    if (data_.size() != voxel_count()) {
      throw InputError("grid data length " + std::to_string(data_.size()) +
                       " does not match dims product " + std::to_string(voxel_count()));
    }
    for (const T& v : data_) {
      if (!is_finite(v)) throw InputError("grid contains non-finite values");
    }
  }

  const Index3& dims() const { return dims_; }
  const std::array<double, 3>& spacing() const { return spacing_; }
  std::size_t voxel_count() const {
    return std::size_t(dims_[0]) * std::size_t(dims_[1]) * std::size_t(dims_[2]);
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int i, int j, int k) const {
    return std::size_t(i) + std::size_t(dims_[0]) * (std::size_t(j) + std::size_t(dims_[1]) * std::size_t(k));
  }

  T& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
  const T& operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }
  T& operator[](std::size_t idx) { return data_[idx]; }
  const T& operator[](std::size_t idx) const { return data_[idx]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return dims_ == other.dims() && spacing_ == other.spacing();
  }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

  static bool is_finite(const T& v) {
    if constexpr (std::is_arithmetic_v<T>) {
      return std::isfinite(v);
    } else {
      return v.allFinite();
    }
  }

 private:
  void check_shape() const {
    for (int a = 0; a < 3; ++a) {
      if (dims_[a] <= 0) throw InputError("grid dims must be positive");
      if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a])) {
        throw InputError("grid spacing must be positive and finite");
      }
    }
  }

  Index3 dims_{0, 0, 0};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::vector<T> data_;
};

using ScalarVolume = Grid<double>;
using VectorVolume = Grid<Vec3>;

/// Maps voxel indices to [-1,1]^3: x = 2 i / (n - 1) - 1 per axis.
struct NormalizedFrame {
  Index3 dims{2, 2, 2};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  NormalizedFrame() = default;
  explicit NormalizedFrame(Index3 d, std::array<double, 3> s = {1.0, 1.0, 1.0}) : dims(d), spacing(s) {}
  template <typename T>
  explicit NormalizedFrame(const Grid<T>& g) : dims(g.dims()), spacing(g.spacing()) {}

  // Voxels per normalized unit along an axis.
  double voxels_per_unit(int axis) const { return 0.5 * double(dims[axis] - 1); }

  Vec3 node(int i, int j, int k) const { return to_normalized(Vec3(i, j, k)); }

  Vec3 to_normalized(const Vec3& g) const {
    Vec3 p;
    for (int a = 0; a < 3; ++a) {
      p[a] = dims[a] > 1 ? 2.0 * g[a] / double(dims[a] - 1) - 1.0 : 0.0;
    }
    return p;
  }

  Vec3 to_grid(const Vec3& p) const {
    Vec3 g;
    for (int a = 0; a < 3; ++a) g[a] = (p[a] + 1.0) * voxels_per_unit(a);
    return g;
  }

  // Physical coordinates (voxel index scaled by spacing) of a normalized point.
  Vec3 to_physical(const Vec3& p) const {
    Vec3 g = to_grid(p);
    for (int a = 0; a < 3; ++a) g[a] *= spacing[a];
    return g;
  }

  // Normalized units per physical unit, averaged over axes.
  double normalized_per_physical() const {
    double acc = 0.0;
    for (int a = 0; a < 3; ++a) acc += 1.0 / (voxels_per_unit(a) * spacing[a]);
    return acc / 3.0;
  }
};

// ---------------------------------------------------------------------------
// Trilinear sampling

/// Eight-corner interpolation stencil for one query point. Weights and their
/// derivatives with respect to the normalized query coordinate are stored so
/// the same stencil serves the value, the point Jacobian and the grid adjoint.
struct TrilinearStencil {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
  std::array<Vec3, 8> dweight{};
};

inline TrilinearStencil make_stencil(const Index3& dims, const Vec3& p) {
  std::array<int, 3> lo{}, hi{};
  std::array<double, 3> frac{}, dscale{};
  for (int a = 0; a < 3; ++a) {
    const int n = dims[a];
    if (n == 1) {
      lo[a] = hi[a] = 0;
      frac[a] = 0.0;
      dscale[a] = 0.0;
      continue;
    }
    const double scale = 0.5 * double(n - 1);
    double g = (p[a] + 1.0) * scale;
    dscale[a] = scale;
    if (g < 0.0) {
      g = 0.0;
      dscale[a] = 0.0;
    } else if (g > double(n - 1)) {
      g = double(n - 1);
      dscale[a] = 0.0;
    }
    int i0 = int(std::floor(g));
    if (i0 > n - 2) i0 = n - 2;
    lo[a] = i0;
    hi[a] = i0 + 1;
    frac[a] = g - double(i0);
  }

  TrilinearStencil s;
  const std::size_t sx = 1, sy = std::size_t(dims[0]), sz = std::size_t(dims[0]) * std::size_t(dims[1]);
  for (int c = 0; c < 8; ++c) {
    const int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
    const double wx = bx ? frac[0] : 1.0 - frac[0];
    const double wy = by ? frac[1] : 1.0 - frac[1];
    const double wz = bz ? frac[2] : 1.0 - frac[2];
    const double dx = (bx ? 1.0 : -1.0) * dscale[0];
    const double dy = (by ? 1.0 : -1.0) * dscale[1];
    const double dz = (bz ? 1.0 : -1.0) * dscale[2];
    s.index[c] = std::size_t(bx ? hi[0] : lo[0]) * sx + std::size_t(by ? hi[1] : lo[1]) * sy +
                 std::size_t(bz ? hi[2] : lo[2]) * sz;
    s.weight[c] = wx * wy * wz;
    s.dweight[c] = Vec3(dx * wy * wz, wx * dy * wz, wx * wy * dz);
  }
  return s;
}

template <typename T>
T sample(const Grid<T>& field, const TrilinearStencil& s) {
  T acc = zero_value<T>();
  for (int c = 0; c < 8; ++c) acc += s.weight[c] * field[s.index[c]];
  return acc;
}

/// Trilinear value at a normalized point; points outside [-1,1]^3 are
/// clamped to the boundary.
template <typename T>
T sample(const Grid<T>& field, const Vec3& p) {
  return sample(field, make_stencil(field.dims(), p));
}

/// d value / d point. Scalar fields give a gradient vector; vector fields a
/// 3x3 Jacobian with J(r, c) = d value_r / d p_c.
inline Vec3 sample_jacobian(const ScalarVolume& field, const TrilinearStencil& s) {
  Vec3 g = Vec3::Zero();
  for (int c = 0; c < 8; ++c) g += field[s.index[c]] * s.dweight[c];
  return g;
}

inline Mat3 sample_jacobian(const VectorVolume& field, const TrilinearStencil& s) {
  Mat3 J = Mat3::Zero();
  for (int c = 0; c < 8; ++c) J.noalias() += field[s.index[c]] * s.dweight[c].transpose();
  return J;
}

/// Accumulates the adjoint of `sample` into `grid_grad`: each of the eight
/// corner values receives weight * cotangent.
template <typename T>
void scatter_adjoint(Grid<T>& grid_grad, const TrilinearStencil& s, const T& cotangent) {
  for (int c = 0; c < 8; ++c) grid_grad[s.index[c]] += s.weight[c] * cotangent;
}

template <typename T>
std::vector<T> sample_points(const Grid<T>& field, std::span<const Vec3> points) {
  std::vector<T> out(points.size());
  parallel_for(std::ptrdiff_t(points.size()), [&](std::ptrdiff_t i) { out[i] = sample(field, points[i]); });
  return out;
}

// ---------------------------------------------------------------------------
// Distance transforms

namespace detail {

// Lower envelope of parabolas w (p - q)^2 + f(q) over q with finite f.
inline void distance_transform_1d(const double* f, int n, double w, double* d, int* v, double* z) {
  const double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    auto intersect = [&](int r) {
      return ((f[q] + w * double(q) * double(q)) - (f[r] + w * double(r) * double(r))) / (2.0 * w * double(q - r));
    };
    double s = intersect(v[k]);
    // z[0] is -inf, so k never drops below zero.
    while (s <= z[k]) {
      --k;
      s = intersect(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    for (int p = 0; p < n; ++p) d[p] = inf;
    return;
  }
  int j = 0;
  for (int p = 0; p < n; ++p) {
    while (z[j + 1] < double(p)) ++j;
    const double dp = double(p - v[j]);
    d[p] = w * dp * dp + f[v[j]];
  }
}

inline void distance_transform_axis(ScalarVolume& vol, int axis) {
  const Index3 dims = vol.dims();
  const int n = dims[axis];
  const double w = vol.spacing()[axis] * vol.spacing()[axis];
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  Index3 idx{};
  for (int u = 0; u < dims[a2]; ++u) {
    for (int t = 0; t < dims[a1]; ++t) {
      idx[a1] = t;
      idx[a2] = u;
      for (int p = 0; p < n; ++p) {
        idx[axis] = p;
        f[p] = vol(idx[0], idx[1], idx[2]);
      }
      distance_transform_1d(f.data(), n, w, d.data(), v.data(), z.data());
      for (int p = 0; p < n; ++p) {
        idx[axis] = p;
        vol(idx[0], idx[1], idx[2]) = d[p];
      }
    }
  }
}

}  // namespace detail

inline bool is_foreground(double v) { return v > 0.5; }

/// Squared Euclidean distance (physical units) from every voxel center to the
/// nearest voxel center where `is_foreground(mask) == foreground`. Voxels of
/// that class get 0. Exact separable lower-envelope transform.
inline ScalarVolume edt_squared_to(const ScalarVolume& mask, bool foreground) {
  const double inf = std::numeric_limits<double>::infinity();
  ScalarVolume out(mask.dims(), mask.spacing());
  bool any = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const bool hit = is_foreground(mask[i]) == foreground;
    out[i] = hit ? 0.0 : inf;
    any = any || hit;
  }
  if (!any) throw InputError("degenerate mask (no boundary)");
  for (int axis = 0; axis < 3; ++axis) detail::distance_transform_axis(out, axis);
  return out;
}

inline void check_mask_has_boundary(const ScalarVolume& mask) {
  std::size_t fg = 0;
  for (double v : mask.data()) fg += is_foreground(v) ? 1 : 0;
  if (fg == 0 || fg == mask.size()) throw InputError("degenerate mask (no boundary)");
}

/// Squared distance from each voxel to the nearest voxel of the opposite
/// class (voxel-center convention): foreground voxels measure to the
/// background and vice versa.
inline ScalarVolume edt_squared(const ScalarVolume& mask) {
  check_mask_has_boundary(mask);
  ScalarVolume to_fg = edt_squared_to(mask, true);
  const ScalarVolume to_bg = edt_squared_to(mask, false);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (is_foreground(mask[i])) to_fg[i] = to_bg[i];
  }
  return to_fg;
}

/// Negative inside (foreground), positive outside.
inline ScalarVolume signed_distance(const ScalarVolume& mask) {
  ScalarVolume d = edt_squared(mask);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = std::sqrt(d[i]);
    d[i] = is_foreground(mask[i]) ? -r : r;
  }
  return d;
}

inline ScalarVolume normalize_intensity(const ScalarVolume& volume) {
  if (volume.empty()) throw InputError("zero dynamic range");
  const auto [lo_it, hi_it] = std::minmax_element(volume.values().begin(), volume.values().end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw InputError("zero dynamic range");
  ScalarVolume out(volume.dims(), volume.spacing());
  const double range = hi - lo;
  for (std::size_t i = 0; i < volume.size(); ++i) out[i] = (volume[i] - lo) / range;
  return out;
}

/// Separable Gaussian smoothing with a (2 radius + 1)^3 kernel and
/// replicate padding.
template <typename T>
Grid<T> gaussian_smooth(const Grid<T>& in, double sigma, int radius) {
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    kernel[t + radius] = std::exp(-0.5 * double(t * t) / (sigma * sigma));
    total += kernel[t + radius];
  }
  for (double& k : kernel) k /= total;

  Grid<T> cur = in;
  const Index3 dims = in.dims();
  for (int axis = 0; axis < 3; ++axis) {
    Grid<T> next(dims, in.spacing());
    for (int k = 0; k < dims[2]; ++k) {
      for (int j = 0; j < dims[1]; ++j) {
        for (int i = 0; i < dims[0]; ++i) {
          T acc = zero_value<T>();
          Index3 idx{i, j, k};
          const int c = idx[axis];
          for (int t = -radius; t <= radius; ++t) {
            idx[axis] = std::clamp(c + t, 0, dims[axis] - 1);
            acc += kernel[t + radius] * cur(idx[0], idx[1], idx[2]);
          }
          next(i, j, k) = acc;
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace surfnn
