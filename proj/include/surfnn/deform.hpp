#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/mesh.hpp"
#include "surfnn/parallel.hpp"
#include "surfnn/volume.hpp"

namespace surfnn {

inline constexpr int kMaxSquaringSteps = 12;

/// Stationary velocity field (normalized units per unit time) and the number
/// of squaring steps used to integrate it.
struct SvfParams {
  VectorVolume velocity;
  int squaring_steps = 6;
};

/// Intermediate displacements u_0 .. u_K kept for the adjoint pass.
struct SvfTape {
  std::vector<VectorVolume> steps;
  int squaring_steps = 0;
};

/// Scaling and squaring: u_0 = v / 2^K, u_{k+1}(x) = u_k(x) + u_k(x + u_k(x)).
/// Returns u_K, the displacement of phi(x) = x + u(x) at the grid nodes.
inline VectorVolume integrate_svf(const SvfParams& params, SvfTape* tape = nullptr) {
  const int K = params.squaring_steps;
  if (K < 0 || K > kMaxSquaringSteps) throw InputError("squaring steps must be within [0, 12]");
  const VectorVolume& v = params.velocity;
  const NormalizedFrame frame(v);
  const Index3 d = v.dims();

  std::vector<Vec3> nodes(v.size());
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) nodes[v.index(i, j, k)] = frame.node(i, j, k);

  VectorVolume u(d, v.spacing());
  const double scale = std::ldexp(1.0, -K);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = v[i] * scale;
  if (tape) {
    tape->squaring_steps = K;
    tape->steps.clear();
    tape->steps.push_back(u);
  }
  for (int step = 0; step < K; ++step) {
    VectorVolume next(d, v.spacing());
    parallel_for(std::ptrdiff_t(u.size()),
                 [&](std::ptrdiff_t i) { next[i] = u[i] + sample(u, Vec3(nodes[i] + u[i])); });
    u = std::move(next);
    if (tape) tape->steps.push_back(u);
  }
  return u;
}

/// Pulls a cotangent on u_K back to the velocity grid.
inline VectorVolume integrate_svf_adjoint(const SvfTape& tape, const VectorVolume& cotangent) {
  const int K = tape.squaring_steps;
  const VectorVolume& u0 = tape.steps.front();
  const NormalizedFrame frame(u0);
  const Index3 d = u0.dims();
  VectorVolume g = cotangent;
  for (int step = K - 1; step >= 0; --step) {
    const VectorVolume& u = tape.steps[step];
    VectorVolume prev = g;  // identity term
    std::vector<TrilinearStencil> stencils(u.size());
    parallel_for(std::ptrdiff_t(u.size()), [&](std::ptrdiff_t n) {
      const int i = int(n % d[0]), j = int((n / d[0]) % d[1]), k = int(n / (std::ptrdiff_t(d[0]) * d[1]));
      stencils[n] = make_stencil(d, Vec3(frame.node(i, j, k) + u[n]));
      // Through the sample location x + u_k(x).
      prev[n] += sample_jacobian(u, stencils[n]).transpose() * g[n];
    });
    // Ordered scatter keeps the result independent of thread count.
    for (std::size_t n = 0; n < u.size(); ++n) scatter_adjoint(prev, stencils[n], g[n]);
    g = std::move(prev);
  }
  const double scale = std::ldexp(1.0, -K);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
  return g;
}

/// p -> p + u(p) for every vertex; connectivity is unchanged.
inline TriMesh warp_mesh(const VectorVolume& displacement, const TriMesh& mesh) {
  TriMesh out;
  out.faces = mesh.faces;
  out.vertices.resize(mesh.vertices.size());
  parallel_for(std::ptrdiff_t(mesh.vertices.size()), [&](std::ptrdiff_t i) {
    out.vertices[i] = mesh.vertices[i] + sample(displacement, mesh.vertices[i]);
  });
  return out;
}

/// Accumulates the displacement-grid adjoint of warp_mesh into `grad`.
inline void warp_mesh_adjoint(const TriMesh& mesh, std::span<const Vec3> vertex_cotangent, VectorVolume& grad) {
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    scatter_adjoint(grad, make_stencil(grad.dims(), mesh.vertices[i]), vertex_cotangent[i]);
  }
}

// ---------------------------------------------------------------------------
// Half cortical thickness

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

/// Unconstrained grid; the half thickness at a point is
/// softplus(sample(raw, p)) * scale, so it is always positive.
struct HctParams {
  ScalarVolume raw;
  double scale = 0.1;

  double half_thickness(double raw_value) const { return softplus(raw_value) * scale; }
};

struct OffsetSurfaces {
  TriMesh wm;
  TriMesh pial;
  std::vector<double> half_thickness;  // per vertex, normalized units
  std::vector<double> raw_samples;
  VertexNormals normals;

  std::vector<double> thickness() const {
    std::vector<double> t(half_thickness.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = 2.0 * half_thickness[i];
    return t;
  }
};

/// wm = p - dp n, pial = p + dp n with n the vertex normal of `mid` and dp
/// the half thickness sampled at p.
inline OffsetSurfaces offset_surfaces(const TriMesh& mid, const HctParams& hct) {
  OffsetSurfaces out;
  out.normals = compute_vertex_normals(mid);
  const std::size_t nv = mid.vertices.size();
  out.wm.faces = mid.faces;
  out.pial.faces = mid.faces;
  out.wm.vertices.resize(nv);
  out.pial.vertices.resize(nv);
  out.half_thickness.resize(nv);
  out.raw_samples.resize(nv);
  parallel_for(std::ptrdiff_t(nv), [&](std::ptrdiff_t i) {
    const double raw = sample(hct.raw, mid.vertices[i]);
    const double dp = hct.half_thickness(raw);
    const Vec3& p = mid.vertices[i];
    const Vec3& n = out.normals.normals[i];
    out.raw_samples[i] = raw;
    out.half_thickness[i] = dp;
    out.wm.vertices[i] = p - dp * n;
    out.pial.vertices[i] = p + dp * n;
  });
  return out;
}

struct OffsetAdjoint {
  std::vector<Vec3> mid_grad;
  ScalarVolume raw_grad;
};

/// Pulls cotangents on the wm and pial vertices back to the mid vertices and
/// the raw thickness grid.
inline OffsetAdjoint offset_surfaces_adjoint(const TriMesh& mid, const HctParams& hct, const OffsetSurfaces& fwd,
                                             std::span<const Vec3> wm_cotangent, std::span<const Vec3> pial_cotangent) {
  const std::size_t nv = mid.vertices.size();
  OffsetAdjoint out;
  out.mid_grad.assign(nv, Vec3::Zero());
  out.raw_grad = ScalarVolume(hct.raw.dims(), hct.raw.spacing());
  std::vector<Vec3> normal_cot(nv);
  std::vector<double> raw_cot(nv);
  std::vector<TrilinearStencil> stencils(nv);
  parallel_for(std::ptrdiff_t(nv), [&](std::ptrdiff_t i) {
    const Vec3& n = fwd.normals.normals[i];
    const double dp = fwd.half_thickness[i];
    const Vec3& gw = wm_cotangent[i];
    const Vec3& gp = pial_cotangent[i];
    normal_cot[i] = dp * (gp - gw);
    const double dp_cot = n.dot(gp - gw);
    raw_cot[i] = dp_cot * hct.scale * sigmoid(fwd.raw_samples[i]);
    stencils[i] = make_stencil(hct.raw.dims(), mid.vertices[i]);
    out.mid_grad[i] = gw + gp + raw_cot[i] * sample_jacobian(hct.raw, stencils[i]);
  });
  for (std::size_t i = 0; i < nv; ++i) scatter_adjoint(out.raw_grad, stencils[i], raw_cot[i]);
  vertex_normals_adjoint(mid, fwd.normals, normal_cot, out.mid_grad);
  return out;
}

}  // namespace surfnn
