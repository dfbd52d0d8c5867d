#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/mesh.hpp"
#include "surfnn/spatial_grid.hpp"
#include "surfnn/volume.hpp"

namespace surfnn {

// ---------------------------------------------------------------------------
// Bidirectional Chamfer distance

/// Nearest-neighbor correspondences in both directions.
struct ChamferAssignment {
  std::vector<int> pred_to_target;
  std::vector<int> target_to_pred;
};

struct ChamferResult {
  double value = 0.0;
  std::vector<Vec3> grad;  // w.r.t. pred, empty unless requested
  ChamferAssignment assignment;
};

/// Chamfer value (and optionally its gradient w.r.t. pred) for fixed
/// correspondences. The gradient treats the argmin as constant.
inline double chamfer_with_assignment(std::span<const Vec3> pred, std::span<const Vec3> target,
                                      const ChamferAssignment& a, Reduction reduction,
                                      std::vector<Vec3>* grad = nullptr) {
  const double wp = reduction == Reduction::Mean ? 1.0 / double(pred.size()) : 1.0;
  const double wt = reduction == Reduction::Mean ? 1.0 / double(target.size()) : 1.0;
  double forward = 0.0, backward = 0.0;
  if (grad) grad->assign(pred.size(), Vec3::Zero());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 d = pred[i] - target[a.pred_to_target[i]];
    forward += d.squaredNorm();
    if (grad) (*grad)[i] += (2.0 * wp) * d;
  }
  for (std::size_t j = 0; j < target.size(); ++j) {
    const int i = a.target_to_pred[j];
    const Vec3 d = pred[i] - target[j];
    backward += d.squaredNorm();
    if (grad) (*grad)[i] += (2.0 * wt) * d;
  }
  return wp * forward + wt * backward;
}

/// sum_p min_q |p - q|^2 + sum_q min_p |q - p|^2, each direction divided by
/// its source size under Reduction::Mean. `target_grid`, when given, must be
/// built over `target`. `hint` (e.g. the previous call's assignment for
/// slowly moving points) speeds up the search without changing the result.
inline ChamferResult chamfer_bidirectional(std::span<const Vec3> pred, std::span<const Vec3> target,
                                           Reduction reduction, bool want_grad = false,
                                           const PointGrid* target_grid = nullptr,
                                           const ChamferAssignment* hint = nullptr) {
  if (pred.empty() || target.empty()) throw InputError("chamfer distance of an empty point set");
  PointGrid local_target;
  if (!target_grid) {
    local_target.build(target);
    target_grid = &local_target;
  }
  const PointGrid pred_grid(pred);
  ChamferResult out;
  out.assignment.pred_to_target.resize(pred.size());
  out.assignment.target_to_pred.resize(target.size());
  const bool hinted = hint && hint->pred_to_target.size() == pred.size() && hint->target_to_pred.size() == target.size();
  parallel_for(std::ptrdiff_t(pred.size()), [&](std::ptrdiff_t i) {
    out.assignment.pred_to_target[i] = target_grid->nearest(pred[i], hinted ? hint->pred_to_target[i] : -1).index;
  });
  parallel_for(std::ptrdiff_t(target.size()), [&](std::ptrdiff_t j) {
    out.assignment.target_to_pred[j] = pred_grid.nearest(target[j], hinted ? hint->target_to_pred[j] : -1).index;
  });
  out.value = chamfer_with_assignment(pred, target, out.assignment, reduction, want_grad ? &out.grad : nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// Regularizers

/// sum_p sum_{q in N(p)} |p - q|^2, i.e. every edge counted from both ends.
inline double edge_length_loss(const TriMesh& mesh, const MeshAdjacency& adj, std::vector<Vec3>* grad = nullptr) {
  double total = 0.0;
  for (const MeshEdge& e : adj.edges) {
    const Vec3 d = mesh.vertices[e.v0] - mesh.vertices[e.v1];
    total += 2.0 * d.squaredNorm();
    if (grad) {
      (*grad)[e.v0] += 4.0 * d;
      (*grad)[e.v1] -= 4.0 * d;
    }
  }
  return total;
}

/// Sum over edges shared by two faces of 1 - cos(angle between face normals).
inline double normal_consistency_loss(const TriMesh& mesh, const MeshAdjacency& adj,
                                      std::vector<Vec3>* grad = nullptr) {
  std::vector<Vec3> cross(mesh.faces.size());
  std::vector<double> len(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    cross[f] = face_cross(mesh.vertices, mesh.faces[f]);
    len[f] = cross[f].norm();
  }
  std::vector<Vec3> cross_cot;
  if (grad) cross_cot.assign(mesh.faces.size(), Vec3::Zero());

  double total = 0.0;
  for (const MeshEdge& e : adj.edges) {
    if (e.face_count != 2) continue;
    for (int f : {e.f0, e.f1}) {
      if (0.5 * len[f] < kDegenerateArea) {
        throw NumericalError("degenerate face " + std::to_string(f) + " on a shared edge");
      }
    }
    const Vec3 n0 = cross[e.f0] / len[e.f0];
    const Vec3 n1 = cross[e.f1] / len[e.f1];
    const double c = n0.dot(n1);
    total += 1.0 - c;
    if (grad) {
      cross_cot[e.f0] -= (n1 - n0 * c) / len[e.f0];
      cross_cot[e.f1] -= (n0 - n1 * c) / len[e.f1];
    }
  }
  if (grad) {
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      face_cross_adjoint(mesh.vertices, mesh.faces[f], cross_cot[f], *grad);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Total objective

struct LossWeights {
  double chamfer = 1.0;             // lambda 1
  double edge_length = 1.0;         // lambda 2
  double normal_consistency = 1.0;  // lambda 3
};

/// Target vertices with a prebuilt search grid.
struct SurfaceTarget {
  std::vector<Vec3> points;
  PointGrid grid;

  SurfaceTarget() = default;
  explicit SurfaceTarget(std::vector<Vec3> pts) : points(std::move(pts)), grid(points) {}
};

struct LossReport {
  double chamfer_wm = 0.0;
  double chamfer_pial = 0.0;
  double edge_length = 0.0;         // wm + pial
  double normal_consistency = 0.0;  // wm + pial
  double total = 0.0;

  // Vertex gradients of the total w.r.t. the predicted surfaces.
  std::vector<Vec3> grad_wm, grad_pial;
  // Parameter-block gradients, filled by the reconstruction pipeline.
  VectorVolume grad_svf;
  ScalarVolume grad_hct;
};

/// Correspondences for both surfaces; passed back in to evaluate with the
/// argmin held fixed.
struct LossAssignments {
  ChamferAssignment wm, pial;
};

struct TotalLossInput {
  const TriMesh* wm = nullptr;
  const TriMesh* pial = nullptr;
  const MeshAdjacency* adjacency = nullptr;  // shared connectivity of wm and pial
  const SurfaceTarget* target_wm = nullptr;
  const SurfaceTarget* target_pial = nullptr;
  LossWeights weights;
  Reduction reduction = Reduction::Mean;
  const LossAssignments* hint = nullptr;  // search seeds only
};

/// lambda1 (Ch_wm + Ch_pial) + lambda2 L_el + lambda3 L_nc with the
/// regularizers evaluated on both predicted surfaces. Under Reduction::Mean
/// L_el is divided by the vertex count and L_nc by the interior edge count.
inline LossReport total_loss(const TotalLossInput& in, bool want_grad, const LossAssignments* frozen = nullptr,
                             LossAssignments* used = nullptr) {
  LossReport rep;
  const bool mean = in.reduction == Reduction::Mean;

  auto surface = [&](const TriMesh& mesh, const SurfaceTarget& target, const ChamferAssignment* fixed,
                     const ChamferAssignment* hint, ChamferAssignment* out_assign, std::vector<Vec3>& grad,
                     double& chamfer, double& el, double& nc) {
    grad.assign(mesh.vertices.size(), Vec3::Zero());
    std::vector<Vec3> g;
    if (fixed) {
      chamfer = chamfer_with_assignment(mesh.vertices, target.points, *fixed, in.reduction, want_grad ? &g : nullptr);
      if (out_assign) *out_assign = *fixed;
    } else {
      ChamferResult r = chamfer_bidirectional(mesh.vertices, target.points, in.reduction, want_grad, &target.grid, hint);
      chamfer = r.value;
      g = std::move(r.grad);
      if (out_assign) *out_assign = std::move(r.assignment);
    }
    if (want_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) grad[i] += in.weights.chamfer * g[i];
    }

    const double el_scale = mean ? 1.0 / double(mesh.vertices.size()) : 1.0;
    const double nc_scale = mean && in.adjacency->interior_edges > 0 ? 1.0 / double(in.adjacency->interior_edges) : 1.0;
    el = 0.0;
    nc = 0.0;
    if (in.weights.edge_length != 0.0 || !want_grad) {
      std::vector<Vec3> ge(want_grad ? mesh.vertices.size() : 0, Vec3::Zero());
      el = el_scale * edge_length_loss(mesh, *in.adjacency, want_grad ? &ge : nullptr);
      for (std::size_t i = 0; i < ge.size(); ++i) grad[i] += (in.weights.edge_length * el_scale) * ge[i];
    }
    if (in.weights.normal_consistency != 0.0 || !want_grad) {
      std::vector<Vec3> gn(want_grad ? mesh.vertices.size() : 0, Vec3::Zero());
      nc = nc_scale * normal_consistency_loss(mesh, *in.adjacency, want_grad ? &gn : nullptr);
      for (std::size_t i = 0; i < gn.size(); ++i) grad[i] += (in.weights.normal_consistency * nc_scale) * gn[i];
    }
  };

  double el_w = 0, nc_w = 0, el_p = 0, nc_p = 0;
  surface(*in.wm, *in.target_wm, frozen ? &frozen->wm : nullptr, in.hint ? &in.hint->wm : nullptr,
          used ? &used->wm : nullptr, rep.grad_wm, rep.chamfer_wm, el_w, nc_w);
  surface(*in.pial, *in.target_pial, frozen ? &frozen->pial : nullptr, in.hint ? &in.hint->pial : nullptr,
          used ? &used->pial : nullptr, rep.grad_pial, rep.chamfer_pial, el_p, nc_p);
  rep.edge_length = el_w + el_p;
  rep.normal_consistency = nc_w + nc_p;
  rep.total = in.weights.chamfer * (rep.chamfer_wm + rep.chamfer_pial) + in.weights.edge_length * rep.edge_length +
              in.weights.normal_consistency * rep.normal_consistency;
  if (!want_grad) {
    rep.grad_wm.clear();
    rep.grad_pial.clear();
  }
  return rep;
}

}  // namespace surfnn
