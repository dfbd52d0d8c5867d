#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/deform.hpp"
#include "surfnn/levelset.hpp"
#include "surfnn/losses.hpp"
#include "surfnn/mesh.hpp"
#include "surfnn/phantom.hpp"
#include "surfnn/volume.hpp"

namespace surfnn {

enum class TargetSource { FromMasks, ProvidedMeshes };

inline TargetSource parse_target_source(const std::string& s) {
  if (s == "from_masks") return TargetSource::FromMasks;
  if (s == "provided_meshes") return TargetSource::ProvidedMeshes;
  throw InputError("unknown target source '" + s + "'");
}

struct ReconstructionConfig {
  int iterations = 200;
  double step_size = 1e-2;
  double hct_step_size = 0.0;  // 0: same as step_size
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Step size at the last iteration relative to step_size; geometric decay.
  double final_step_fraction = 1.0;
  int squaring_steps = 6;
  Index3 svf_grid_dims{0, 0, 0};  // 0: half the volume dims
  Index3 hct_grid_dims{0, 0, 0};
  LossWeights weights;
  Reduction reduction = Reduction::Mean;
  double hct_scale = 0.1;
  std::uint64_t seed = 0;
  TargetSource target_source = TargetSource::FromMasks;
  int mesh_vertices = 0;  // 0: keep the extracted initial mesh as is
  int max_repair_rounds = 10;
  int init_smoothing_iterations = 30;  // Taubin passes on the extracted mesh

  void validate() const {
    if (iterations < 0) throw InputError("iterations must be nonnegative");
    if (!(step_size > 0.0)) throw InputError("step_size must be positive");
    if (!(hct_step_size >= 0.0)) throw InputError("hct_step_size must be nonnegative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw InputError("moment decays must be within [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw InputError("adam_epsilon must be positive");
    if (!(final_step_fraction > 0.0)) throw InputError("final_step_fraction must be positive");
    if (squaring_steps < 0 || squaring_steps > kMaxSquaringSteps) {
      throw InputError("squaring steps must be within [0, 12]");
    }
    for (const Index3& d : {svf_grid_dims, hct_grid_dims}) {
      for (int n : d) {
        if (n != 0 && n < 2) throw InputError("parameter grid dims must be at least 2");
      }
    }
    if (!(hct_scale > 0.0)) throw InputError("hct_scale must be positive");
    if (mesh_vertices < 0) throw InputError("mesh_vertices must be nonnegative");
    if (max_repair_rounds < 0) throw InputError("max_repair_rounds must be nonnegative");
    if (init_smoothing_iterations < 0) throw InputError("init_smoothing_iterations must be nonnegative");
  }
};

inline Index3 resolve_grid_dims(const Index3& requested, const Index3& volume_dims) {
  Index3 out;
  for (int a = 0; a < 3; ++a) out[a] = requested[a] > 0 ? requested[a] : std::max(2, (volume_dims[a] + 1) / 2);
  return out;
}

// ---------------------------------------------------------------------------
// Targets and initialization

struct TargetMeshes {
  TriMesh wm, pial;
  std::vector<std::string> warnings;
};

inline void check_masks(const ScalarVolume& wm, const ScalarVolume& gm) {
  if (!wm.same_shape(gm)) throw InputError("wm and gm masks differ in shape");
  check_mask_has_boundary(wm);
  check_mask_has_boundary(gm);
}

inline bool contains_mask(const ScalarVolume& outer, const ScalarVolume& inner) {
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (is_foreground(inner[i]) && !is_foreground(outer[i])) return false;
  }
  return true;
}

inline TargetMeshes build_targets(const ScalarVolume& wm_mask, const ScalarVolume& gm_mask) {
  check_masks(wm_mask, gm_mask);
  TargetMeshes t;
  if (!contains_mask(gm_mask, wm_mask)) t.warnings.push_back("gm mask does not contain the wm mask");
  t.wm = marching_cubes(separate_from_iso(signed_distance(wm_mask)), 0.0);
  t.pial = marching_cubes(separate_from_iso(signed_distance(gm_mask)), 0.0);
  return t;
}

inline TargetMeshes build_targets(const TriMesh& wm, const TriMesh& pial) {
  validate(wm);
  validate(pial);
  return {wm, pial, {}};
}

inline constexpr double kInitIsoMargin = 0.1;  // voxels

struct Initialization {
  TriMesh mesh;
  ScalarVolume sdf_w, sdf_g;
  int repair_rounds = 0;
};

inline Initialization initialize(const ScalarVolume& wm_mask, const ScalarVolume& gm_mask, int max_repair_rounds = 10,
                                 int smoothing_iterations = 30) {
  check_masks(wm_mask, gm_mask);
  Initialization init;
  init.sdf_w = signed_distance(wm_mask);
  init.sdf_g = signed_distance(gm_mask);
  // Distance fields of masks are often exactly zero on the mid level set;
  // a wide nudge keeps extracted vertices away from grid nodes (no slivers).
  TopologyRepairResult rep =
      topology_repair(midthickness_level_set(init.sdf_w, init.sdf_g), max_repair_rounds, 0.0, kInitIsoMargin);
  // Irregular valences (4 and 8+ are common in extracted meshes) turn into
  // wrinkles after subdivision and fold the inward offset.
  equalize_valence(rep.mesh);
  init.mesh = taubin_smooth(rep.mesh, smoothing_iterations);
  init.repair_rounds = rep.rounds;
  return init;
}

/// Loop subdivision to the level whose vertex count is closest to `target`
/// on a log scale. target 0 returns the mesh unchanged.
inline TriMesh densify(const TriMesh& mesh, int target) {
  if (target <= 0) return mesh;
  TriMesh best = mesh;
  double best_err = std::abs(std::log(double(mesh.vertices.size()) / double(target)));
  TriMesh cur = mesh;
  while (cur.vertices.size() < std::size_t(target)) {
    cur = subdivide_loop(cur);
    const double err = std::abs(std::log(double(cur.vertices.size()) / double(target)));
    if (err < best_err) {
      best = cur;
      best_err = err;
    }
  }
  return best;
}

/// Half of the mean SDF half-gap (sdf_w - sdf_g) / 2 over the mesh vertices,
/// in physical units, floored at a small positive value.
inline double initial_half_thickness(const TriMesh& mesh, const ScalarVolume& sdf_w, const ScalarVolume& sdf_g) {
  double acc = 0.0;
  for (const Vec3& p : mesh.vertices) acc += 0.5 * (sample(sdf_w, p) - sample(sdf_g, p));
  const double mean_gap = acc / double(mesh.vertices.size());
  const double min_spacing = *std::min_element(sdf_w.spacing().begin(), sdf_w.spacing().end());
  return std::max(0.5 * mean_gap, 0.05 * min_spacing);
}

// ---------------------------------------------------------------------------
// Objective

/// Everything that stays fixed during optimization.
struct Problem {
  TriMesh s0;
  MeshAdjacency adjacency;
  SurfaceTarget target_wm, target_pial;
  NormalizedFrame frame;  // of the input volume
  LossWeights weights;
  Reduction reduction = Reduction::Mean;
};

inline Problem make_problem(TriMesh s0, const TriMesh& target_wm, const TriMesh& target_pial,
                            const NormalizedFrame& frame, const LossWeights& weights, Reduction reduction) {
  Problem pb;
  pb.s0 = std::move(s0);
  pb.adjacency = build_adjacency(pb.s0);
  pb.target_wm = SurfaceTarget(target_wm.vertices);
  pb.target_pial = SurfaceTarget(target_pial.vertices);
  pb.frame = frame;
  pb.weights = weights;
  pb.reduction = reduction;
  return pb;
}

struct Parameters {
  SvfParams svf;
  HctParams hct;
};

/// Zero velocity and a constant raw thickness grid mapping to
/// `half_thickness` (normalized units).
inline Parameters initial_parameters(const Index3& svf_dims, const Index3& hct_dims, int squaring_steps,
                                     double hct_scale, double half_thickness) {
  Parameters th;
  th.svf.velocity = VectorVolume(svf_dims);
  th.svf.squaring_steps = squaring_steps;
  th.hct.scale = hct_scale;
  th.hct.raw = ScalarVolume(hct_dims);
  const double raw0 = softplus_inverse(half_thickness / hct_scale);
  for (std::size_t i = 0; i < th.hct.raw.size(); ++i) th.hct.raw[i] = raw0;
  return th;
}

struct Evaluation {
  VectorVolume displacement;
  TriMesh mid;
  OffsetSurfaces surfaces;
  LossReport loss;
};

/// Forward pass mid = warp(S_0), (wm, pial) = offset(mid); with want_grad
/// the loss report carries gradients for both parameter blocks.
inline Evaluation evaluate_objective(const Problem& pb, const Parameters& th, bool want_grad,
                                     const LossAssignments* frozen = nullptr, LossAssignments* used = nullptr,
                                     const LossAssignments* hint = nullptr) {
  Evaluation ev;
  SvfTape tape;
  ev.displacement = integrate_svf(th.svf, want_grad ? &tape : nullptr);
  ev.mid = warp_mesh(ev.displacement, pb.s0);
  ev.surfaces = offset_surfaces(ev.mid, th.hct);

  TotalLossInput in;
  in.wm = &ev.surfaces.wm;
  in.pial = &ev.surfaces.pial;
  in.adjacency = &pb.adjacency;
  in.target_wm = &pb.target_wm;
  in.target_pial = &pb.target_pial;
  in.weights = pb.weights;
  in.reduction = pb.reduction;
  in.hint = hint;
  ev.loss = total_loss(in, want_grad, frozen, used);
  if (!want_grad) return ev;

  const OffsetAdjoint adj = offset_surfaces_adjoint(ev.mid, th.hct, ev.surfaces, ev.loss.grad_wm, ev.loss.grad_pial);
  VectorVolume disp_grad(th.svf.velocity.dims(), th.svf.velocity.spacing());
  warp_mesh_adjoint(pb.s0, adj.mid_grad, disp_grad);
  ev.loss.grad_svf = integrate_svf_adjoint(tape, disp_grad);
  ev.loss.grad_hct = adj.raw_grad;
  return ev;
}

// ---------------------------------------------------------------------------
// Optimizer

/// Adam over the velocity and raw thickness grids.
class Adam {
 public:
  Adam(const Parameters& th, double beta1, double beta2, double epsilon)
      : beta1_(beta1), beta2_(beta2), eps_(epsilon),
        m_svf_(th.svf.velocity.size() * 3, 0.0), v_svf_(m_svf_.size(), 0.0),
        m_hct_(th.hct.raw.size(), 0.0), v_hct_(m_hct_.size(), 0.0) {}

  void step(Parameters& th, const LossReport& g, double step_size) { step(th, g, step_size, step_size); }

  void step(Parameters& th, const LossReport& g, double svf_step, double hct_step) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < th.svf.velocity.size(); ++i) {
      for (int a = 0; a < 3; ++a) update(th.svf.velocity[i][a], g.grad_svf[i][a], m_svf_[3 * i + a], v_svf_[3 * i + a], c1, c2, svf_step);
    }
    for (std::size_t i = 0; i < th.hct.raw.size(); ++i) {
      update(th.hct.raw[i], g.grad_hct[i], m_hct_[i], v_hct_[i], c1, c2, hct_step);
    }
  }

 private:
  void update(double& x, double g, double& m, double& v, double c1, double c2, double lr) const {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g * g;
    x -= lr * (m / c1) / (std::sqrt(v / c2) + eps_);
  }

  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<double> m_svf_, v_svf_, m_hct_, v_hct_;
};

// ---------------------------------------------------------------------------
// Reconstruction

struct IterationRecord {
  int iteration = 0;
  double total = 0.0;
  double chamfer_wm = 0.0;
  double chamfer_pial = 0.0;
  double edge_length = 0.0;
  double normal_consistency = 0.0;
  double mean_thickness = 0.0;  // physical units
  double best_total = 0.0;
};

struct ReconstructionInput {
  ScalarVolume wm_mask, gm_mask;
  std::optional<TriMesh> target_wm, target_pial;
};

struct ReconstructionResult {
  TriMesh s0, mid, wm, pial;
  std::vector<double> half_thickness;  // normalized units, per vertex
  std::vector<double> thickness;       // physical units, per vertex (2 dp)
  Parameters parameters;               // of the best iterate
  std::vector<IterationRecord> trace;
  int best_iteration = 0;
  double best_loss = 0.0;
  int repair_rounds = 0;
  std::vector<std::string> warnings;
};

/// Called after every evaluation with the iteration index and its state.
using IterationObserver = std::function<void(int, const Evaluation&)>;

inline std::vector<double> to_physical_thickness(const std::vector<double>& half_thickness, const NormalizedFrame& frame) {
  std::vector<double> t(half_thickness.size());
  const double k = 2.0 / frame.normalized_per_physical();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = k * half_thickness[i];
  return t;
}

inline ReconstructionResult reconstruct(const ReconstructionInput& input, const ReconstructionConfig& cfg,
                                        const IterationObserver& observer = {}) {
  cfg.validate();
  ReconstructionResult res;
  TargetMeshes targets;
  if (cfg.target_source == TargetSource::ProvidedMeshes) {
    if (!input.target_wm || !input.target_pial) throw InputError("provided_meshes target source requires target meshes");
    check_masks(input.wm_mask, input.gm_mask);
    targets = build_targets(*input.target_wm, *input.target_pial);
    if (!contains_mask(input.gm_mask, input.wm_mask)) targets.warnings.push_back("gm mask does not contain the wm mask");
  } else {
    targets = build_targets(input.wm_mask, input.gm_mask);
  }
  res.warnings = targets.warnings;

  Initialization init = initialize(input.wm_mask, input.gm_mask, cfg.max_repair_rounds, cfg.init_smoothing_iterations);
  res.repair_rounds = init.repair_rounds;
  const NormalizedFrame frame(input.wm_mask);
  const double dp0 = initial_half_thickness(init.mesh, init.sdf_w, init.sdf_g) * frame.normalized_per_physical();

  Problem pb = make_problem(densify(init.mesh, cfg.mesh_vertices), targets.wm, targets.pial, frame, cfg.weights,
                            cfg.reduction);
  Parameters th = initial_parameters(resolve_grid_dims(cfg.svf_grid_dims, frame.dims),
                                     resolve_grid_dims(cfg.hct_grid_dims, frame.dims), cfg.squaring_steps,
                                     cfg.hct_scale, dp0);
  Adam adam(th, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
  const double decay = cfg.iterations > 1 ? std::pow(cfg.final_step_fraction, 1.0 / double(cfg.iterations - 1)) : 1.0;

  res.best_loss = std::numeric_limits<double>::infinity();
  LossAssignments previous, current;
  for (int it = 0; it <= cfg.iterations; ++it) {
    const bool last = it == cfg.iterations;
    Evaluation ev = evaluate_objective(pb, th, !last, nullptr, &current, it > 0 ? &previous : nullptr);
    std::swap(previous, current);
    if (!std::isfinite(ev.loss.total)) {
      throw NumericalError("non-finite loss at iteration " + std::to_string(it));
    }
    if (observer) observer(it, ev);

    IterationRecord rec;
    rec.iteration = it;
    rec.total = ev.loss.total;
    rec.chamfer_wm = ev.loss.chamfer_wm;
    rec.chamfer_pial = ev.loss.chamfer_pial;
    rec.edge_length = ev.loss.edge_length;
    rec.normal_consistency = ev.loss.normal_consistency;
    double mean_dp = 0.0;
    for (double d : ev.surfaces.half_thickness) mean_dp += d;
    rec.mean_thickness = 2.0 * mean_dp / double(ev.surfaces.half_thickness.size()) / frame.normalized_per_physical();

    if (ev.loss.total < res.best_loss) {
      res.best_loss = ev.loss.total;
      res.best_iteration = it;
      res.mid = ev.mid;
      res.wm = ev.surfaces.wm;
      res.pial = ev.surfaces.pial;
      res.half_thickness = ev.surfaces.half_thickness;
      res.parameters = th;
    }
    rec.best_total = res.best_loss;
    res.trace.push_back(rec);

    if (!last) {
      const double f = std::pow(decay, double(it));
      adam.step(th, ev.loss, cfg.step_size * f, (cfg.hct_step_size > 0.0 ? cfg.hct_step_size : cfg.step_size) * f);
    }
  }
  res.s0 = std::move(pb.s0);
  res.thickness = to_physical_thickness(res.half_thickness, frame);
  return res;
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradientCheckReport {
  double svf_error = 0.0;  // relative, max-norm over the block
  double hct_error = 0.0;
  double max_error = 0.0;
  std::size_t parameters = 0;
};

/// Relative discrepancy |a - b|_inf / max(|a|_inf, |b|_inf).
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return scale > 0.0 ? diff / scale : diff;
}

/// Central differences on every selected parameter with the Chamfer
/// correspondences frozen at the base point.
inline GradientCheckReport gradient_check(const Problem& pb, const Parameters& base, double epsilon,
                                          bool check_svf = true, bool check_hct = true) {
  LossAssignments assign;
  const Evaluation ev = evaluate_objective(pb, base, true, nullptr, &assign);
  Parameters th = base;
  auto central = [&](double& x) {
    const double x0 = x;
    x = x0 + epsilon;
    const double fp = evaluate_objective(pb, th, false, &assign).loss.total;
    x = x0 - epsilon;
    const double fm = evaluate_objective(pb, th, false, &assign).loss.total;
    x = x0;
    return (fp - fm) / (2.0 * epsilon);
  };

  GradientCheckReport rep;
  if (check_svf) {
    std::vector<double> analytic, numeric;
    for (std::size_t i = 0; i < th.svf.velocity.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        analytic.push_back(ev.loss.grad_svf[i][a]);
        numeric.push_back(central(th.svf.velocity[i][a]));
      }
    }
    rep.svf_error = relative_error(analytic, numeric);
    rep.parameters += analytic.size();
  }
  if (check_hct) {
    std::vector<double> analytic, numeric;
    for (std::size_t i = 0; i < th.hct.raw.size(); ++i) {
      analytic.push_back(ev.loss.grad_hct[i]);
      numeric.push_back(central(th.hct.raw[i]));
    }
    rep.hct_error = relative_error(analytic, numeric);
    rep.parameters += analytic.size();
  }
  rep.max_error = std::max(rep.svf_error, rep.hct_error);
  return rep;
}

enum class GradcheckFixture { ChamferOnly, Full, HctOnly };

inline GradcheckFixture parse_gradcheck_fixture(const std::string& s) {
  if (s == "chamfer_only") return GradcheckFixture::ChamferOnly;
  if (s == "full") return GradcheckFixture::Full;
  if (s == "hct_only") return GradcheckFixture::HctOnly;
  throw InputError("unknown gradcheck fixture '" + s + "'");
}

/// Small built-in case: 16^3 sphere pair (radii 3 and 5), 8^3 parameter
/// grids, random small velocity and thickness perturbations.
inline GradientCheckReport run_gradcheck_fixture(GradcheckFixture fixture, double epsilon = 1e-5,
                                                 std::uint64_t seed = 1) {
  PhantomSpec spec;
  spec.dims = {16, 16, 16};
  spec.r_w = 3.0;
  spec.r_g = 5.0;
  spec.gt_level = 0;
  const Phantom ph = generate_phantom(spec);
  const TargetMeshes targets = build_targets(ph.mask_w, ph.mask_g);
  const Initialization init = initialize(ph.mask_w, ph.mask_g);
  const NormalizedFrame frame(ph.mask_w);

  LossWeights w;
  if (fixture == GradcheckFixture::ChamferOnly) w.edge_length = w.normal_consistency = 0.0;
  const Problem pb = make_problem(init.mesh, targets.wm, targets.pial, frame, w, Reduction::Mean);

  const double dp0 = initial_half_thickness(init.mesh, init.sdf_w, init.sdf_g) * frame.normalized_per_physical();
  Parameters th = initial_parameters({8, 8, 8}, {8, 8, 8}, 6, 0.1, dp0);
  std::mt19937_64 rng(seed);
  auto noise = [&](double amp) { return amp * (2.0 * unit_double(rng) - 1.0); };
  // Squaring samples u_k at x + u_k(x), right next to the node x; velocity
  // components bounded away from zero keep those samples off the trilinear
  // kinks at the nodes.
  auto away_from_zero = [&] {
    const double mag = 0.02 + 0.03 * unit_double(rng);
    return unit_double(rng) < 0.5 ? -mag : mag;
  };
  if (fixture != GradcheckFixture::HctOnly) {
    for (std::size_t i = 0; i < th.svf.velocity.size(); ++i) {
      th.svf.velocity[i] = Vec3(away_from_zero(), away_from_zero(), away_from_zero());
    }
  }
  for (std::size_t i = 0; i < th.hct.raw.size(); ++i) th.hct.raw[i] += noise(0.2);
  return gradient_check(pb, th, epsilon, fixture != GradcheckFixture::HctOnly, true);
}

}  // namespace surfnn
