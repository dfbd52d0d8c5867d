// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed below.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "oracles.hpp"

using namespace surfnn;

namespace {

constexpr double kEdtTolerance = 1e-9;
constexpr double kEdtSeconds = 10.0;
constexpr double kSphereRadiusRms = 0.2;  // voxels
constexpr double kSvfExact = 1e-12;
constexpr double kInverseTolerance = 0.01;
constexpr double kSquaringConvergence = 1e-3;
constexpr double kGradcheckTolerance = 1e-4;
constexpr double kNnTolerance = 1e-12;
constexpr double kSphereSeconds = 60.0;
constexpr double kSphereAd = 0.5;  // voxels
constexpr double kThicknessError = 0.3;
constexpr double kBumpyAd = 0.8;
constexpr double kCouplingTolerance = 1e-9;

constexpr int kMetricPoints = 130000;
constexpr std::uint64_t kMetricSeed = 7;

int failures = 0;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

// Runs a check and turns an exception into a failure line.
void guarded(int id, const std::string& name, const std::function<void()>& check) {
  try {
    check();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ReconstructionConfig acceptance_config(int mesh_vertices) {
  ReconstructionConfig cfg;
  cfg.iterations = 60;
  cfg.step_size = 1e-3;
  cfg.hct_step_size = 0.1;
  cfg.final_step_fraction = 0.1;
  cfg.target_source = TargetSource::ProvidedMeshes;
  cfg.mesh_vertices = mesh_vertices;
  return cfg;
}

PhantomSpec phantom_spec(PhantomKind kind) {
  PhantomSpec spec;
  spec.kind = kind;
  spec.dims = {64, 64, 64};
  spec.r_w = 8.0;
  spec.r_g = 12.0;
  spec.gt_level = 7;
  if (kind == PhantomKind::BumpyPair) {
    spec.bump_amplitude = 1.5;
    spec.bump_frequency = 3;
  }
  return spec;
}

struct Run {
  Phantom phantom;
  ReconstructionResult result;
  SurfaceMetrics wm, pial;
  double seconds = 0.0;
  bool connectivity_fixed = true;
};

Run run_reconstruction(PhantomKind kind, int mesh_vertices) {
  Run run;
  run.phantom = generate_phantom(phantom_spec(kind));
  const ReconstructionInput in{run.phantom.mask_w, run.phantom.mask_g, run.phantom.gt_wm, run.phantom.gt_pial};
  std::vector<Face> first_faces;
  const auto t0 = std::chrono::steady_clock::now();
  run.result = reconstruct(in, acceptance_config(mesh_vertices), [&](int it, const Evaluation& ev) {
    if (it == 0) first_faces = ev.mid.faces;
    run.connectivity_fixed = run.connectivity_fixed && ev.mid.faces == first_faces &&
                             ev.surfaces.wm.faces == first_faces && ev.surfaces.pial.faces == first_faces;
  });
  run.seconds = seconds_since(t0);
  run.connectivity_fixed = run.connectivity_fixed && first_faces == run.result.s0.faces;
  const NormalizedFrame frame(run.phantom.mask_w);
  run.wm = evaluate(run.result.wm, run.phantom.gt_wm, kMetricPoints, kMetricSeed, frame);
  run.pial = evaluate(run.result.pial, run.phantom.gt_pial, kMetricPoints, kMetricSeed, frame);
  return run;
}

double max_displacement_change(const VectorVolume& velocity, int k) {
  const VectorVolume a = integrate_svf({velocity, k});
  const VectorVolume b = integrate_svf({velocity, k + 1});
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

// 1: distance transform against the quadratic-time oracle.
void check_edt() {
  std::mt19937_64 rng(101);
  double worst = 0.0, fast_seconds = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const ScalarVolume mask = oracle::random_mask({16, 16, 16}, 0.05 + 0.9 * trial / 49.0, rng);
    const auto t0 = std::chrono::steady_clock::now();
    const ScalarVolume fast = edt_squared(mask);
    fast_seconds += seconds_since(t0);
    const ScalarVolume slow = oracle::brute_force_edt_squared(mask);
    for (std::size_t i = 0; i < mask.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
  }
  report(1, "edt matches brute force on 50 random 16^3 masks", worst <= kEdtTolerance && fast_seconds < kEdtSeconds,
         "max_abs_err=" + fmt(worst) + " time=" + fmt(fast_seconds) + "s");
}

// 2: marching cubes on an analytic sphere.
void check_marching_cubes() {
  const int n = 48;
  const double r = 10.0;
  ScalarVolume f({n, n, n});
  const Vec3 c = Vec3::Constant(0.5 * (n - 1));
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) f(i, j, k) = (Vec3(i, j, k) - c).norm() - r;
  const TriMesh m = marching_cubes(f);
  const TopologyReport t = topology_check(m);
  const NormalizedFrame frame(f);
  double sq = 0.0;
  for (const Vec3& p : m.vertices) sq += std::pow((frame.to_grid(p) - c).norm() - r, 2);
  const double rms = std::sqrt(sq / double(m.vertices.size()));
  report(2, "marching cubes sphere is closed, one component, chi=2",
         t.is_closed_manifold && t.num_components == 1 && t.euler_characteristic == 2 && rms < kSphereRadiusRms,
         "chi=" + std::to_string(t.euler_characteristic) + " components=" + std::to_string(t.num_components) +
             " radius_rms=" + fmt(rms));
}

// 3: scaling and squaring on zero and constant fields.
void check_svf_exact() {
  double worst = 0.0;
  const Vec3 c(0.07, -0.04, 0.03);
  for (int K = 0; K <= 8; ++K) {
    VectorVolume zero({10, 10, 10}), cst({10, 10, 10});
    cst.fill(c);
    const VectorVolume uz = integrate_svf({zero, K});
    const VectorVolume uc = integrate_svf({cst, K});
    for (std::size_t i = 0; i < uz.size(); ++i) {
      worst = std::max({worst, uz[i].norm(), (uc[i] - c).norm()});
    }
  }
  report(3, "svf zero and constant velocity exact for K=0..8", worst <= kSvfExact, "max_err=" + fmt(worst));
}

// 4: inverse consistency and convergence in K.
void check_svf_inverse(const VectorVolume* fitted) {
  std::mt19937_64 rng(202);
  double worst_inv = 0.0, worst_k = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const VectorVolume v = oracle::smooth_random_field({16, 16, 16}, 0.1, rng);
    VectorVolume w = v;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = -w[i];
    const VectorVolume up = integrate_svf({v, 6});
    const VectorVolume um = integrate_svf({w, 6});
    for (const Vec3& x : oracle::random_points(200, rng, -0.8, 0.8)) {
      const Vec3 y = x + sample(um, x);
      worst_inv = std::max(worst_inv, (y + sample(up, y) - x).norm());
    }
    worst_k = std::max(worst_k, max_displacement_change(v, 6));
  }
  double fitted_k = 0.0;
  if (fitted) fitted_k = max_displacement_change(*fitted, 6);
  report(4, "svf inverse consistency and K vs K+1",
         fitted && worst_inv < kInverseTolerance && worst_k < kSquaringConvergence && fitted_k < kSquaringConvergence,
         "inverse_err=" + fmt(worst_inv) + " k6_vs_k7=" + fmt(worst_k) + " fitted_k6_vs_k7=" + fmt(fitted_k));
}

// 5: gradient check through the command-line tool.
void check_gradcheck() {
  const auto r = oracle::run_command(oracle::cli() + " gradcheck --fixture all");
  double worst = -1.0;
  const auto pos = r.output.rfind("max_rel=");
  if (pos != std::string::npos) worst = std::stod(r.output.substr(pos + 8));
  report(5, "analytic gradients match central differences", r.exit_code == 0 && worst >= 0.0 && worst < kGradcheckTolerance,
         "max_rel=" + fmt(worst) + " exit=" + std::to_string(r.exit_code));
}

// 6: nearest neighbours and Chamfer basics.
void check_nearest_neighbours() {
  std::mt19937_64 rng(303);
  const auto pts = oracle::random_points(2000, rng);
  const auto queries = oracle::random_points(2000, rng, -1.2, 1.2);
  const PointGrid grid(pts);
  double worst = 0.0;
  bool same_index = true;
  for (const Vec3& q : queries) {
    const Nearest a = grid.nearest(q), b = oracle::brute_force_nearest(pts, q);
    worst = std::max(worst, std::abs(a.dist2 - b.dist2));
    same_index = same_index && a.index == b.index;
  }
  const double ab = chamfer_bidirectional(pts, queries, Reduction::Mean).value;
  const double ba = chamfer_bidirectional(queries, pts, Reduction::Mean).value;
  const double self = chamfer_bidirectional(pts, pts, Reduction::Mean).value;
  report(6, "nearest neighbours equal brute force, chamfer symmetric and zero on itself",
         worst <= kNnTolerance && same_index && std::abs(ab - ba) <= kNnTolerance * ab && self == 0.0,
         "max_d2_err=" + fmt(worst) + " asym=" + fmt(std::abs(ab - ba)) + " self=" + fmt(self));
}

void check_sphere(const Run& run) {
  double err = 0.0;
  for (double t : run.result.thickness) err += std::abs(t - run.phantom.gt_thickness);
  err /= double(run.result.thickness.size());
  report(7, "sphere pair at 130k vertices",
         run.seconds < kSphereSeconds && run.wm.ad < kSphereAd && run.pial.ad < kSphereAd && err < kThicknessError,
         "time=" + fmt(run.seconds) + "s vertices=" + std::to_string(run.result.mid.vertices.size()) +
             " ad_wm=" + fmt(run.wm.ad) + " ad_pial=" + fmt(run.pial.ad) + " thickness_err=" + fmt(err));
}

void check_bumpy(const Run& run) {
  report(8, "bumpy pair (amplitude 1.5, frequency 3)", run.wm.ad < kBumpyAd && run.pial.ad < kBumpyAd,
         "ad_wm=" + fmt(run.wm.ad) + " ad_pial=" + fmt(run.pial.ad) + " time=" + fmt(run.seconds) + "s");
}

void check_density(const Run& dense, const Run& coarse) {
  const bool worse = coarse.wm.cd > dense.wm.cd && coarse.wm.ad > dense.wm.ad && coarse.pial.cd > dense.pial.cd &&
                     coarse.pial.ad > dense.pial.ad;
  report(9, "40k mesh is worse than 130k in cd and ad", worse,
         "cd_wm " + fmt(coarse.wm.cd) + ">" + fmt(dense.wm.cd) + " ad_wm " + fmt(coarse.wm.ad) + ">" + fmt(dense.wm.ad) +
             " cd_pial " + fmt(coarse.pial.cd) + ">" + fmt(dense.pial.cd) + " ad_pial " + fmt(coarse.pial.ad) + ">" +
             fmt(dense.pial.ad));
}

int flipped_faces(const TriMesh& a, const TriMesh& b) {
  int n = 0;
  for (std::size_t f = 0; f < a.faces.size(); ++f) {
    n += face_cross(a.vertices, a.faces[f]).dot(face_cross(b.vertices, b.faces[f])) <= 0.0;
  }
  return n;
}

// 10: topology of the initialization and preservation during optimization.
void check_topology(const Run& sphere) {
  PhantomSpec spec = phantom_spec(PhantomKind::HandleDefect);
  spec.gt_level = 1;
  const Phantom ph = generate_phantom(spec);
  const Initialization init = initialize(ph.mask_w, ph.mask_g);
  const TopologyReport t = topology_check(init.mesh);
  const TopologyReport mid = topology_check(sphere.result.mid);
  const int flips = flipped_faces(sphere.result.s0, sphere.result.mid);
  report(10, "genus 0 initialization and fixed connectivity",
         t.is_spherical() && t.num_components == 1 && init.repair_rounds > 0 && sphere.connectivity_fixed &&
             mid.is_spherical() && flips == 0,
         "handle_repair_rounds=" + std::to_string(init.repair_rounds) + " genus=" + (t.genus ? std::to_string(*t.genus) : "n/a") +
             " components=" + std::to_string(t.num_components) +
             " connectivity_fixed=" + (sphere.connectivity_fixed ? "1" : "0") + " flipped_faces=" + std::to_string(flips));
}

// 11: wm and pial are exact offsets of the mid surface.
void check_coupling(const std::vector<const Run*>& runs) {
  double mid_err = 0.0, thick_err = 0.0;
  for (const Run* run : runs) {
    const ReconstructionResult& r = run->result;
    for (std::size_t i = 0; i < r.mid.vertices.size(); ++i) {
      mid_err = std::max(mid_err, (0.5 * (r.wm.vertices[i] + r.pial.vertices[i]) - r.mid.vertices[i]).norm());
      thick_err = std::max(thick_err, std::abs((r.pial.vertices[i] - r.wm.vertices[i]).norm() - 2.0 * r.half_thickness[i]));
    }
  }
  report(11, "coupling identities on all outputs", mid_err <= kCouplingTolerance && thick_err <= kCouplingTolerance,
         "mid_err=" + fmt(mid_err) + " thickness_err=" + fmt(thick_err));
}

}  // namespace

int main() {
  guarded(1, "edt", check_edt);
  guarded(2, "marching cubes", check_marching_cubes);
  guarded(3, "svf exact", check_svf_exact);
  guarded(5, "gradcheck", check_gradcheck);
  guarded(6, "nearest neighbours", check_nearest_neighbours);

  Run sphere, bumpy, coarse;
  bool have_sphere = false, have_bumpy = false, have_coarse = false;
  guarded(7, "sphere pair", [&] {
    sphere = run_reconstruction(PhantomKind::SpherePair, 130000);
    have_sphere = true;
    check_sphere(sphere);
  });
  guarded(4, "svf inverse", [&] { check_svf_inverse(have_sphere ? &sphere.result.parameters.svf.velocity : nullptr); });
  guarded(8, "bumpy pair", [&] {
    bumpy = run_reconstruction(PhantomKind::BumpyPair, 130000);
    have_bumpy = true;
    check_bumpy(bumpy);
  });
  guarded(9, "density", [&] {
    coarse = run_reconstruction(PhantomKind::SpherePair, 40000);
    have_coarse = true;
    if (!have_sphere) throw std::runtime_error("130k sphere run unavailable");
    check_density(sphere, coarse);
  });
  guarded(10, "topology", [&] {
    if (!have_sphere) throw std::runtime_error("130k sphere run unavailable");
    check_topology(sphere);
  });
  guarded(11, "coupling", [&] {
    std::vector<const Run*> runs;
    if (have_sphere) runs.push_back(&sphere);
    if (have_bumpy) runs.push_back(&bumpy);
    if (have_coarse) runs.push_back(&coarse);
    if (runs.empty()) throw std::runtime_error("no reconstruction output");
    check_coupling(runs);
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
