// surfnn command-line front end.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "surfnn/surfnn.hpp"

namespace fs = std::filesystem;
using namespace surfnn;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Input: return 2;
    case ErrorKind::Numerical: return 3;
    case ErrorKind::Topology: return 4;
  }
  return 1;
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError("no such file: " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw InputError("cannot create output directory " + dir);
}

// --- phantom ----------------------------------------------------------------

struct PhantomArgs {
  std::string kind = "sphere_pair";
  int dims = 64;
  double rw = 8.0, rg = 12.0, amplitude = 0.0;
  int frequency = 3;
  std::uint64_t seed = 0;
  int gt_level = 6;
  std::string out;
};

int run_phantom(const PhantomArgs& a) {
  PhantomSpec spec;
  spec.kind = parse_phantom_kind(a.kind);
  spec.dims = {a.dims, a.dims, a.dims};
  spec.r_w = a.rw;
  spec.r_g = a.rg;
  spec.bump_amplitude = a.amplitude;
  spec.bump_frequency = a.frequency;
  spec.seed = a.seed;
  spec.gt_level = a.gt_level;
  spec.validate();
  const Phantom ph = generate_phantom(spec);
  ensure_dir(a.out);
  const fs::path out(a.out);
  write_mvol(out / "wm_mask.mvol", ph.mask_w, MvolType::Mask8);
  write_mvol(out / "gm_mask.mvol", ph.mask_g, MvolType::Mask8);
  write_mesh(out / "gt_wm.ply", ph.gt_wm);
  write_mesh(out / "gt_pial.ply", ph.gt_pial);
  write_mesh(out / "gt_mid.ply", ph.gt_mid);
  std::cout << "kind=" << a.kind << " dims=" << a.dims << " gt_vertices=" << ph.gt_wm.vertices.size()
            << " gt_thickness=" << fmt(ph.gt_thickness) << "\n";
  return 0;
}

// --- sdf ---------------------------------------------------------------------

int run_sdf(const std::string& mask_path, const std::string& out_path) {
  require_file(mask_path);
  write_mvol(out_path, signed_distance(read_scalar_mvol(mask_path)));
  return 0;
}

// --- reconstruct -------------------------------------------------------------

struct ReconstructArgs {
  std::string wm_mask, gm_mask, target_wm, target_pial, config, out;
  int iterations = 0;
  double step_size = 0.0;
  int mesh_vertices = 0;
  std::uint64_t seed = 0;
};

int run_reconstruct(const ReconstructArgs& a, const CLI::App& cmd) {
  ReconstructionConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config);
    apply_key_values(read_key_values(a.config), cfg);
  }
  if (cmd.count("--iterations")) cfg.iterations = a.iterations;
  if (cmd.count("--step-size")) cfg.step_size = a.step_size;
  if (cmd.count("--mesh-vertices")) cfg.mesh_vertices = a.mesh_vertices;
  if (cmd.count("--seed")) cfg.seed = a.seed;

  ReconstructionInput in;
  require_file(a.wm_mask);
  require_file(a.gm_mask);
  in.wm_mask = read_scalar_mvol(a.wm_mask);
  in.gm_mask = read_scalar_mvol(a.gm_mask);
  if (!a.target_wm.empty() || !a.target_pial.empty()) {
    if (a.target_wm.empty() || a.target_pial.empty()) {
      throw InputError("--target-wm and --target-pial must be given together");
    }
    require_file(a.target_wm);
    require_file(a.target_pial);
    in.target_wm = read_mesh(a.target_wm);
    in.target_pial = read_mesh(a.target_pial);
    cfg.target_source = TargetSource::ProvidedMeshes;
  }

  const ReconstructionResult res = reconstruct(in, cfg);
  for (const std::string& w : res.warnings) std::cerr << "warning: " << w << "\n";

  ensure_dir(a.out);
  const fs::path out(a.out);
  write_mesh(out / "mid.ply", res.mid);
  write_mesh(out / "wm.ply", res.wm);
  write_mesh(out / "pial.ply", res.pial);
  {
    std::ofstream os(out / "thickness.txt");
    for (double t : res.thickness) os << fmt(t) << "\n";
  }
  {
    std::ofstream os(out / "trace.txt");
    for (const IterationRecord& r : res.trace) {
      os << "iter=" << r.iteration << " total=" << fmt(r.total) << " chamfer_wm=" << fmt(r.chamfer_wm)
         << " chamfer_pial=" << fmt(r.chamfer_pial) << " edge_length=" << fmt(r.edge_length)
         << " normal_consistency=" << fmt(r.normal_consistency) << " mean_thickness=" << fmt(r.mean_thickness)
         << " best=" << fmt(r.best_total) << "\n";
    }
  }
  std::cout << "vertices=" << res.mid.vertices.size() << " faces=" << res.mid.faces.size()
            << " best_iteration=" << res.best_iteration << " best_loss=" << fmt(res.best_loss)
            << " repair_rounds=" << res.repair_rounds << "\n";
  return 0;
}

// --- metrics -----------------------------------------------------------------

struct MetricsArgs {
  std::string pred, target, dump;
  int n = 20000;
  std::uint64_t seed = 7;
  int dims = 0;
  double spacing = 1.0;
};

int run_metrics(const MetricsArgs& a) {
  require_file(a.pred);
  require_file(a.target);
  const TriMesh pred = read_mesh(a.pred);
  const TriMesh target = read_mesh(a.target);
  std::optional<NormalizedFrame> frame;
  if (a.dims > 0) frame = NormalizedFrame({a.dims, a.dims, a.dims}, {a.spacing, a.spacing, a.spacing});
  const DistanceSamples d = surface_distances(pred, target, a.n, a.seed, frame);
  const SurfaceMetrics m = metrics_from_distances(d);
  if (!a.dump.empty()) {
    std::ofstream os(a.dump);
    for (double x : d.pred_to_target) os << "pt " << fmt(x) << "\n";
    for (double x : d.target_to_pred) os << "tp " << fmt(x) << "\n";
  }
  std::cout << "cd=" << fmt(m.cd) << " ad=" << fmt(m.ad) << " hd90=" << fmt(m.hd90) << " n=" << m.n_points << "\n";
  return 0;
}

// --- gradcheck ---------------------------------------------------------------

int run_gradcheck(const std::string& fixture, double epsilon) {
  const double tol = 1e-4;
  std::vector<std::string> names = {"chamfer_only", "full", "hct_only"};
  if (fixture != "all") names = {fixture};
  double worst = 0.0;
  for (const std::string& name : names) {
    const GradientCheckReport r = run_gradcheck_fixture(parse_gradcheck_fixture(name), epsilon);
    std::cout << "fixture=" << name << " params=" << r.parameters << " svf_rel=" << fmt(r.svf_error)
              << " hct_rel=" << fmt(r.hct_error) << " max_rel=" << fmt(r.max_error) << "\n";
    worst = std::max(worst, r.max_error);
  }
  std::cout << "max_rel=" << fmt(worst) << (worst < tol ? " ok" : " FAILED") << "\n";
  return worst < tol ? 0 : 1;
}

// --- info / convert ----------------------------------------------------------

bool is_volume_path(const std::string& p) { return fs::path(p).extension() == ".mvol"; }

int run_info(const std::string& path) {
  require_file(path);
  if (is_volume_path(path)) {
    const AnyVolume v = read_mvol(path);
    std::visit(
        [](const auto& g) {
          std::cout << "dims=" << g.dims()[0] << "," << g.dims()[1] << "," << g.dims()[2] << " spacing="
                    << fmt(g.spacing()[0]) << "," << fmt(g.spacing()[1]) << "," << fmt(g.spacing()[2]);
        },
        v);
    if (const auto* s = std::get_if<ScalarVolume>(&v)) {
      const auto [lo, hi] = std::minmax_element(s->values().begin(), s->values().end());
      std::cout << " min=" << fmt(*lo) << " max=" << fmt(*hi);
    }
    std::cout << "\n";
    return 0;
  }
  const TriMesh m = read_mesh(path);
  const TopologyReport t = topology_check(m);
  std::cout << "vertices=" << t.num_vertices << " edges=" << t.num_edges << " faces=" << t.num_faces
            << " components=" << t.num_components << " euler=" << t.euler_characteristic;
  if (t.genus) std::cout << " genus=" << *t.genus;
  std::cout << " closed_manifold=" << (t.is_closed_manifold ? 1 : 0) << " area=" << fmt(total_area(m)) << "\n";
  return 0;
}

int run_convert(const std::string& in, const std::string& out) {
  require_file(in);
  write_mesh(out, read_mesh(in));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled white-matter and pial surface reconstruction"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  PhantomArgs pa;
  CLI::App* phantom = app.add_subcommand("phantom", "Write synthetic masks and reference meshes");
  phantom->add_option("--kind", pa.kind, "sphere_pair, bumpy_pair or handle_defect");
  phantom->add_option("--dims", pa.dims, "Cubic volume size");
  phantom->add_option("--rw", pa.rw, "Inner radius (voxels)");
  phantom->add_option("--rg", pa.rg, "Outer radius (voxels)");
  phantom->add_option("--amplitude", pa.amplitude, "Bump amplitude (bumpy_pair)");
  phantom->add_option("--frequency", pa.frequency, "Bump angular frequency (bumpy_pair)");
  phantom->add_option("--seed", pa.seed);
  phantom->add_option("--gt-level", pa.gt_level, "Icosphere level of the reference meshes");
  phantom->add_option("--out", pa.out, "Output directory")->required();

  std::string sdf_mask, sdf_out;
  CLI::App* sdf = app.add_subcommand("sdf", "Signed distance of a binary mask");
  sdf->add_option("--mask", sdf_mask)->required();
  sdf->add_option("--out", sdf_out)->required();

  ReconstructArgs ra;
  CLI::App* rec = app.add_subcommand("reconstruct", "Fit coupled wm/pial surfaces to masks");
  rec->add_option("--wm-mask", ra.wm_mask)->required();
  rec->add_option("--gm-mask", ra.gm_mask)->required();
  rec->add_option("--target-wm", ra.target_wm, "Target wm mesh (instead of mask-derived)");
  rec->add_option("--target-pial", ra.target_pial, "Target pial mesh (instead of mask-derived)");
  rec->add_option("--config", ra.config, "key=value config file");
  rec->add_option("--iterations", ra.iterations);
  rec->add_option("--step-size", ra.step_size);
  rec->add_option("--mesh-vertices", ra.mesh_vertices);
  rec->add_option("--seed", ra.seed);
  rec->add_option("--out", ra.out, "Output directory")->required();

  MetricsArgs ma;
  CLI::App* met = app.add_subcommand("metrics", "Surface distance metrics between two meshes");
  met->add_option("--pred", ma.pred)->required();
  met->add_option("--target", ma.target)->required();
  met->add_option("--n", ma.n, "Points sampled per mesh");
  met->add_option("--seed", ma.seed);
  met->add_option("--dims", ma.dims, "Volume size for converting normalized coordinates to voxels");
  met->add_option("--spacing", ma.spacing, "Voxel spacing used with --dims");
  met->add_option("--dump", ma.dump, "Write per-point distances");

  std::string fixture = "all";
  double epsilon = 1e-5;
  CLI::App* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--fixture", fixture, "chamfer_only, full, hct_only or all");
  gc->add_option("--epsilon", epsilon);

  std::string info_path;
  CLI::App* info = app.add_subcommand("info", "Describe a mesh or volume");
  info->add_option("path", info_path)->required();

  std::string conv_in, conv_out;
  CLI::App* conv = app.add_subcommand("convert", "Convert a mesh between OFF and PLY");
  conv->add_option("input", conv_in)->required();
  conv->add_option("output", conv_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (threads > 0) set_thread_count(threads);
    if (phantom->parsed()) return run_phantom(pa);
    if (sdf->parsed()) return run_sdf(sdf_mask, sdf_out);
    if (rec->parsed()) return run_reconstruct(ra, *rec);
    if (met->parsed()) return run_metrics(ma);
    if (gc->parsed()) return run_gradcheck(fixture, epsilon);
    if (info->parsed()) return run_info(info_path);
    if (conv->parsed()) return run_convert(conv_in, conv_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
