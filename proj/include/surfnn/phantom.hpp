#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/mesh.hpp"
#include "surfnn/parallel.hpp"
#include "surfnn/volume.hpp"

namespace surfnn {

/// Unit icosphere: icosahedron refined `level` times by midpoint subdivision
/// with every vertex projected back to the sphere. 10 * 4^level + 2 vertices.
inline TriMesh icosphere(int level) {
  if (level < 0 || level > 9) throw InputError("icosphere level must be within [0, 9]");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  TriMesh mesh{std::move(v), std::move(f)};
  for (Vec3& p : mesh.vertices) p.normalize();
  for (int l = 0; l < level; ++l) {
    mesh = subdivide_midpoint(mesh);
    for (Vec3& p : mesh.vertices) p.normalize();
  }
  return mesh;
}

enum class PhantomKind { SpherePair, BumpyPair, HandleDefect };

inline PhantomKind parse_phantom_kind(const std::string& s) {
  if (s == "sphere_pair") return PhantomKind::SpherePair;
  if (s == "bumpy_pair") return PhantomKind::BumpyPair;
  if (s == "handle_defect") return PhantomKind::HandleDefect;
  throw InputError("unknown phantom kind '" + s + "'");
}

inline std::string to_string(PhantomKind k) {
  switch (k) {
    case PhantomKind::SpherePair: return "sphere_pair";
    case PhantomKind::BumpyPair: return "bumpy_pair";
    case PhantomKind::HandleDefect: return "handle_defect";
  }
  return "?";
}

struct PhantomSpec {
  PhantomKind kind = PhantomKind::SpherePair;
  Index3 dims{64, 64, 64};
  double r_w = 8.0;  // voxels
  double r_g = 12.0;
  double bump_amplitude = 0.0;  // bumpy_pair only
  int bump_frequency = 3;
  std::uint64_t seed = 0;
  int gt_level = 6;  // icosphere level of the reference meshes

  void validate() const {
    for (int d : dims) {
      if (d < 4) throw InputError("phantom dims must be at least 4");
    }
    const double half = 0.5 * double(std::min({dims[0], dims[1], dims[2]}));
    if (!(r_w > 0.0)) throw InputError("r_w must be positive");
    if (!(r_w < r_g)) throw InputError("r_w must be smaller than r_g");
    const double a = kind == PhantomKind::BumpyPair ? bump_amplitude : 0.0;
    if (!(r_g + a < half)) throw InputError("r_g must stay inside the volume (r_g < min(dims)/2)");
    if (kind == PhantomKind::BumpyPair) {
      if (bump_amplitude < 0.0) throw InputError("bump amplitude must be nonnegative");
      if (!(bump_amplitude < 0.5 * (r_g - r_w))) throw InputError("bump amplitude must be below (r_g - r_w)/2");
      if (!(bump_amplitude < r_w)) throw InputError("bump amplitude must be below r_w");
      if (bump_frequency < 0) throw InputError("bump frequency must be nonnegative");
    }
    if (kind == PhantomKind::HandleDefect && !(r_g + 3.0 < half - 1.0)) {
      throw InputError("handle does not fit in the volume");
    }
    if (gt_level < 0 || gt_level > 8) throw InputError("gt level must be within [0, 8]");
  }

  Vec3 center() const { return Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1) * 0.5; }

  /// Radial bump at unit direction d (0 outside bumpy_pair).
  double bump(const Vec3& d) const {
    if (kind != PhantomKind::BumpyPair || bump_amplitude == 0.0) return 0.0;
    const double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
    const double phi = std::atan2(d.y(), d.x());
    return bump_amplitude * std::sin(bump_frequency * theta) * std::cos(bump_frequency * phi);
  }
};

struct Phantom {
  ScalarVolume mask_w, mask_g;
  TriMesh gt_wm, gt_pial, gt_mid;  // normalized coordinates of the mask grid
  double gt_thickness = 0.0;       // voxels, radial
};

namespace detail {

// Voxels of a staple-shaped 6-connected tube: two legs rising along +z from
// inside the inner ball and a bar joining them outside the outer ball.
inline std::vector<Index3> handle_voxels(const PhantomSpec& spec) {
  const Vec3 c = spec.center();
  const int j = int(std::floor(c.y()));
  const int i0 = int(std::floor(c.x())) - 3;
  const int i1 = int(std::ceil(c.x())) + 3;
  const int k0 = int(std::floor(c.z()));
  const int kb = int(std::ceil(c.z() + spec.r_g + 2.0));
  std::vector<Index3> out;
  for (int k = k0; k <= kb; ++k) {
    out.push_back({i0, j, k});
    out.push_back({i1, j, k});
  }
  for (int i = i0 + 1; i < i1; ++i) out.push_back({i, j, kb});
  return out;
}

}  // namespace detail

inline Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Vec3 c = spec.center();
  Phantom ph;
  ph.mask_w = ScalarVolume(spec.dims);
  ph.mask_g = ScalarVolume(spec.dims);
  const Index3 d = spec.dims;
  parallel_for(std::ptrdiff_t(ph.mask_w.size()), [&](std::ptrdiff_t n) {
    const int i = int(n % d[0]), j = int((n / d[0]) % d[1]), k = int(n / (std::ptrdiff_t(d[0]) * d[1]));
    const Vec3 x = Vec3(i, j, k) - c;
    const double r = x.norm();
    const double b = r > 0.0 ? spec.bump(x / r) : 0.0;
    ph.mask_w[n] = r < spec.r_w + b ? 1.0 : 0.0;
    ph.mask_g[n] = r < spec.r_g + b ? 1.0 : 0.0;
  });
  if (spec.kind == PhantomKind::HandleDefect) {
    // Present in both masks so the defect survives into the midthickness
    // level set as a genus-1 handle.
    for (const Index3& v : detail::handle_voxels(spec)) {
      ph.mask_w(v[0], v[1], v[2]) = 1.0;
      ph.mask_g(v[0], v[1], v[2]) = 1.0;
    }
  }

  const TriMesh sphere = icosphere(spec.gt_level);
  const NormalizedFrame frame(spec.dims);
  const std::size_t nv = sphere.vertices.size();
  ph.gt_wm.faces = ph.gt_pial.faces = ph.gt_mid.faces = sphere.faces;
  ph.gt_wm.vertices.resize(nv);
  ph.gt_pial.vertices.resize(nv);
  ph.gt_mid.vertices.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec3& u = sphere.vertices[v];
    const double b = spec.bump(u);
    const Vec3 w = frame.to_normalized(c + (spec.r_w + b) * u);
    const Vec3 p = frame.to_normalized(c + (spec.r_g + b) * u);
    ph.gt_wm.vertices[v] = w;
    ph.gt_pial.vertices[v] = p;
    ph.gt_mid.vertices[v] = 0.5 * (w + p);
  }
  ph.gt_thickness = spec.r_g - spec.r_w;
  return ph;
}

}  // namespace surfnn
