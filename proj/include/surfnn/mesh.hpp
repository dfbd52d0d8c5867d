#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "surfnn/common.hpp"

namespace surfnn {

/// Triangle mesh in normalized coordinates; faces are counter-clockwise when
/// seen from outside.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_faces() const { return faces.size(); }
};

/// Face areas below this are treated as degenerate.
inline constexpr double kDegenerateArea = 1e-12;

inline void validate(const TriMesh& mesh) {
  const int nv = int(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    for (int c = 0; c < 3; ++c) {
      if (t[c] < 0 || t[c] >= nv) throw InputError("face " + std::to_string(f) + " index out of range");
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw InputError("face " + std::to_string(f) + " repeats a vertex index");
    }
  }
  for (const Vec3& v : mesh.vertices) {
    if (!v.allFinite()) throw InputError("mesh contains non-finite vertex coordinates");
  }
}

/// Drops unreferenced vertices, keeping the relative order of the rest.
inline TriMesh compact(const TriMesh& mesh) {
  std::vector<int> remap(mesh.vertices.size(), -1);
  for (const Face& t : mesh.faces) {
    for (int c : t) remap[c] = 0;
  }
  TriMesh out;
  for (std::size_t v = 0; v < remap.size(); ++v) {
    if (remap[v] == 0) {
      remap[v] = int(out.vertices.size());
      out.vertices.push_back(mesh.vertices[v]);
    }
  }
  out.faces.reserve(mesh.faces.size());
  for (const Face& t : mesh.faces) out.faces.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
  return out;
}

/// Validated, compacted mesh.
inline TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces) {
  TriMesh m{std::move(vertices), std::move(faces)};
  validate(m);
  return compact(m);
}

// Unnormalized face normal (b - a) x (c - a); its length is twice the area.
inline Vec3 face_cross(const std::vector<Vec3>& vertices, const Face& t) {
  const Vec3& a = vertices[t[0]];
  return (vertices[t[1]] - a).cross(vertices[t[2]] - a);
}

inline bool is_degenerate(const Vec3& cross) { return 0.5 * cross.norm() < kDegenerateArea; }

// Adjoint of face_cross: accumulates the vertex cotangents for cotangent g.
inline void face_cross_adjoint(const std::vector<Vec3>& vertices, const Face& t, const Vec3& g,
                               std::vector<Vec3>& grad) {
  const Vec3& a = vertices[t[0]];
  const Vec3& b = vertices[t[1]];
  const Vec3& c = vertices[t[2]];
  grad[t[0]] += (b - c).cross(g);
  grad[t[1]] += (c - a).cross(g);
  grad[t[2]] += (a - b).cross(g);
}

// ---------------------------------------------------------------------------
// Adjacency

struct MeshEdge {
  int v0 = 0, v1 = 0;  // v0 < v1
  int f0 = -1, f1 = -1;
  int face_count = 0;

  bool interior() const { return face_count == 2; }
};

struct MeshAdjacency {
  std::vector<int> vertex_face_offsets;  // CSR, size V + 1
  std::vector<int> vertex_faces;
  std::vector<int> neighbor_offsets;     // CSR, size V + 1
  std::vector<int> neighbors;
  std::vector<MeshEdge> edges;
  int nonmanifold_edges = 0;
  int boundary_edges = 0;
  int interior_edges = 0;

  std::span<const int> faces_of(int v) const {
    return {vertex_faces.data() + vertex_face_offsets[v],
            std::size_t(vertex_face_offsets[v + 1] - vertex_face_offsets[v])};
  }
  std::span<const int> neighbors_of(int v) const {
    return {neighbors.data() + neighbor_offsets[v], std::size_t(neighbor_offsets[v + 1] - neighbor_offsets[v])};
  }
};

/// Edges with more than two faces are counted in `nonmanifold_edges` and keep
/// their first two faces.
inline MeshAdjacency build_adjacency(const TriMesh& mesh) {
  const int nv = int(mesh.vertices.size());
  const int nf = int(mesh.faces.size());
  MeshAdjacency adj;

  adj.vertex_face_offsets.assign(nv + 1, 0);
  for (const Face& t : mesh.faces) {
    for (int c : t) ++adj.vertex_face_offsets[c + 1];
  }
  std::partial_sum(adj.vertex_face_offsets.begin(), adj.vertex_face_offsets.end(), adj.vertex_face_offsets.begin());
  adj.vertex_faces.resize(adj.vertex_face_offsets[nv]);
  {
    std::vector<int> cursor(adj.vertex_face_offsets.begin(), adj.vertex_face_offsets.end() - 1);
    for (int f = 0; f < nf; ++f) {
      for (int c : mesh.faces[f]) adj.vertex_faces[cursor[c]++] = f;
    }
  }

  struct HalfKey {
    int lo, hi, face;
  };
  std::vector<HalfKey> keys;
  keys.reserve(std::size_t(nf) * 3);
  for (int f = 0; f < nf; ++f) {
    const Face& t = mesh.faces[f];
    for (int c = 0; c < 3; ++c) {
      const int a = t[c], b = t[(c + 1) % 3];
      keys.push_back({std::min(a, b), std::max(a, b), f});
    }
  }
  std::sort(keys.begin(), keys.end(), [](const HalfKey& x, const HalfKey& y) {
    if (x.lo != y.lo) return x.lo < y.lo;
    if (x.hi != y.hi) return x.hi < y.hi;
    return x.face < y.face;
  });
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j].lo == keys[i].lo && keys[j].hi == keys[i].hi) ++j;
    MeshEdge e;
    e.v0 = keys[i].lo;
    e.v1 = keys[i].hi;
    e.face_count = int(j - i);
    e.f0 = keys[i].face;
    if (j - i >= 2) e.f1 = keys[i + 1].face;
    if (e.face_count > 2) ++adj.nonmanifold_edges;
    if (e.face_count == 1) ++adj.boundary_edges;
    if (e.face_count == 2) ++adj.interior_edges;
    adj.edges.push_back(e);
    i = j;
  }

  adj.neighbor_offsets.assign(nv + 1, 0);
  for (const MeshEdge& e : adj.edges) {
    ++adj.neighbor_offsets[e.v0 + 1];
    ++adj.neighbor_offsets[e.v1 + 1];
  }
  std::partial_sum(adj.neighbor_offsets.begin(), adj.neighbor_offsets.end(), adj.neighbor_offsets.begin());
  adj.neighbors.resize(adj.neighbor_offsets[nv]);
  {
    std::vector<int> cursor(adj.neighbor_offsets.begin(), adj.neighbor_offsets.end() - 1);
    for (const MeshEdge& e : adj.edges) {
      adj.neighbors[cursor[e.v0]++] = e.v1;
      adj.neighbors[cursor[e.v1]++] = e.v0;
    }
  }
  for (int v = 0; v < nv; ++v) {
    std::sort(adj.neighbors.begin() + adj.neighbor_offsets[v], adj.neighbors.begin() + adj.neighbor_offsets[v + 1]);
  }
  return adj;
}

// ---------------------------------------------------------------------------
// Vertex normals

/// Per-vertex unit normals plus the length of the accumulated (unnormalized)
/// normal, which the adjoint needs.
struct VertexNormals {
  std::vector<Vec3> normals;
  std::vector<double> magnitudes;
};

/// n_v = normalize(sum of incident face cross products); faces with area
/// below kDegenerateArea are skipped.
inline VertexNormals compute_vertex_normals(const TriMesh& mesh) {
  const std::size_t nv = mesh.vertices.size();
  std::vector<Vec3> acc(nv, Vec3::Zero());
  std::vector<char> has_face(nv, 0);
  for (const Face& t : mesh.faces) {
    const Vec3 c = face_cross(mesh.vertices, t);
    if (is_degenerate(c)) continue;
    for (int v : t) {
      acc[v] += c;
      has_face[v] = 1;
    }
  }
  VertexNormals out;
  out.normals.resize(nv);
  out.magnitudes.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const double m = acc[v].norm();
    if (!has_face[v] || !(m > 0.0)) {
      throw NumericalError("vertex " + std::to_string(v) + " has no non-degenerate incident face");
    }
    out.normals[v] = acc[v] / m;
    out.magnitudes[v] = m;
  }
  return out;
}

inline std::vector<Vec3> vertex_normals(const TriMesh& mesh) { return compute_vertex_normals(mesh).normals; }

/// Adds d<cotangent, normals>/d vertices to `grad`.
inline void vertex_normals_adjoint(const TriMesh& mesh, const VertexNormals& fwd, std::span<const Vec3> cotangent,
                                   std::vector<Vec3>& grad) {
  const std::size_t nv = mesh.vertices.size();
  std::vector<Vec3> gm(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec3& n = fwd.normals[v];
    gm[v] = (cotangent[v] - n * n.dot(cotangent[v])) / fwd.magnitudes[v];
  }
  for (const Face& t : mesh.faces) {
    const Vec3 c = face_cross(mesh.vertices, t);
    if (is_degenerate(c)) continue;
    face_cross_adjoint(mesh.vertices, t, gm[t[0]] + gm[t[1]] + gm[t[2]], grad);
  }
}

// ---------------------------------------------------------------------------
// Surface sampling

// Uniform double in [0,1) from the top 53 bits; platform independent unlike
// std::uniform_real_distribution.
inline double unit_double(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

struct SurfaceSample {
  std::vector<Vec3> points;
  std::vector<int> faces;
};

/// Area-proportional face choice followed by uniform barycentric sampling.
inline SurfaceSample sample_surface(const TriMesh& mesh, int n, std::uint64_t seed) {
  if (n < 1) throw InputError("sample count must be at least 1");
  std::vector<double> cdf(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += 0.5 * face_cross(mesh.vertices, mesh.faces[f]).norm();
    cdf[f] = total;
  }
  if (!(total > 0.0)) throw InputError("cannot sample a zero-area mesh");

  std::mt19937_64 rng(seed);
  SurfaceSample out;
  out.points.reserve(n);
  out.faces.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = unit_double(rng) * total;
    std::size_t f = std::size_t(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (f >= cdf.size()) f = cdf.size() - 1;
    const double r1 = std::sqrt(unit_double(rng));
    const double r2 = unit_double(rng);
    const Face& t = mesh.faces[f];
    out.points.push_back((1.0 - r1) * mesh.vertices[t[0]] + r1 * (1.0 - r2) * mesh.vertices[t[1]] +
                         r1 * r2 * mesh.vertices[t[2]]);
    out.faces.push_back(int(f));
  }
  return out;
}

inline std::vector<Vec3> sample_points_uniform(const TriMesh& mesh, int n, std::uint64_t seed) {
  return sample_surface(mesh, n, seed).points;
}

// ---------------------------------------------------------------------------

/// 1-to-4 midpoint subdivision. New vertices (one per edge, in adjacency edge
/// order) are appended after the original ones, so the surface is unchanged.
inline TriMesh subdivide_midpoint(const TriMesh& mesh) {
  const MeshAdjacency adj = build_adjacency(mesh);
  const int nv = int(mesh.vertices.size());
  TriMesh out;
  out.vertices = mesh.vertices;
  out.vertices.reserve(nv + adj.edges.size());
  for (const MeshEdge& e : adj.edges) out.vertices.push_back(0.5 * (mesh.vertices[e.v0] + mesh.vertices[e.v1]));

  auto edge_vertex = [&](int a, int b) {
    const int lo = std::min(a, b), hi = std::max(a, b);
    // Edges are sorted by (v0, v1).
    auto it = std::lower_bound(adj.edges.begin(), adj.edges.end(), std::pair{lo, hi},
                               [](const MeshEdge& e, const std::pair<int, int>& key) {
                                 return e.v0 != key.first ? e.v0 < key.first : e.v1 < key.second;
                               });
    return nv + int(it - adj.edges.begin());
  };

  out.faces.reserve(mesh.faces.size() * 4);
  for (const Face& t : mesh.faces) {
    const int ab = edge_vertex(t[0], t[1]);
    const int bc = edge_vertex(t[1], t[2]);
    const int ca = edge_vertex(t[2], t[0]);
    out.faces.push_back({t[0], ab, ca});
    out.faces.push_back({ab, t[1], bc});
    out.faces.push_back({ca, bc, t[2]});
    out.faces.push_back({ab, bc, ca});
  }
  return out;
}

/// Loop subdivision: same connectivity as subdivide_midpoint, with vertices
/// repositioned toward the smooth limit surface. Boundary edges get plain
/// midpoints and boundary vertices stay put.
inline TriMesh subdivide_loop(const TriMesh& mesh) {
  const MeshAdjacency adj = build_adjacency(mesh);
  TriMesh out = subdivide_midpoint(mesh);
  const int nv = int(mesh.vertices.size());
  const auto& p = mesh.vertices;
  auto opposite = [&](int f, int a, int b) {
    for (int c : mesh.faces[f]) {
      if (c != a && c != b) return c;
    }
    return a;
  };
  std::vector<char> on_boundary(nv, 0);
  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    const MeshEdge& ed = adj.edges[e];
    if (!ed.interior()) {
      on_boundary[ed.v0] = on_boundary[ed.v1] = 1;
      continue;
    }
    const Vec3 wing = p[opposite(ed.f0, ed.v0, ed.v1)] + p[opposite(ed.f1, ed.v0, ed.v1)];
    out.vertices[nv + e] = 0.375 * (p[ed.v0] + p[ed.v1]) + 0.125 * wing;
  }
  for (int v = 0; v < nv; ++v) {
    const auto nb = adj.neighbors_of(v);
    if (on_boundary[v] || nb.empty()) continue;
    const double n = double(nb.size());
    const double c = 0.375 + 0.25 * std::cos(2.0 * std::numbers::pi / n);
    const double beta = (0.625 - c * c) / n;
    Vec3 sum = Vec3::Zero();
    for (int u : nb) sum += p[u];
    out.vertices[v] = (1.0 - n * beta) * p[v] + beta * sum;
  }
  return out;
}

/// Greedy edge flips that pull vertex valences toward 6. A flip is taken only
/// between nearly coplanar faces, when the new edge is not already present
/// and both new faces keep the orientation of the old pair. Vertex, edge and
/// face counts are unchanged. Returns the number of flips applied.
inline int equalize_valence(TriMesh& mesh, int max_passes = 20, double min_cos = 0.8) {
  int total = 0;
  for (int pass = 0; pass < max_passes; ++pass) {
    const MeshAdjacency adj = build_adjacency(mesh);
    std::vector<int> valence(mesh.vertices.size());
    for (std::size_t v = 0; v < valence.size(); ++v) valence[v] = int(adj.neighbors_of(int(v)).size());
    std::vector<char> touched(mesh.faces.size(), 0);
    auto third = [&](int f, int a, int b) {
      for (int c : mesh.faces[f]) {
        if (c != a && c != b) return c;
      }
      return -1;
    };
    auto connected = [&](int c, int d) {
      const auto nb = adj.neighbors_of(c);
      return std::find(nb.begin(), nb.end(), d) != nb.end();
    };
    auto dev = [](int val) { return (val - 6) * (val - 6); };
    int flips = 0;
    for (const MeshEdge& e : adj.edges) {
      if (!e.interior() || touched[e.f0] || touched[e.f1]) continue;
      // Orient so that f0 holds a -> b.
      int a = e.v0, b = e.v1, f0 = e.f0, f1 = e.f1;
      const Face& t0 = mesh.faces[f0];
      const bool forward = (t0[0] == a && t0[1] == b) || (t0[1] == a && t0[2] == b) || (t0[2] == a && t0[0] == b);
      if (!forward) std::swap(a, b);
      const int c = third(f0, a, b), d = third(f1, a, b);
      if (c < 0 || d < 0 || c == d || connected(c, d)) continue;
      if (valence[a] <= 3 || valence[b] <= 3) continue;
      const int before = dev(valence[a]) + dev(valence[b]) + dev(valence[c]) + dev(valence[d]);
      const int after = dev(valence[a] - 1) + dev(valence[b] - 1) + dev(valence[c] + 1) + dev(valence[d] + 1);
      if (after >= before) continue;
      const auto& p = mesh.vertices;
      const Vec3 n0 = (p[b] - p[a]).cross(p[c] - p[a]), n1 = (p[a] - p[b]).cross(p[d] - p[b]);
      const Vec3 m0 = (p[d] - p[a]).cross(p[c] - p[a]), m1 = (p[c] - p[b]).cross(p[d] - p[b]);
      if (n0.norm() == 0.0 || n1.norm() == 0.0 || m0.norm() == 0.0 || m1.norm() == 0.0) continue;
      const Vec3 avg = (n0.normalized() + n1.normalized()).normalized();
      if (n0.normalized().dot(n1.normalized()) < min_cos) continue;
      if (m0.normalized().dot(avg) < min_cos || m1.normalized().dot(avg) < min_cos) continue;
      mesh.faces[f0] = {a, d, c};
      mesh.faces[f1] = {b, c, d};
      touched[f0] = touched[f1] = 1;
      --valence[a];
      --valence[b];
      ++valence[c];
      ++valence[d];
      ++flips;
    }
    total += flips;
    if (flips == 0) break;
  }
  return total;
}

/// Taubin lambda|mu smoothing with uniform Laplacian weights; shrinks far
/// less than plain Laplacian smoothing. Connectivity is unchanged.
inline TriMesh taubin_smooth(const TriMesh& mesh, int iterations, double lambda = 0.5, double mu = -0.53) {
  TriMesh out = mesh;
  if (iterations <= 0) return out;
  const MeshAdjacency adj = build_adjacency(mesh);
  std::vector<Vec3> next(out.vertices.size());
  auto pass = [&](double w) {
    for (std::size_t v = 0; v < out.vertices.size(); ++v) {
      const auto nb = adj.neighbors_of(int(v));
      if (nb.empty()) {
        next[v] = out.vertices[v];
        continue;
      }
      Vec3 c = Vec3::Zero();
      for (int u : nb) c += out.vertices[u];
      c /= double(nb.size());
      next[v] = out.vertices[v] + w * (c - out.vertices[v]);
    }
    out.vertices.swap(next);
  };
  for (int i = 0; i < iterations; ++i) {
    pass(lambda);
    pass(mu);
  }
  return out;
}

inline double total_area(const TriMesh& mesh) {
  double a = 0.0;
  for (const Face& t : mesh.faces) a += 0.5 * face_cross(mesh.vertices, t).norm();
  return a;
}

}  // namespace surfnn
