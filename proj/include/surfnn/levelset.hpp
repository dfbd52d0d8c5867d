#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/mesh.hpp"
#include "surfnn/volume.hpp"

namespace surfnn {

/// Voxelwise sum of two signed distance fields; its zero level lies halfway
/// between the two zero levels.
inline ScalarVolume midthickness_level_set(const ScalarVolume& sdf_w, const ScalarVolume& sdf_g) {
  if (!sdf_w.same_shape(sdf_g)) throw InputError("level set inputs differ in dims or spacing");
  ScalarVolume out(sdf_w.dims(), sdf_w.spacing());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sdf_w[i] + sdf_g[i];
  return out;
}

// ---------------------------------------------------------------------------
// Marching cubes

namespace mc {

// Corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1). Edge 4a + m
// runs along axis a from the m-th corner (in increasing order) with bit a
// clear.
struct CubeEdge {
  int c0, c1, axis;
};

inline const std::array<CubeEdge, 12>& cube_edges() {
  static const std::array<CubeEdge, 12> edges = [] {
    std::array<CubeEdge, 12> e{};
    for (int a = 0; a < 3; ++a) {
      int m = 0;
      for (int c = 0; c < 8; ++c) {
        if (c & (1 << a)) continue;
        e[4 * a + m++] = {c, c | (1 << a), a};
      }
    }
    return e;
  }();
  return edges;
}

/// Per case: closed, outward-oriented edge loops.
using CaseLoops = std::vector<std::vector<int>>;

// The 256-entry case table. Each cube face is cut into segments on its own:
// faces with two crossings get one segment, ambiguous faces (inside corners on
// a diagonal) cut off each inside corner separately. Both neighbours of a face
// therefore agree on its segments, which makes the output watertight. Segments
// are oriented so the inside region lies to the left when the face is seen
// from outside the cube; chaining them gives loops whose fan triangles face
// the region above the iso value.
// Cube faces (0..5, as 2 axis + side) containing an edge.
inline std::array<int, 2> edge_faces(int e) {
  const CubeEdge& ce = cube_edges()[e];
  std::array<int, 2> f{};
  int n = 0;
  for (int b = 0; b < 3; ++b) {
    if (b != ce.axis) f[n++] = 2 * b + ((ce.c0 >> b) & 1);
  }
  return f;
}

// Loops are triangulated as fans from their first vertex. A loop can hold
// both segments of an ambiguous face; a fan chord across that face could
// then coincide with the neighbour cube's chord and give an edge four faces.
// Rotates the loop to start at a vertex with no other loop vertex on either
// of its faces (one exists in every case).
inline std::vector<int> fan_root_first(std::vector<int> loop) {
  const std::size_t n = loop.size();
  if (n <= 3) return loop;
  for (std::size_t r = 0; r < n; ++r) {
    const auto fr = edge_faces(loop[r]);
    bool safe = true;
    for (std::size_t k = 2; k + 1 < n && safe; ++k) {
      const auto fv = edge_faces(loop[(r + k) % n]);
      for (int a : fr) safe = safe && a != fv[0] && a != fv[1];
    }
    if (safe) {
      std::rotate(loop.begin(), loop.begin() + std::ptrdiff_t(r), loop.end());
      return loop;
    }
  }
  throw std::logic_error("marching cubes table: no fan root");
}

inline CaseLoops build_case(int config) {
  const auto& edges = cube_edges();
  auto corner_pos = [](int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); };
  auto inside = [&](int c) { return (config >> c) & 1; };
  auto edge_between = [&](int a, int b) {
    for (int e = 0; e < 12; ++e) {
      if ((edges[e].c0 == a && edges[e].c1 == b) || (edges[e].c0 == b && edges[e].c1 == a)) return e;
    }
    throw std::logic_error("corners are not adjacent");
  };
  auto mid = [&](int e) -> Vec3 { return 0.5 * (corner_pos(edges[e].c0) + corner_pos(edges[e].c1)); };

  std::array<int, 12> next;
  next.fill(-1);
  std::array<int, 12> incoming{};

  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      Vec3 face_normal = Vec3::Zero();
      face_normal[a] = side ? 1.0 : -1.0;
      std::array<int, 4> ring;
      const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
      for (int r = 0; r < 4; ++r) ring[r] = (side << a) | (uv[r][0] << b) | (uv[r][1] << c);

      struct Segment {
        int e0, e1;
        Vec3 inside_ref;
      };
      std::vector<Segment> segments;
      std::vector<int> crossing;
      for (int r = 0; r < 4; ++r) {
        if (inside(ring[r]) != inside(ring[(r + 1) % 4])) crossing.push_back(edge_between(ring[r], ring[(r + 1) % 4]));
      }
      if (crossing.size() == 2) {
        Vec3 ref = Vec3::Zero();
        int count = 0;
        for (int r = 0; r < 4; ++r) {
          if (inside(ring[r])) {
            ref += corner_pos(ring[r]);
            ++count;
          }
        }
        segments.push_back({crossing[0], crossing[1], ref / count});
      } else if (crossing.size() == 4) {
        for (int r = 0; r < 4; ++r) {
          if (!inside(ring[r])) continue;
          const int prev = ring[(r + 3) % 4], nxt = ring[(r + 1) % 4];
          segments.push_back({edge_between(prev, ring[r]), edge_between(ring[r], nxt), corner_pos(ring[r])});
        }
      }
      for (const Segment& s : segments) {
        const Vec3 A = mid(s.e0), B = mid(s.e1);
        const bool forward = (B - A).cross(face_normal).dot(s.inside_ref - A) > 0.0;
        const int from = forward ? s.e0 : s.e1;
        const int to = forward ? s.e1 : s.e0;
        if (next[from] != -1) throw std::logic_error("marching cubes table: edge has two successors");
        next[from] = to;
        ++incoming[to];
      }
    }
  }

  CaseLoops loops;
  std::array<bool, 12> used{};
  for (int e = 0; e < 12; ++e) {
    if (next[e] == -1 || used[e]) continue;
    if (incoming[e] != 1) throw std::logic_error("marching cubes table: open loop");
    std::vector<int> loop;
    int cur = e;
    while (!used[cur]) {
      used[cur] = true;
      loop.push_back(cur);
      cur = next[cur];
      if (cur < 0) throw std::logic_error("marching cubes table: open loop");
    }
    if (cur != e) throw std::logic_error("marching cubes table: loop does not close");
    loops.push_back(fan_root_first(std::move(loop)));
  }
  return loops;
}

inline const std::array<CaseLoops, 256>& case_table() {
  static const std::array<CaseLoops, 256> table = [] {
    std::array<CaseLoops, 256> t;
    for (int config = 0; config < 256; ++config) t[config] = build_case(config);
    return t;
  }();
  return table;
}

}  // namespace mc

/// Extracts the iso surface of `field`. Corners with value < iso are inside;
/// triangles face toward larger values. Vertices are linear edge
/// interpolants in normalized coordinates, one per crossed grid edge.
inline TriMesh marching_cubes(const ScalarVolume& field, double iso = 0.0) {
  const auto [lo_it, hi_it] = std::minmax_element(field.values().begin(), field.values().end());
  if (field.empty() || !(*lo_it < iso) || !(*hi_it >= iso)) throw InputError("empty isosurface");
  const Index3 d = field.dims();
  for (int a = 0; a < 3; ++a) {
    if (d[a] < 2) throw InputError("marching cubes needs at least 2 samples per axis");
  }
  const NormalizedFrame frame(field);
  const auto& edges = mc::cube_edges();
  const auto& table = mc::case_table();

  TriMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  edge_vertex.reserve(4096);

  for (int k = 0; k + 1 < d[2]; ++k) {
    for (int j = 0; j + 1 < d[1]; ++j) {
      for (int i = 0; i + 1 < d[0]; ++i) {
        std::array<double, 8> val;
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          val[c] = field(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          if (val[c] < iso) config |= 1 << c;
        }
        if (config == 0 || config == 255) continue;

        std::array<int, 12> vid;
        vid.fill(-1);
        for (int e = 0; e < 12; ++e) {
          const auto& ce = edges[e];
          if (((config >> ce.c0) & 1) == ((config >> ce.c1) & 1)) continue;
          const int gi = i + (ce.c0 & 1), gj = j + ((ce.c0 >> 1) & 1), gk = k + ((ce.c0 >> 2) & 1);
          const std::uint64_t key = std::uint64_t(field.index(gi, gj, gk)) * 3 + std::uint64_t(ce.axis);
          auto [it, inserted] = edge_vertex.try_emplace(key, int(mesh.vertices.size()));
          if (inserted) {
            const double t = (iso - val[ce.c0]) / (val[ce.c1] - val[ce.c0]);
            Vec3 g(gi, gj, gk);
            g[ce.axis] += t;
            mesh.vertices.push_back(frame.to_normalized(g));
          }
          vid[e] = it->second;
        }
        for (const auto& loop : table[config]) {
          for (std::size_t t = 1; t + 1 < loop.size(); ++t) {
            mesh.faces.push_back({vid[loop[0]], vid[loop[t]], vid[loop[t + 1]]});
          }
        }
      }
    }
  }
  return mesh;
}

/// Moves values within `margin` of `iso` to iso +/- margin, keeping their
/// inside/outside class. Keeps marching cubes vertices off grid nodes, which
/// would otherwise produce zero-area triangles.
inline ScalarVolume separate_from_iso(const ScalarVolume& field, double iso = 0.0, double margin = 1e-3) {
  ScalarVolume out = field;
  for (double& v : out.values()) {
    if (v < iso && v > iso - margin) v = iso - margin;
    if (v >= iso && v < iso + margin) v = iso + margin;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Topology

struct TopologyReport {
  int num_vertices = 0;
  int num_edges = 0;
  int num_faces = 0;
  int num_components = 0;
  int euler_characteristic = 0;
  std::optional<int> genus;  // only for one closed manifold component
  bool is_closed_manifold = false;
  int num_nonmanifold_edges = 0;
  int num_boundary_edges = 0;

  bool is_spherical() const { return genus.has_value() && *genus == 0; }
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Component label (0-based, ordered by lowest vertex) per vertex.
inline std::vector<int> vertex_components(const TriMesh& mesh, int* count) {
  UnionFind uf(int(mesh.vertices.size()));
  for (const Face& t : mesh.faces) {
    uf.unite(t[0], t[1]);
    uf.unite(t[1], t[2]);
  }
  std::vector<int> label(mesh.vertices.size(), -1);
  std::vector<int> root_label(mesh.vertices.size(), -1);
  int n = 0;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const int r = uf.find(int(v));
    if (root_label[r] < 0) root_label[r] = n++;
    label[v] = root_label[r];
  }
  if (count) *count = n;
  return label;
}

}  // namespace detail

inline TopologyReport topology_check(const TriMesh& mesh) {
  TopologyReport rep;
  const MeshAdjacency adj = build_adjacency(mesh);
  rep.num_vertices = int(mesh.vertices.size());
  rep.num_edges = int(adj.edges.size());
  rep.num_faces = int(mesh.faces.size());
  rep.euler_characteristic = rep.num_vertices - rep.num_edges + rep.num_faces;
  detail::vertex_components(mesh, &rep.num_components);
  rep.num_nonmanifold_edges = adj.nonmanifold_edges;
  rep.num_boundary_edges = adj.boundary_edges;
  rep.is_closed_manifold = !mesh.faces.empty() && adj.nonmanifold_edges == 0 && adj.boundary_edges == 0;
  if (rep.num_components == 1 && rep.is_closed_manifold) rep.genus = (2 - rep.euler_characteristic) / 2;
  return rep;
}

/// The connected component with the most faces (ties: lowest label).
inline TriMesh largest_component(const TriMesh& mesh) {
  int count = 0;
  const std::vector<int> label = detail::vertex_components(mesh, &count);
  if (count <= 1) return mesh;
  std::vector<int> faces_per(count, 0);
  for (const Face& t : mesh.faces) ++faces_per[label[t[0]]];
  const int keep = int(std::max_element(faces_per.begin(), faces_per.end()) - faces_per.begin());
  TriMesh out;
  out.vertices = mesh.vertices;
  for (const Face& t : mesh.faces) {
    if (label[t[0]] == keep) out.faces.push_back(t);
  }
  return compact(out);
}

struct TopologyRepairResult {
  ScalarVolume field;
  TriMesh mesh;
  int rounds = 0;  // smoothing passes applied
};

/// Extract, keep the largest component, and while the result is not a single
/// closed genus-0 surface, smooth the field with a 3^3 Gaussian (sigma 0.5
/// voxel) and try again. Throws TopologyError when max_rounds smoothing passes
/// do not produce spherical topology. The returned mesh is extracted from
/// separate_from_iso(field, iso, margin); the returned field is the input
/// after `rounds` smoothing passes.
inline TopologyRepairResult topology_repair(const ScalarVolume& field, int max_rounds, double iso = 0.0,
                                            double margin = 1e-3) {
  ScalarVolume current = field;
  for (int round = 0;; ++round) {
    TriMesh mesh = largest_component(marching_cubes(separate_from_iso(current, iso, margin), iso));
    const TopologyReport rep = topology_check(mesh);
    if (rep.is_spherical()) return {std::move(current), std::move(mesh), round};
    if (round >= max_rounds) break;
    current = gaussian_smooth(current, 0.5, 1);
    const auto [lo, hi] = std::minmax_element(current.values().begin(), current.values().end());
    if (!(*lo < iso) || !(*hi >= iso)) break;
  }
  throw TopologyError("topology repair failed after max_rounds (" + std::to_string(max_rounds) + ")");
}

}  // namespace surfnn
