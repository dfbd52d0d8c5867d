#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace surfnn;

namespace {

// Two triangles forming a unit square in z = 0.
TriMesh square() { return {{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)}, {{0, 1, 2}, {0, 2, 3}}}; }

void expect_connectivity_equal(const TriMesh& a, const TriMesh& b) {
  ASSERT_EQ(a.vertices.size(), b.vertices.size());
  ASSERT_EQ(a.faces.size(), b.faces.size());
  for (std::size_t f = 0; f < a.faces.size(); ++f) ASSERT_EQ(a.faces[f], b.faces[f]);
}

}  // namespace

TEST(Adjacency, CountsOnClosedAndOpenMeshes) {
  const TriMesh ico = icosphere(0);
  const MeshAdjacency a = build_adjacency(ico);
  EXPECT_EQ(a.edges.size(), 30u);
  EXPECT_EQ(a.interior_edges, 30);
  EXPECT_EQ(a.boundary_edges, 0);
  for (int v = 0; v < 12; ++v) {
    EXPECT_EQ(a.neighbors_of(v).size(), 5u);
    EXPECT_EQ(a.faces_of(v).size(), 5u);
  }
  const MeshAdjacency s = build_adjacency(square());
  EXPECT_EQ(s.edges.size(), 5u);
  EXPECT_EQ(s.boundary_edges, 4);
  EXPECT_EQ(s.interior_edges, 1);
}

TEST(Adjacency, NonManifoldEdgeIsCounted) {
  TriMesh m = square();
  m.vertices.push_back(Vec3(0.5, 0.5, 1.0));
  m.faces.push_back({0, 2, 4});
  EXPECT_EQ(build_adjacency(m).nonmanifold_edges, 1);
}

TEST(Validate, RejectsBadFaces) {
  EXPECT_THROW(make_mesh({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 1, 3}}), InputError);
  EXPECT_THROW(make_mesh({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 1, 1}}), InputError);
  const TriMesh m = make_mesh({Vec3::Zero(), Vec3::Ones(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 2, 3}});
  EXPECT_EQ(m.vertices.size(), 3u);
  EXPECT_EQ(m.faces[0], (Face{0, 1, 2}));
}

TEST(Normals, SphereNormalsAreRadial) {
  const TriMesh m = icosphere(3);
  const auto n = vertex_normals(m);
  for (std::size_t v = 0; v < m.vertices.size(); ++v) EXPECT_GT(n[v].dot(m.vertices[v].normalized()), 0.999);
}

TEST(Normals, AdjointMatchesFiniteDifferences) {
  TriMesh m = icosphere(1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Vec3& v : m.vertices) v += 0.05 * Vec3(g(rng), g(rng), g(rng));
  std::vector<Vec3> w(m.vertices.size());
  for (Vec3& x : w) x = Vec3(g(rng), g(rng), g(rng));
  auto objective = [&](const TriMesh& mm) {
    const auto n = vertex_normals(mm);
    double s = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) s += w[i].dot(n[i]);
    return s;
  };
  std::vector<Vec3> grad(m.vertices.size(), Vec3::Zero());
  vertex_normals_adjoint(m, compute_vertex_normals(m), w, grad);
  for (int v : {0, 5, 17, 33}) {
    for (int a = 0; a < 3; ++a) {
      const double fd = oracle::central_difference(
          [&](double x) {
            TriMesh p = m;
            p.vertices[v][a] = x;
            return objective(p);
          },
          m.vertices[v][a], 1e-6);
      EXPECT_NEAR(grad[v][a], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Normals, IsolatedVertexThrows) {
  TriMesh m = square();
  m.vertices.push_back(Vec3(5, 5, 5));
  EXPECT_THROW(compute_vertex_normals(m), NumericalError);
}

TEST(Sampling, PointsLieOnTheirFacesAndAreDeterministic) {
  const TriMesh m = icosphere(2);
  const SurfaceSample s = sample_surface(m, 500, 9);
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const Face& t = m.faces[s.faces[i]];
    const Vec3 &a = m.vertices[t[0]], &b = m.vertices[t[1]], &c = m.vertices[t[2]];
    const Vec3 n = (b - a).cross(c - a);
    EXPECT_NEAR(n.dot(s.points[i] - a), 0.0, 1e-12);
    // Barycentric coordinates are all nonnegative.
    for (int e = 0; e < 3; ++e) {
      const Vec3& p0 = m.vertices[t[e]];
      const Vec3& p1 = m.vertices[t[(e + 1) % 3]];
      EXPECT_GE((p1 - p0).cross(s.points[i] - p0).dot(n), -1e-12);
    }
  }
  const auto again = sample_points_uniform(m, 500, 9);
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i], s.points[i]);
  const auto other = sample_points_uniform(m, 500, 10);
  EXPECT_NE(other[0], s.points[0]);
}

TEST(Sampling, FaceFrequencyFollowsArea) {
  TriMesh m{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(3, 0, 0), Vec3(0, 3, 0)}, {{0, 1, 2}, {1, 3, 4}}};
  // Areas 0.5 and 4.0 (second triangle is (1,0),(3,0),(0,3)).
  const double a1 = 0.5 * face_cross(m.vertices, m.faces[1]).norm();
  const SurfaceSample s = sample_surface(m, 20000, 1);
  int first = 0;
  for (int f : s.faces) first += f == 0;
  EXPECT_NEAR(double(first) / 20000.0, 0.5 / (0.5 + a1), 0.01);
}

TEST(Subdivision, MidpointCountsAndSurfacePreserved) {
  const TriMesh m = icosphere(1);
  const TriMesh s = subdivide_midpoint(m);
  const MeshAdjacency a = build_adjacency(m);
  EXPECT_EQ(s.vertices.size(), m.vertices.size() + a.edges.size());
  EXPECT_EQ(s.faces.size(), 4 * m.faces.size());
  EXPECT_EQ(topology_check(s).euler_characteristic, 2);
  EXPECT_NEAR(total_area(s), total_area(m), 1e-12);
}

TEST(Subdivision, LoopOnTheIcosahedron) {
  const TriMesh m = icosphere(0);
  const TriMesh s = subdivide_loop(m);
  EXPECT_EQ(s.vertices.size(), 42u);
  EXPECT_EQ(s.faces.size(), 80u);
  EXPECT_TRUE(topology_check(s).is_spherical());
  // Valence 5 everywhere: beta = (0.625 - c^2) / 5 with c = 0.375 + 0.25 cos(2 pi / 5).
  const double c = 0.375 + 0.25 * std::cos(2.0 * M_PI / 5.0);
  const double beta = (0.625 - c * c) / 5.0;
  const MeshAdjacency adj = build_adjacency(m);
  Vec3 expect = (1.0 - 5.0 * beta) * m.vertices[0];
  for (int n : adj.neighbors_of(0)) expect += beta * m.vertices[n];
  EXPECT_NEAR((s.vertices[0] - expect).norm(), 0.0, 1e-12);
  // Edge points: 3/8 of the endpoints plus 1/8 of the two opposite vertices.
  const MeshEdge& e = adj.edges[0];
  auto third = [&](int f) {
    for (int v : m.faces[f]) if (v != e.v0 && v != e.v1) return v;
    return -1;
  };
  const Vec3 ep = 0.375 * (m.vertices[e.v0] + m.vertices[e.v1]) +
                  0.125 * (m.vertices[third(e.f0)] + m.vertices[third(e.f1)]);
  EXPECT_NEAR((s.vertices[12] - ep).norm(), 0.0, 1e-12);
}

TEST(Subdivision, LoopKeepsBoundaryVerticesFixed) {
  const TriMesh m = square();
  const TriMesh s = subdivide_loop(m);
  for (int v = 0; v < 4; ++v) EXPECT_EQ(s.vertices[v], m.vertices[v]);
  EXPECT_EQ(s.faces.size(), 8u);
}

TEST(EqualizeValence, PreservesCountsAndTopology) {
  const int n = 24;
  ScalarVolume f({n, n, n});
  const double c = 0.5 * (n - 1);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) f(i, j, k) = (Vec3(i, j, k) - Vec3(c, c, c)).norm() - 7.3;
  TriMesh m = marching_cubes(f);
  const TopologyReport before = topology_check(m);
  auto irregularity = [](const TriMesh& mm) {
    const MeshAdjacency a = build_adjacency(mm);
    double s = 0.0;
    for (std::size_t v = 0; v < mm.vertices.size(); ++v) {
      const double d = double(a.neighbors_of(int(v)).size()) - 6.0;
      s += d * d;
    }
    return s;
  };
  const double irr0 = irregularity(m);
  const int flips = equalize_valence(m);
  EXPECT_GT(flips, 0);
  EXPECT_LT(irregularity(m), irr0);
  const TopologyReport after = topology_check(m);
  EXPECT_EQ(after.num_vertices, before.num_vertices);
  EXPECT_EQ(after.num_edges, before.num_edges);
  EXPECT_EQ(after.num_faces, before.num_faces);
  EXPECT_TRUE(after.is_spherical());
  // Orientation stays consistent: signed volume keeps its sign.
  double vol = 0.0;
  for (const Face& t : m.faces) vol += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]]));
  EXPECT_GT(vol, 0.0);
}

TEST(TaubinSmooth, KeepsConnectivityAndRoughlyTheShape) {
  TriMesh m = icosphere(3);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.02);
  for (Vec3& v : m.vertices) v += Vec3(g(rng), g(rng), g(rng));
  const TriMesh s = taubin_smooth(m, 20);
  expect_connectivity_equal(s, m);
  double dev0 = 0.0, dev1 = 0.0;
  for (std::size_t v = 0; v < m.vertices.size(); ++v) {
    dev0 += std::abs(m.vertices[v].norm() - 1.0);
    dev1 += std::abs(s.vertices[v].norm() - 1.0);
  }
  EXPECT_LT(dev1, dev0);
  EXPECT_NEAR(total_area(s), 4.0 * M_PI, 0.2);
  const TriMesh same = taubin_smooth(m, 0);
  for (std::size_t v = 0; v < m.vertices.size(); ++v) EXPECT_EQ(same.vertices[v], m.vertices[v]);
}
