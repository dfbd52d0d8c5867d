#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace surfnn;

TEST(Edt, MatchesBruteForceOnRandomMasks) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const ScalarVolume mask = oracle::random_mask({9, 7, 8}, 0.2 + 0.06 * trial, rng);
    const ScalarVolume fast = edt_squared(mask);
    const ScalarVolume slow = oracle::brute_force_edt_squared(mask);
    for (std::size_t i = 0; i < mask.size(); ++i) ASSERT_NEAR(fast[i], slow[i], 1e-9) << "trial " << trial;
  }
}

TEST(Edt, AnisotropicSpacing) {
  std::mt19937_64 rng(12);
  ScalarVolume mask = oracle::random_mask({8, 9, 6}, 0.1, rng);
  mask = ScalarVolume(mask.dims(), {0.7, 1.3, 2.1}, mask.values());
  const ScalarVolume fast = edt_squared(mask);
  const ScalarVolume slow = oracle::brute_force_edt_squared(mask);
  for (std::size_t i = 0; i < mask.size(); ++i) ASSERT_NEAR(fast[i], slow[i], 1e-9);
}

TEST(Edt, SingleVoxel) {
  ScalarVolume mask({5, 5, 5});
  mask(2, 2, 2) = 1.0;
  const ScalarVolume d = edt_squared(mask);
  EXPECT_DOUBLE_EQ(d(2, 2, 2), 1.0);
  EXPECT_DOUBLE_EQ(d(0, 0, 0), 12.0);
  EXPECT_DOUBLE_EQ(d(2, 2, 4), 4.0);
}

TEST(Edt, DegenerateMaskThrows) {
  ScalarVolume empty({4, 4, 4});
  EXPECT_THROW(edt_squared(empty), InputError);
  ScalarVolume full({4, 4, 4});
  full.fill(1.0);
  EXPECT_THROW(signed_distance(full), InputError);
}

TEST(SignedDistance, SignConvention) {
  ScalarVolume mask({10, 10, 10});
  for (int k = 3; k < 7; ++k)
    for (int j = 3; j < 7; ++j)
      for (int i = 3; i < 7; ++i) mask(i, j, k) = 1.0;
  const ScalarVolume sdf = signed_distance(mask);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (is_foreground(mask[i])) EXPECT_LT(sdf[i], 0.0);
    else EXPECT_GT(sdf[i], 0.0);
  }
  EXPECT_DOUBLE_EQ(sdf(4, 4, 4), -2.0);
  EXPECT_DOUBLE_EQ(sdf(0, 4, 4), 3.0);
}

TEST(Trilinear, ReproducesLinearFieldsExactly) {
  const Index3 d{5, 6, 7};
  const NormalizedFrame frame(d);
  ScalarVolume f(d);
  const Vec3 a(0.3, -1.2, 2.0);
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) f(i, j, k) = 0.5 + a.dot(frame.node(i, j, k));
  std::mt19937_64 rng(3);
  for (const Vec3& p : oracle::random_points(200, rng)) {
    EXPECT_NEAR(sample(f, p), 0.5 + a.dot(p), 1e-12);
    const Vec3 g = sample_jacobian(f, make_stencil(d, p));
    EXPECT_NEAR((g - a).norm(), 0.0, 1e-11);
  }
}

TEST(Trilinear, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  VectorVolume f({6, 6, 6});
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = Vec3(g(rng), g(rng), g(rng));
  for (const Vec3& p : oracle::random_points(50, rng, -0.9, 0.9)) {
    const Mat3 J = sample_jacobian(f, make_stencil(f.dims(), p));
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = 1e-6;
      const Vec3 fd = (sample(f, Vec3(p + e)) - sample(f, Vec3(p - e))) / 2e-6;
      EXPECT_NEAR((J.col(c) - fd).norm(), 0.0, 1e-6);
    }
  }
}

TEST(Trilinear, ScatterIsTheAdjointOfSampling) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  ScalarVolume f({5, 4, 6});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = g(rng);
  const auto pts = oracle::random_points(40, rng, -1.2, 1.2);
  std::vector<double> w(pts.size());
  for (double& x : w) x = g(rng);
  // <S f, w> == <f, S^T w>
  double lhs = 0.0;
  ScalarVolume adj(f.dims());
  for (std::size_t n = 0; n < pts.size(); ++n) {
    const TrilinearStencil s = make_stencil(f.dims(), pts[n]);
    lhs += sample(f, s) * w[n];
    scatter_adjoint(adj, s, w[n]);
  }
  double rhs = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) rhs += f[i] * adj[i];
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST(Trilinear, ClampsOutsideTheVolume) {
  ScalarVolume f({3, 3, 3});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = double(i);
  EXPECT_DOUBLE_EQ(sample(f, Vec3(-5, -5, -5)), f(0, 0, 0));
  EXPECT_DOUBLE_EQ(sample(f, Vec3(3, 3, 3)), f(2, 2, 2));
  const Vec3 g = sample_jacobian(f, make_stencil(f.dims(), Vec3(-2, 0.1, 0.1)));
  EXPECT_DOUBLE_EQ(g.x(), 0.0);
}

TEST(Trilinear, InterpolatesGridNodes) {
  std::mt19937_64 rng(6);
  ScalarVolume f({4, 5, 3});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = double(rng() % 100);
  const NormalizedFrame frame(f);
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 4; ++i) EXPECT_NEAR(sample(f, frame.node(i, j, k)), f(i, j, k), 1e-12);
}

TEST(Frame, RoundTripsAndCorners) {
  const NormalizedFrame frame({64, 32, 17}, {1.0, 2.0, 0.5});
  EXPECT_NEAR((frame.node(0, 0, 0) - Vec3(-1, -1, -1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((frame.node(63, 31, 16) - Vec3(1, 1, 1)).norm(), 0.0, 1e-15);
  const Vec3 g(12.5, 3.25, 9.0);
  EXPECT_NEAR((frame.to_grid(frame.to_normalized(g)) - g).norm(), 0.0, 1e-12);
  EXPECT_NEAR((frame.to_physical(frame.to_normalized(g)) - Vec3(12.5, 6.5, 4.5)).norm(), 0.0, 1e-12);
}

TEST(Grid, RejectsBadShapesAndValues) {
  EXPECT_THROW(ScalarVolume({0, 3, 3}), InputError);
  EXPECT_THROW(ScalarVolume({3, 3, 3}, {1.0, -1.0, 1.0}), InputError);
  EXPECT_THROW(ScalarVolume({2, 2, 2}, {1, 1, 1}, std::vector<double>(7, 0.0)), InputError);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::nan("");
  EXPECT_THROW(ScalarVolume({2, 2, 2}, {1, 1, 1}, bad), InputError);
}

TEST(GaussianSmooth, PreservesConstantsAndSymmetry) {
  ScalarVolume c({6, 5, 4});
  c.fill(2.5);
  const ScalarVolume s = gaussian_smooth(c, 1.0, 2);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], 2.5, 1e-12);

  ScalarVolume impulse({9, 9, 9});
  impulse(4, 4, 4) = 1.0;
  const ScalarVolume b = gaussian_smooth(impulse, 0.8, 2);
  double total = 0.0;
  for (double v : b.data()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(b(3, 4, 4), b(5, 4, 4), 1e-15);
  EXPECT_NEAR(b(4, 3, 4), b(4, 4, 5), 1e-15);
}

TEST(NormalizeIntensity, MapsToUnitRange) {
  ScalarVolume v({2, 2, 2}, {1, 1, 1}, {3, 5, 7, 9, 3, 3, 4, 11});
  const ScalarVolume n = normalize_intensity(v);
  EXPECT_DOUBLE_EQ(n[0], 0.0);
  EXPECT_DOUBLE_EQ(n[7], 1.0);
  EXPECT_DOUBLE_EQ(n[2], 0.5);
  ScalarVolume flat({2, 2, 2});
  EXPECT_THROW(normalize_intensity(flat), InputError);
}
