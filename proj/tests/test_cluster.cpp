#include <gtest/gtest.h>

#include "flim/cluster.hpp"
#include "oracles.hpp"

using namespace flim;

TEST(KMeans, TwoWellSeparatedPairs) {
  RowMatrix pts(4, 2, {0.0f, 0.0f, 0.1f, 0.0f, 10.0f, 0.0f, 10.1f, 0.0f});
  const auto res = minibatch_kmeans(pts, 2, 7);
  // Exhaustive oracle over all 2-partitions.
  const auto oracle = oracles::exhaustive_kmeans(pts, 2);
  ASSERT_EQ(res.k(), 2);
  EXPECT_NEAR(res.inertia, oracle.inertia, 1e-6);
  std::vector<std::pair<float, float>> c{{res.centers(0, 0), res.centers(0, 1)}, {res.centers(1, 0), res.centers(1, 1)}};
  std::sort(c.begin(), c.end());
  EXPECT_NEAR(c[0].first, 0.05f, 1e-5);
  EXPECT_NEAR(c[1].first, 10.05f, 1e-5);
  EXPECT_NEAR(c[0].second, 0.0f, 1e-6);
  EXPECT_EQ(res.assignment[0], res.assignment[1]);
  EXPECT_NE(res.assignment[1], res.assignment[2]);
}

TEST(KMeans, SingleClusterIsGrandMean) {
  Rng rng(3);
  RowMatrix pts(37, 5);
  for (auto& v : pts.values) v = static_cast<float>(rng.uniform(-3, 3));
  const auto res = minibatch_kmeans(pts, 1, 1);
  for (std::size_t j = 0; j < 5; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 37; ++i) mean += pts(i, j);
    EXPECT_NEAR(res.centers(0, j), mean / 37.0, 1e-5);
  }
}

TEST(KMeans, FewerDistinctPointsThanKIsDegenerate) {
  RowMatrix pts(3, 2, {1.0f, 2.0f, 1.0f, 2.0f, 1.0f, 2.0f});
  const auto res = minibatch_kmeans(pts, 2, 0);
  EXPECT_TRUE(res.degenerate);
  ASSERT_EQ(res.k(), 1);
  EXPECT_EQ(res.centers(0, 0), 1.0f);
  EXPECT_EQ(res.inertia, 0.0);
}

TEST(KMeans, ArgumentErrors) {
  RowMatrix pts(2, 2, {0, 0, 1, 1});
  EXPECT_THROW(minibatch_kmeans(pts, 0, 0), FormatError);
  EXPECT_THROW(minibatch_kmeans(RowMatrix{}, 2, 0), FormatError);
}

TEST(KMeans, SameSeedBitIdentical) {
  Rng rng(11);
  RowMatrix pts(600, 6);  // larger than one mini-batch
  for (auto& v : pts.values) v = static_cast<float>(rng.normal());
  const auto a = minibatch_kmeans(pts, 5, 99);
  const auto b = minibatch_kmeans(pts, 5, 99);
  EXPECT_EQ(a.centers, b.centers);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, InertiaTraceNonIncreasingAndNearestAssignment) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20 + rng.below(500);
    const std::size_t d = 1 + rng.below(8);
    RowMatrix pts(n, d);
    for (auto& v : pts.values) v = static_cast<float>(rng.normal() + (rng.below(3) * 4.0));
    const int k = 1 + static_cast<int>(rng.below(6));
    const auto res = minibatch_kmeans(pts, k, trial);
    for (std::size_t i = 1; i < res.inertia_trace.size(); ++i)
      EXPECT_LE(res.inertia_trace[i], res.inertia_trace[i - 1] * (1.0 + 1e-9) + 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      double own = 0.0, best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < res.k(); ++c) {
        double dd = 0.0;
        for (std::size_t j = 0; j < d; ++j) dd += std::pow(pts(i, j) - res.centers(c, j), 2);
        best = std::min(best, dd);
        if (c == res.assignment[i]) own = dd;
      }
      EXPECT_LE(own, best + 1e-9);
    }
    EXPECT_GE(res.inertia, 0.0);
  }
}

TEST(KMeans, WithinFivePercentOfLloydOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = oracles::random_cluster_instance(rng);
    const auto res = minibatch_kmeans(inst.points, inst.k, 1000 + trial);
    const double oracle = oracles::lloyd_multi_restart(inst.points, inst.k, 50, trial).inertia;
    EXPECT_LE(res.inertia, 1.05 * oracle + 1e-9) << "trial " << trial;
  }
}

TEST(Pca, RankOneAlongZ) {
  RowMatrix pts(5, 3);
  for (int i = 0; i < 5; ++i) pts(i, 2) = static_cast<float>(i) - 1.5f;
  const auto res = pca_components(pts, 1);
  EXPECT_NEAR(res.components(0, 0), 0.0f, 1e-6);
  EXPECT_NEAR(res.components(0, 1), 0.0f, 1e-6);
  EXPECT_NEAR(res.components(0, 2), 1.0f, 1e-6);  // positive by the sign rule
}

TEST(Pca, DiagonalCovarianceFirstAxis) {
  Rng rng(77);
  RowMatrix pts(2000, 2);
  for (std::size_t i = 0; i < pts.rows; ++i) {
    pts(i, 0) = static_cast<float>(2.0 * rng.normal());
    pts(i, 1) = static_cast<float>(rng.normal());
  }
  const auto res = pca_components(pts, 1);
  const auto ref = oracles::jacobi_eigen(oracles::sample_covariance(pts));
  const double cos_ref = std::abs(res.components(0, 0) * ref.vectors[0][0] + res.components(0, 1) * ref.vectors[0][1]);
  EXPECT_GT(cos_ref, std::cos(5.0 * M_PI / 180.0));
  const double cos_axis = std::abs(res.components(0, 0));
  EXPECT_GT(cos_axis, std::cos(5.0 * M_PI / 180.0));
}

TEST(Pca, FullRankBasisIsOrthonormal) {
  Rng rng(5);
  RowMatrix pts(40, 6);
  for (auto& v : pts.values) v = static_cast<float>(rng.normal());
  const auto res = pca_components(pts, 6);
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      double dot = 0.0;
      for (int j = 0; j < 6; ++j) dot += static_cast<double>(res.components(a, j)) * res.components(b, j);
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-5);
    }
  for (std::size_t i = 1; i < res.eigenvalues.size(); ++i) EXPECT_LE(res.eigenvalues[i], res.eigenvalues[i - 1]);
}

TEST(Pca, ReconstructionWithAllComponents) {
  Rng rng(6);
  RowMatrix pts(12, 4);
  for (auto& v : pts.values) v = static_cast<float>(rng.uniform(-2, 2));
  const auto res = pca_components(pts, 4);
  for (std::size_t i = 0; i < pts.rows; ++i) {
    std::vector<double> rec(res.mean);
    for (int c = 0; c < 4; ++c) {
      double coef = 0.0;
      for (int j = 0; j < 4; ++j) coef += (pts(i, j) - res.mean[j]) * res.components(c, j);
      for (int j = 0; j < 4; ++j) rec[j] += coef * res.components(c, j);
    }
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(rec[j], pts(i, j), 1e-4);
  }
}

TEST(Pca, HighDimensionalFewPoints) {
  Rng rng(8);
  RowMatrix pts(20, 400);
  for (auto& v : pts.values) v = static_cast<float>(rng.normal());
  const auto res = pca_components(pts, 4);
  const auto ref = oracles::jacobi_eigen(oracles::sample_covariance(pts), 400);
  for (int c = 0; c < 4; ++c) {
    double dot = 0.0;
    for (int j = 0; j < 400; ++j) dot += res.components(c, j) * ref.vectors[c][j];
    EXPECT_GT(std::abs(dot), std::cos(5.0 * M_PI / 180.0));
    EXPECT_NEAR(res.eigenvalues[c], ref.values[c], 1e-4 * ref.values[c]);
  }
  // requesting every direction completes the null space orthonormally
  const auto full = pca_components(pts, 20);
  for (int a = 0; a < 20; ++a) {
    double n = 0.0;
    for (int j = 0; j < 400; ++j) n += static_cast<double>(full.components(a, j)) * full.components(a, j);
    EXPECT_NEAR(n, 1.0, 1e-5);
  }
}

TEST(Pca, Errors) {
  RowMatrix same(3, 2, {1, 1, 1, 1, 1, 1});
  EXPECT_THROW(pca_components(same, 1), FormatError);
  RowMatrix pts(3, 2, {0, 1, 2, 3, 4, 6});
  EXPECT_THROW(pca_components(pts, 3), FormatError);
  EXPECT_THROW(pca_components(pts, 0), FormatError);
}
