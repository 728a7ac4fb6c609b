// Copyright 2026 The Privleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "privleak/metrics.hpp"
#include "support.hpp"

namespace privleak {
namespace {

Eigen::MatrixXd random_orthogonal(Rng& rng, int d) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ();
}

using test::random_psd;

GaussianStats random_gaussian(Rng& rng, int d) {
  GaussianStats g;
  g.mean = Eigen::VectorXd(d);
  for (int i = 0; i < d; ++i) g.mean(i) = rng.normal();
  g.cov = random_psd(rng, d, 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(d) + 2)));
  return g;
}

// --- MSE / PSNR ---------------------------------------------------------

TEST(Mse, IdenticalIsZero) {
  Rng rng(1);
  const Image x = test::random_image(rng, 5, 5, 3);
  EXPECT_EQ(mse(x, x), 0.0);
}

TEST(Mse, ConstantDifference) {
  for (int w : {1, 3, 8}) {
    EXPECT_DOUBLE_EQ(mse(Image::filled(w, 2, 1, 0.0), Image::filled(w, 2, 1, 0.5)), 0.25);
  }
}

TEST(Mse, MatchesPerPixelOracleAndIsSymmetric) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Image x = test::random_image(rng, 4, 4, t % 2 ? 3 : 1);
    const Image y = test::random_image(rng, 4, 4, t % 2 ? 3 : 1);
    EXPECT_NEAR(mse(x, y), oracle::mse(x, y), 1e-12);
    EXPECT_NEAR(mse(x, y), mse(y, x), 1e-15);
  }
}

TEST(Mse, ShapeMismatchIsDimensionError) {
  try {
    mse(Image(2, 2, 1), Image(2, 3, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimension);
  }
  EXPECT_THROW(mse(Image(2, 2, 1), Image(2, 2, 3)), Error);
  EXPECT_THROW(mse(Image(2, 2, 1, 1.0), Image(2, 2, 1, 255.0)), Error);
}

TEST(Psnr, IdenticalIsInfiniteSentinel) {
  const Image x = Image::filled(3, 3, 1, 0.2);
  EXPECT_EQ(psnr(x, x), kPsnrInfinity);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
}

TEST(Psnr, ClosedFormValues) {
  // Constant offset 0.1 gives MSE exactly 0.01 up to rounding of 0.1.
  const Image a = Image::filled(4, 4, 1, 0.0);
  const Image b = Image::filled(4, 4, 1, 0.1);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  const Image c = Image::filled(4, 4, 1, 10.0, 255.0);
  const Image d = Image::filled(4, 4, 1, 11.0, 255.0);
  EXPECT_NEAR(psnr(c, d), 48.1308, 1e-3);
  EXPECT_NEAR(psnr(c, d), 20.0 * std::log10(255.0), 1e-12);
}

TEST(Psnr, ConsistentWithMse) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const double maxv = t % 2 ? 255.0 : 1.0;
    const Image x = test::random_image(rng, 6, 5, 1, maxv);
    const Image y = test::random_image(rng, 6, 5, 1, maxv);
    EXPECT_NEAR(psnr(x, y), 20.0 * std::log10(maxv / std::sqrt(mse(x, y))), 1e-9);
    EXPECT_NEAR(psnr(x, y), oracle::psnr(x, y), 1e-9);
    EXPECT_EQ(psnr(x, y), psnr(y, x));
  }
}

// --- SSIM ---------------------------------------------------------------

TEST(Ssim, IdenticalIsOne) {
  Rng rng(4);
  const Image x = test::random_image(rng, 16, 16, 3);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
  const Image c = Image::filled(12, 12, 1, 0.5);
  EXPECT_NEAR(ssim(c, c), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesLuminanceOnly) {
  const double a = 0.3, b = 0.7;
  const double c1 = 0.01 * 0.01;
  const double expected = (2 * a * b + c1) / (a * a + b * b + c1);
  EXPECT_NEAR(ssim(Image::filled(11, 11, 1, a), Image::filled(11, 11, 1, b)), expected, 1e-12);
  EXPECT_NEAR(ssim(Image::filled(20, 13, 3, a), Image::filled(20, 13, 3, b)), expected, 1e-12);
}

TEST(Ssim, MatchesBruteForceWindowOracle) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const int w = 11 + static_cast<int>(rng.uniform_index(6));
    const int h = 11 + static_cast<int>(rng.uniform_index(6));
    const Image x = test::random_image(rng, w, h, t % 3 == 0 ? 3 : 1);
    const Image y = test::random_image(rng, w, h, t % 3 == 0 ? 3 : 1);
    EXPECT_NEAR(ssim(x, y), oracle::ssim(x, y), 1e-9);
    EXPECT_EQ(ssim(x, y), ssim(y, x));
  }
}

TEST(Ssim, CustomWindowMatchesOracle) {
  Rng rng(6);
  const Image x = test::random_image(rng, 9, 7, 1);
  const Image y = test::random_image(rng, 9, 7, 1);
  SsimConfig cfg;
  cfg.window_size = 5;
  cfg.window_sigma = 1.0;
  EXPECT_NEAR(ssim(x, y, cfg), oracle::ssim(x, y, 5, 1.0), 1e-9);
}

TEST(Ssim, WindowLargerThanImageIsConfigurationError) {
  try {
    ssim(Image(10, 20, 1), Image(10, 20, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfiguration);
  }
  SsimConfig even;
  even.window_size = 4;
  EXPECT_THROW(ssim(Image(10, 10, 1), Image(10, 10, 1), even), Error);
}

TEST(Ssim, BoundedInMinusOneOne) {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Image x = test::random_image(rng, 12, 12, 1);
    Image y = x;
    for (double& v : y.pixels()) v = 1.0 - v;
    const double s = ssim(x, y);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

// --- Gaussian statistics ---------------------------------------------------

TEST(GaussianStats, CopiesHaveZeroCovariance) {
  const std::vector<std::vector<double>> f(4, {1.0, -2.0, 3.0});
  const auto g = gaussian_stats(f);
  EXPECT_EQ(g.dim(), 3);
  EXPECT_DOUBLE_EQ(g.mean(1), -2.0);
  EXPECT_EQ(g.cov.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GaussianStats, TwoPointPopulationCovariance) {
  const std::vector<std::vector<double>> f = {{0, 0}, {2, 2}};
  const auto g = gaussian_stats(f);
  EXPECT_DOUBLE_EQ(g.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(g.mean(1), 1.0);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(g.cov(i, j), 1.0);
  }
}

TEST(GaussianStats, MatchesDoubleLoopCovariance) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::vector<double>> f;
    for (int i = 0; i < 5; ++i) f.push_back(test::random_vector(rng, 3));
    const auto g = gaussian_stats(f);
    const auto m = oracle::mean(f);
    const auto c = oracle::covariance(f);
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(g.mean(a), m[static_cast<std::size_t>(a)], 1e-12);
      for (int b = 0; b < 3; ++b) EXPECT_NEAR(g.cov(a, b), c[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)], 1e-12);
    }
  }
}

TEST(GaussianStats, Errors) {
  const std::vector<std::vector<double>> one = {{1.0, 2.0}};
  try {
    gaussian_stats(one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientData);
  }
  const std::vector<std::vector<double>> ragged = {{1.0, 2.0}, {1.0}};
  try {
    gaussian_stats(ragged);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimension);
  }
}

// --- matrix square root --------------------------------------------------

TEST(MatrixSqrt, IdentityAndDiagonal) {
  const Eigen::MatrixXd i3 = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_LE((matrix_sqrt_psd(i3) - i3).norm(), 1e-14);
  const Eigen::MatrixXd d = Eigen::Vector2d(4.0, 9.0).asDiagonal();
  const Eigen::MatrixXd expected = Eigen::Vector2d(2.0, 3.0).asDiagonal();
  EXPECT_LE((matrix_sqrt_psd(d) - expected).norm(), 1e-14);
}

TEST(MatrixSqrt, SquaresBackSymmetricPsd) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const int d = 1 + static_cast<int>(rng.uniform_index(16));
    const int rank = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(d) + 3));
    const Eigen::MatrixXd m = random_psd(rng, d, rank);
    const Eigen::MatrixXd s = matrix_sqrt_psd(m);
    EXPECT_LE((s * s - m).norm(), 1e-8 * (1.0 + m.norm()));
    EXPECT_LE((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * (1.0 + s.norm()));
  }
}

TEST(MatrixSqrt, RejectsAsymmetric) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
  m(0, 1) = 1e-6;
  try {
    matrix_sqrt_psd(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSymmetry);
  }
}

TEST(MatrixSqrt, ClampsTinyNegativeRejectsLarge) {
  Eigen::MatrixXd tiny = Eigen::Vector2d(1.0, -1e-12).asDiagonal();
  const Eigen::MatrixXd s = matrix_sqrt_psd(tiny);
  EXPECT_NEAR(s(0, 0), 1.0, 1e-15);
  EXPECT_EQ(s(1, 1), 0.0);
  Eigen::MatrixXd big = Eigen::Vector2d(1.0, -0.1).asDiagonal();
  try {
    matrix_sqrt_psd(big);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotPsd);
  }
}

// --- Frechet distance ------------------------------------------------------

TEST(Frechet, CommutingDiagonalExample) {
  GaussianStats g1{Eigen::Vector2d(0, 0), Eigen::MatrixXd::Identity(2, 2)};
  GaussianStats g2{Eigen::Vector2d(1, 1), 4.0 * Eigen::MatrixXd::Identity(2, 2)};
  EXPECT_NEAR(frechet_distance(g1, g2), 4.0, 1e-8);
}

TEST(Frechet, SelfDistanceAndSymmetry) {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const int d = 1 + static_cast<int>(rng.uniform_index(8));
    const auto g1 = random_gaussian(rng, d);
    const auto g2 = random_gaussian(rng, d);
    EXPECT_LE(frechet_distance(g1, g1), 1e-8);
    EXPECT_NEAR(frechet_distance(g1, g2), frechet_distance(g2, g1), 1e-8);
    EXPECT_GE(frechet_distance(g1, g2), 0.0);
  }
}

TEST(Frechet, CommutingClosedForm) {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const int d = 1 + static_cast<int>(rng.uniform_index(8));
    const Eigen::MatrixXd q = random_orthogonal(rng, d);
    Eigen::VectorXd l1(d), l2(d), m1(d), m2(d);
    for (int i = 0; i < d; ++i) {
      l1(i) = rng.uniform(0.0, 3.0);
      l2(i) = rng.uniform(0.0, 3.0);
      m1(i) = rng.normal();
      m2(i) = rng.normal();
    }
    GaussianStats g1{m1, q * l1.asDiagonal() * q.transpose()};
    GaussianStats g2{m2, q * l2.asDiagonal() * q.transpose()};
    g1.cov = 0.5 * (g1.cov + g1.cov.transpose()).eval();
    g2.cov = 0.5 * (g2.cov + g2.cov.transpose()).eval();
    EXPECT_NEAR(frechet_distance(g1, g2), oracle::commuting_fid(m1, m2, l1, l2), 1e-8);
  }
}

TEST(Frechet, DimensionMismatch) {
  GaussianStats g1{Eigen::Vector2d(0, 0), Eigen::MatrixXd::Identity(2, 2)};
  GaussianStats g2{Eigen::Vector3d(0, 0, 0), Eigen::MatrixXd::Identity(3, 3)};
  EXPECT_THROW(frechet_distance(g1, g2), Error);
}

// --- embedding distances ---------------------------------------------------

TEST(EmbeddingDistances, Examples) {
  const std::vector<double> e1 = {1.0, 0.0}, e2 = {0.0, 1.0};
  EXPECT_EQ(l2_distance(e1, e1), 0.0);
  EXPECT_NEAR(l2_distance(e1, e2), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(cosine_similarity(e1, e2), 0.0, 1e-12);
  const std::vector<double> u = {0.3, -1.2, 2.0};
  const std::vector<double> neg = {-0.3, 1.2, -2.0};
  EXPECT_NEAR(cosine_similarity(u, u), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(u, neg), -1.0, 1e-15);
}

TEST(EmbeddingDistances, UnitVectorIdentityAndOracles) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    auto u = test::random_vector(rng, 7);
    auto v = test::random_vector(rng, 7);
    EXPECT_NEAR(l2_distance(u, v), oracle::l2(u, v), 1e-12);
    EXPECT_NEAR(cosine_similarity(u, v), oracle::cosine(u, v), 1e-12);
    const double nu = oracle::l2(u, std::vector<double>(7, 0.0));
    const double nv = oracle::l2(v, std::vector<double>(7, 0.0));
    for (double& x : u) x /= nu;
    for (double& x : v) x /= nv;
    const double d = l2_distance(u, v);
    EXPECT_NEAR(d * d, 2.0 * (1.0 - cosine_similarity(u, v)), 1e-10);
  }
}

TEST(EmbeddingDistances, Errors) {
  const std::vector<double> a = {1.0, 2.0}, b = {1.0}, z = {0.0, 0.0};
  EXPECT_THROW(l2_distance(a, b), Error);
  EXPECT_THROW(cosine_similarity(a, b), Error);
  try {
    cosine_similarity(a, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

}  // namespace
}  // namespace privleak
