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

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "privleak/error.hpp"
#include "privleak/image.hpp"

namespace privleak {

// Pixel-level and distributional similarity metrics plus embedding-space
// distances. All functions are pure.

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

inline double mse(const Image& x, const Image& y) {
  require_same_shape(x, y);
  const auto a = x.pixels();
  const auto b = y.pixels();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

// Returns kPsnrInfinity for pixel-identical inputs.
inline double psnr(const Image& x, const Image& y) {
  const double err = mse(x, y);
  if (err == 0.0) return kPsnrInfinity;
  return 20.0 * std::log10(x.max_value() / std::sqrt(err));
}

struct SsimConfig {
  double k1 = 0.01;
  double k2 = 0.03;
  int window_size = 11;
  double window_sigma = 1.5;
};

namespace detail {

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double t = i - center;
    w[static_cast<std::size_t>(i)] = std::exp(-t * t / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid-mode separable correlation of a single-channel plane.
inline std::vector<double> filter_valid(std::span<const double> plane, int width,
                                        int height, std::span<const double> kernel) {
  const int k = static_cast<int>(kernel.size());
  const int out_w = width - k + 1;
  const int out_h = height - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(out_w) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += kernel[i] * plane[static_cast<std::size_t>(y) * width + x + i];
      rows[static_cast<std::size_t>(y) * out_w + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += kernel[i] * rows[static_cast<std::size_t>(y + i) * out_w + x];
      out[static_cast<std::size_t>(y) * out_w + x] = s;
    }
  }
  return out;
}

}  // namespace detail

// Single-scale mean SSIM over all window positions that fit inside the
// image. Multichannel inputs are reduced to equal-weight luma first.
inline double ssim(const Image& x, const Image& y, const SsimConfig& cfg = {}) {
  require_same_shape(x, y);
  if (cfg.window_size <= 0 || cfg.window_size % 2 == 0) {
    fail(ErrorCode::kConfiguration, "SSIM window size must be odd and positive");
  }
  if (!(cfg.k1 > 0.0) || !(cfg.k2 > 0.0) || !(cfg.window_sigma > 0.0)) {
    fail(ErrorCode::kConfiguration, "SSIM k1, k2 and sigma must be positive");
  }
  if (cfg.window_size > std::min(x.width(), x.height())) {
    fail(ErrorCode::kConfiguration, "SSIM window larger than image");
  }
  const Image lx = x.luma();
  const Image ly = y.luma();
  const int w = lx.width();
  const int h = lx.height();
  const auto a = lx.pixels();
  const auto b = ly.pixels();
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto kernel = detail::gaussian_window_1d(cfg.window_size, cfg.window_sigma);
  const auto mu_a = detail::filter_valid(a, w, h, kernel);
  const auto mu_b = detail::filter_valid(b, w, h, kernel);
  const auto e_aa = detail::filter_valid(aa, w, h, kernel);
  const auto e_bb = detail::filter_valid(bb, w, h, kernel);
  const auto e_ab = detail::filter_valid(ab, w, h, kernel);

  const double c1 = std::pow(cfg.k1 * x.max_value(), 2);
  const double c2 = std::pow(cfg.k2 * x.max_value(), 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

// ---------------------------------------------------------------------------
// Gaussian statistics and the Frechet distance.

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

// Population (divisor N) covariance.
inline GaussianStats gaussian_stats(std::span<const std::vector<double>> features) {
  if (features.size() < 2) {
    fail(ErrorCode::kInsufficientData, "gaussian_stats needs at least 2 vectors");
  }
  const std::size_t dim = features.front().size();
  if (dim == 0) fail(ErrorCode::kDimension, "feature vectors must be non-empty");
  Eigen::MatrixXd data(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < features.size(); ++r) {
    if (features[r].size() != dim) {
      fail(ErrorCode::kDimension, "feature vectors have inconsistent lengths");
    }
    for (std::size_t c = 0; c < dim; ++c) data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = features[r][c];
  }
  GaussianStats stats;
  stats.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - stats.mean.transpose();
  stats.cov = (centered.transpose() * centered) / static_cast<double>(features.size());
  stats.cov = 0.5 * (stats.cov + stats.cov.transpose());
  return stats;
}

inline constexpr double kSymmetryTolerance = 1e-8;
inline constexpr double kPsdTolerance = 1e-8;

// Principal square root of a symmetric PSD matrix by eigendecomposition.
// Eigenvalues in [-kPsdTolerance * trace, 0) are clamped to zero; anything
// more negative is rejected.
inline Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) fail(ErrorCode::kDimension, "matrix must be square");
  if (m.size() == 0) return m;
  if (!m.allFinite()) fail(ErrorCode::kInvalidValue, "matrix has non-finite entries");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance) {
    fail(ErrorCode::kSymmetry, "matrix is not symmetric (max |M - M^T| = " +
                                   std::to_string(asym) + ")");
  }
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) {
    fail(ErrorCode::kNotPsd, "eigendecomposition did not converge");
  }
  Eigen::VectorXd eig = solver.eigenvalues();
  const double tol = kPsdTolerance * std::abs(sym.trace());
  if (eig.minCoeff() < -tol) {
    fail(ErrorCode::kNotPsd, "eigenvalue " + std::to_string(eig.minCoeff()) +
                                 " below tolerance");
  }
  for (Eigen::Index i = 0; i < eig.size(); ++i) eig(i) = std::sqrt(std::max(eig(i), 0.0));
  const Eigen::MatrixXd& vecs = solver.eigenvectors();
  Eigen::MatrixXd root = vecs * eig.asDiagonal() * vecs.transpose();
  return 0.5 * (root + root.transpose());
}

// ||m1 - m2||^2 + Tr(C1) + Tr(C2) - 2 Tr((C1^{1/2} C2 C1^{1/2})^{1/2}).
// With A = C2^{1/2} C1^{1/2}, the inner matrix is A^T A, so the trace of
// its root is the sum of the singular values of A.
inline double frechet_distance(const GaussianStats& g1, const GaussianStats& g2) {
  if (g1.dim() != g2.dim() || g1.cov.rows() != g1.dim() || g2.cov.rows() != g2.dim()) {
    fail(ErrorCode::kDimension, "Gaussian statistics have different dimensions");
  }
  const double mean_term = (g1.mean - g2.mean).squaredNorm();
  const Eigen::MatrixXd root1 = matrix_sqrt_psd(g1.cov);
  const Eigen::MatrixXd root2 = matrix_sqrt_psd(g2.cov);
  const Eigen::MatrixXd a = root2 * root1;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const double cross = svd.singularValues().sum();
  const double fid = mean_term + g1.cov.trace() + g2.cov.trace() - 2.0 * cross;
  return std::max(fid, 0.0);
}

// ---------------------------------------------------------------------------
// Embedding-space distances.

inline double l2_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(ErrorCode::kDimension, "vector lengths differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(ErrorCode::kDimension, "vector lengths differ");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) {
    fail(ErrorCode::kDegenerateInput, "cosine similarity of a zero vector");
  }
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

}  // namespace privleak
