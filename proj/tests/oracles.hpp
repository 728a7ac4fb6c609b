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

// Brute-force reference implementations. Each one is written from the
// textbook definition and shares no code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "privleak/image.hpp"

namespace privleak::oracle {

inline double mse(const Image& x, const Image& y) {
  long double sum = 0.0L;
  for (int yy = 0; yy < x.height(); ++yy) {
    for (int xx = 0; xx < x.width(); ++xx) {
      for (int c = 0; c < x.channels(); ++c) {
        const long double d = static_cast<long double>(x.at(yy, xx, c)) - y.at(yy, xx, c);
        sum += d * d;
      }
    }
  }
  return static_cast<double>(sum / (static_cast<long double>(x.width()) * x.height() * x.channels()));
}

inline double psnr(const Image& x, const Image& y) {
  const long double m = mse(x, y);
  return static_cast<double>(10.0L * std::log10(static_cast<long double>(x.max_value()) * x.max_value() / m));
}

// Direct 2-D weighted sums per window, no separable filtering.
inline double ssim(const Image& x, const Image& y, int win = 11, double sigma = 1.5, double k1 = 0.01,
                   double k2 = 0.03) {
  auto gray = [](const Image& im, int r, int c) {
    double s = 0.0;
    for (int ch = 0; ch < im.channels(); ++ch) s += im.at(r, c, ch);
    return s / im.channels();
  };
  std::vector<double> w2(static_cast<std::size_t>(win * win));
  double total = 0.0;
  const double mid = (win - 1) / 2.0;
  for (int i = 0; i < win; ++i) {
    for (int j = 0; j < win; ++j) {
      const double v = std::exp(-((i - mid) * (i - mid) + (j - mid) * (j - mid)) / (2 * sigma * sigma));
      w2[static_cast<std::size_t>(i * win + j)] = v;
      total += v;
    }
  }
  for (double& v : w2) v /= total;
  const double c1 = (k1 * x.max_value()) * (k1 * x.max_value());
  const double c2 = (k2 * x.max_value()) * (k2 * x.max_value());
  double acc = 0.0;
  int count = 0;
  for (int r0 = 0; r0 + win <= x.height(); ++r0) {
    for (int q0 = 0; q0 + win <= x.width(); ++q0) {
      double mx = 0, my = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const double w = w2[static_cast<std::size_t>(i * win + j)];
          mx += w * gray(x, r0 + i, q0 + j);
          my += w * gray(y, r0 + i, q0 + j);
        }
      }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const double w = w2[static_cast<std::size_t>(i * win + j)];
          const double dx = gray(x, r0 + i, q0 + j) - mx;
          const double dy = gray(y, r0 + i, q0 + j) - my;
          vx += w * dx * dx;
          vy += w * dy * dy;
          cxy += w * dx * dy;
        }
      }
      acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return acc / count;
}

inline std::vector<double> mean(const std::vector<std::vector<double>>& rows) {
  std::vector<double> m(rows[0].size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += r[j];
  }
  for (double& v : m) v /= static_cast<double>(rows.size());
  return m;
}

// Population covariance by an explicit double loop over feature pairs.
inline std::vector<std::vector<double>> covariance(const std::vector<std::vector<double>>& rows) {
  const auto m = mean(rows);
  const std::size_t d = m.size();
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      double s = 0.0;
      for (const auto& r : rows) s += (r[a] - m[a]) * (r[b] - m[b]);
      cov[a][b] = s / static_cast<double>(rows.size());
    }
  }
  return cov;
}

inline double l2(const std::vector<double>& u, const std::vector<double>& v) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < u.size(); ++i) s += (static_cast<long double>(u[i]) - v[i]) * (static_cast<long double>(u[i]) - v[i]);
  return static_cast<double>(std::sqrt(s));
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  long double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<long double>(u[i]) * v[i];
    nu += static_cast<long double>(u[i]) * u[i];
    nv += static_cast<long double>(v[i]) * v[i];
  }
  return static_cast<double>(dot / std::sqrt(nu * nv));
}

// Frechet distance of Gaussians whose covariances Q diag(l1) Q^T and
// Q diag(l2) Q^T share the eigenbasis Q.
inline double commuting_fid(const Eigen::VectorXd& m1, const Eigen::VectorXd& m2, const Eigen::VectorXd& l1,
                            const Eigen::VectorXd& l2) {
  double s = (m1 - m2).squaredNorm();
  for (Eigen::Index i = 0; i < l1.size(); ++i) {
    const double d = std::sqrt(l1(i)) - std::sqrt(l2(i));
    s += d * d;
  }
  return s;
}

// Ranks by sorting (value, index) pairs and averaging each equal-value run.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::pair<double, std::size_t>> p;
  for (std::size_t i = 0; i < v.size(); ++i) p.emplace_back(v[i], i);
  std::sort(p.begin(), p.end());
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < p.size();) {
    std::size_t j = i;
    while (j < p.size() && p[j].first == p[i].first) ++j;
    double sum = 0.0;
    for (std::size_t k = i; k < j; ++k) sum += static_cast<double>(k + 1);
    for (std::size_t k = i; k < j; ++k) r[p[k].second] = sum / static_cast<double>(j - i);
    i = j;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  long double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    saa += static_cast<long double>(a[i]) * a[i];
    sbb += static_cast<long double>(b[i]) * b[i];
    sab += static_cast<long double>(a[i]) * b[i];
  }
  const long double cov = sab - sa * sb / n;
  const long double va = saa - sa * sa / n;
  const long double vb = sbb - sb * sb / n;
  return static_cast<double>(cov / std::sqrt(va * vb));
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

// Kendall tau-b by enumerating all pairs.
inline double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  long long conc = 0, disc = 0, ties_a = 0, ties_b = 0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0) ++ties_a;
      if (db == 0.0) ++ties_b;
      if (da == 0.0 || db == 0.0) continue;
      if ((da > 0) == (db > 0)) {
        ++conc;
      } else {
        ++disc;
      }
    }
  }
  const long long n0 = static_cast<long long>(n * (n - 1) / 2);
  return static_cast<double>(conc - disc) /
         std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
}

}  // namespace privleak::oracle
