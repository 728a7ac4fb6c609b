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

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "privleak/image.hpp"
#include "privleak/rng.hpp"

namespace privleak::test {

inline Image random_image(Rng& rng, int w, int h, int c, double max_value = 1.0) {
  Image img(w, h, c, max_value);
  for (double& v : img.pixels()) v = rng.uniform(0.0, max_value);
  return img;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Gram matrix A^T A of a rank x d standard normal A.
inline Eigen::MatrixXd random_psd(Rng& rng, int d, int rank) {
  Eigen::MatrixXd a(rank, d);
  for (int i = 0; i < rank; ++i) {
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  }
  return a.transpose() * a;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("privleak_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace privleak::test
