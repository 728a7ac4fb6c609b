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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "privleak/error.hpp"
#include "privleak/image.hpp"
#include "privleak/rng.hpp"

namespace privleak {

// conv3x3(conv1) -> ReLU -> avgpool2x2 -> conv3x3(conv2) -> ReLU
//   -> global avgpool -> fully connected(embed_dim) -> l2 normalize.
// Convolutions use zero "same" padding and stride 1. Pixels enter as
// 2 * v / max_value - 1.
struct Architecture {
  int width = 32;
  int height = 32;
  int channels = 3;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int embed_dim = 64;

  bool operator==(const Architecture&) const = default;

  void validate() const {
    if (width < 2 || height < 2) {
      fail(ErrorCode::kConfiguration, "input must be at least 2x2 for the pooling stage");
    }
    if (channels != 1 && channels != 3) {
      fail(ErrorCode::kConfiguration, "input channels must be 1 or 3");
    }
    if (conv1_channels <= 0 || conv2_channels <= 0 || embed_dim <= 0) {
      fail(ErrorCode::kConfiguration, "layer widths must be positive");
    }
  }

  int pooled_width() const { return width / 2; }
  int pooled_height() const { return height / 2; }
};

// Offsets of each parameter tensor inside the flat parameter vector, in
// declaration order: conv1 weight, conv1 bias, conv2 weight, conv2 bias,
// fc weight, fc bias. Conv weights are [out][in][3][3], fc weight is
// [embed][conv2_channels].
struct ParamLayout {
  std::size_t conv1_w = 0, conv1_b = 0, conv2_w = 0, conv2_b = 0, fc_w = 0, fc_b = 0, total = 0;

  explicit ParamLayout(const Architecture& a) {
    std::size_t at = 0;
    conv1_w = at; at += static_cast<std::size_t>(a.conv1_channels) * a.channels * 9;
    conv1_b = at; at += static_cast<std::size_t>(a.conv1_channels);
    conv2_w = at; at += static_cast<std::size_t>(a.conv2_channels) * a.conv1_channels * 9;
    conv2_b = at; at += static_cast<std::size_t>(a.conv2_channels);
    fc_w = at;    at += static_cast<std::size_t>(a.embed_dim) * a.conv2_channels;
    fc_b = at;    at += static_cast<std::size_t>(a.embed_dim);
    total = at;
  }
};

// Intermediate activations of one forward pass, kept for backprop.
struct ForwardCache {
  std::vector<double> input;  // [C][H][W]
  std::vector<double> pre1;   // [c1][H][W]
  std::vector<double> pooled; // [c1][H2][W2]
  std::vector<double> pre2;   // [c2][H2][W2]
  std::vector<double> gap;    // [c2]
  std::vector<double> z;      // [embed]
  double z_norm = 0.0;
  std::vector<double> output; // unit norm [embed]
};

namespace detail {

// out[o][y][x] += sum_i sum_k w[o][i][k] * in[i][y+ky-1][x+kx-1]
inline void conv3x3_forward(std::span<const double> in, int in_ch, int h, int w,
                            std::span<const double> weight, std::span<const double> bias,
                            int out_ch, std::span<double> out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < out_ch; ++o) {
    double* dst = out.data() + o * plane;
    std::fill(dst, dst + plane, bias[static_cast<std::size_t>(o)]);
    for (int i = 0; i < in_ch; ++i) {
      const double* src = in.data() + i * plane;
      const double* k = weight.data() + (static_cast<std::size_t>(o) * in_ch + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const double kv = k[ky * 3 + kx];
          for (int y = y0; y < y1; ++y) {
            double* drow = dst + static_cast<std::size_t>(y) * w;
            const double* srow = src + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) drow[x] += kv * srow[x];
          }
        }
      }
    }
  }
}

// Accumulates weight/bias gradients and, if grad_in is non-empty, the input
// gradient, given dL/d(out).
inline void conv3x3_backward(std::span<const double> in, int in_ch, int h, int w,
                             std::span<const double> weight, std::span<const double> grad_out,
                             int out_ch, std::span<double> grad_w, std::span<double> grad_b,
                             std::span<double> grad_in) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < out_ch; ++o) {
    const double* g = grad_out.data() + o * plane;
    double bsum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) bsum += g[p];
    grad_b[static_cast<std::size_t>(o)] += bsum;
    for (int i = 0; i < in_ch; ++i) {
      const double* src = in.data() + i * plane;
      const std::size_t kbase = (static_cast<std::size_t>(o) * in_ch + i) * 9;
      double* gin = grad_in.empty() ? nullptr : grad_in.data() + i * plane;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const double kv = weight[kbase + ky * 3 + kx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * w;
            const std::size_t soff = static_cast<std::size_t>(y + dy) * w + dx;
            const double* srow = src + soff;
            for (int x = x0; x < x1; ++x) acc += grow[x] * srow[x];
            if (gin) {
              double* irow = gin + soff;
              for (int x = x0; x < x1; ++x) irow[x] += kv * grow[x];
            }
          }
          grad_w[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

}  // namespace detail

class EmbeddingNet {
 public:
  EmbeddingNet() = default;

  // He-style uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in)),
  // zero biases. The same (arch, seed) always yields identical parameters.
  static EmbeddingNet init(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    EmbeddingNet net;
    net.arch_ = arch;
    net.seed_ = seed;
    const ParamLayout layout(arch);
    net.params_.assign(layout.total, 0.0);
    Rng rng(seed);
    auto fill = [&](std::size_t begin, std::size_t count, int fan_in) {
      const double bound = std::sqrt(6.0 / fan_in);
      for (std::size_t i = 0; i < count; ++i) net.params_[begin + i] = rng.uniform(-bound, bound);
    };
    fill(layout.conv1_w, layout.conv1_b - layout.conv1_w, arch.channels * 9);
    fill(layout.conv2_w, layout.conv2_b - layout.conv2_w, arch.conv1_channels * 9);
    fill(layout.fc_w, layout.fc_b - layout.fc_w, arch.conv2_channels);
    return net;
  }

  static EmbeddingNet from_parameters(const Architecture& arch, std::vector<double> params,
                                      std::uint64_t seed = 0) {
    arch.validate();
    if (params.size() != ParamLayout(arch).total) {
      fail(ErrorCode::kDimension, "parameter count does not match architecture");
    }
    for (double p : params) {
      if (!std::isfinite(p)) fail(ErrorCode::kInvalidValue, "non-finite parameter");
    }
    EmbeddingNet net;
    net.arch_ = arch;
    net.params_ = std::move(params);
    net.seed_ = seed;
    return net;
  }

  const Architecture& architecture() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  void check_input(const Image& x) const {
    if (x.width() != arch_.width || x.height() != arch_.height ||
        x.channels() != arch_.channels) {
      fail(ErrorCode::kDimension, "image shape does not match the network input");
    }
  }

  ForwardCache forward_cached(const Image& x) const {
    check_input(x);
    const ParamLayout L(arch_);
    const int h = arch_.height, w = arch_.width, c = arch_.channels;
    const int c1 = arch_.conv1_channels, c2 = arch_.conv2_channels;
    const int h2 = arch_.pooled_height(), w2 = arch_.pooled_width();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t plane2 = static_cast<std::size_t>(h2) * w2;
    const auto p = std::span<const double>(params_);

    ForwardCache fc;
    fc.input.resize(plane * c);
    const auto px = x.pixels();
    const double scale = 2.0 / x.max_value();
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        for (int ch = 0; ch < c; ++ch) {
          fc.input[ch * plane + static_cast<std::size_t>(y) * w + xx] =
              px[(static_cast<std::size_t>(y) * w + xx) * c + ch] * scale - 1.0;
        }
      }
    }

    fc.pre1.resize(plane * c1);
    detail::conv3x3_forward(fc.input, c, h, w, p.subspan(L.conv1_w, L.conv1_b - L.conv1_w),
                            p.subspan(L.conv1_b, c1), c1, fc.pre1);

    fc.pooled.assign(plane2 * c1, 0.0);
    for (int ch = 0; ch < c1; ++ch) {
      const double* src = fc.pre1.data() + ch * plane;
      double* dst = fc.pooled.data() + ch * plane2;
      for (int y = 0; y < h2; ++y) {
        for (int xx = 0; xx < w2; ++xx) {
          double s = 0.0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              s += std::max(0.0, src[static_cast<std::size_t>(2 * y + dy) * w + 2 * xx + dx]);
            }
          }
          dst[static_cast<std::size_t>(y) * w2 + xx] = 0.25 * s;
        }
      }
    }

    fc.pre2.resize(plane2 * c2);
    detail::conv3x3_forward(fc.pooled, c1, h2, w2, p.subspan(L.conv2_w, L.conv2_b - L.conv2_w),
                            p.subspan(L.conv2_b, c2), c2, fc.pre2);

    fc.gap.assign(c2, 0.0);
    for (int ch = 0; ch < c2; ++ch) {
      const double* src = fc.pre2.data() + ch * plane2;
      double s = 0.0;
      for (std::size_t i = 0; i < plane2; ++i) s += std::max(0.0, src[i]);
      fc.gap[static_cast<std::size_t>(ch)] = s / static_cast<double>(plane2);
    }

    const int e = arch_.embed_dim;
    fc.z.resize(e);
    for (int o = 0; o < e; ++o) {
      double s = p[L.fc_b + o];
      const double* row = p.data() + L.fc_w + static_cast<std::size_t>(o) * c2;
      for (int k = 0; k < c2; ++k) s += row[k] * fc.gap[static_cast<std::size_t>(k)];
      fc.z[static_cast<std::size_t>(o)] = s;
    }
    double sq = 0.0;
    for (double v : fc.z) sq += v * v;
    fc.z_norm = std::sqrt(sq);
    fc.output.assign(e, 0.0);
    if (fc.z_norm > 0.0) {
      for (int o = 0; o < e; ++o) fc.output[o] = fc.z[o] / fc.z_norm;
    } else {
      // Degenerate pre-normalization vector maps to the first basis vector.
      fc.output[0] = 1.0;
    }
    return fc;
  }

  std::vector<double> forward(const Image& x) const { return forward_cached(x).output; }

  // Adds dL/d(params) to grad (same layout as parameters()) given
  // dL/d(output) of a cached forward pass.
  void backward(const ForwardCache& fc, std::span<const double> grad_output,
                std::span<double> grad) const {
    const ParamLayout L(arch_);
    const int h = arch_.height, w = arch_.width, c = arch_.channels;
    const int c1 = arch_.conv1_channels, c2 = arch_.conv2_channels;
    const int h2 = arch_.pooled_height(), w2 = arch_.pooled_width();
    const int e = arch_.embed_dim;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t plane2 = static_cast<std::size_t>(h2) * w2;
    const auto p = std::span<const double>(params_);

    if (fc.z_norm == 0.0) return;  // constant output, zero gradient
    // d(z/|z|)/dz = (I - y y^T) / |z|
    double dot = 0.0;
    for (int o = 0; o < e; ++o) dot += fc.output[o] * grad_output[o];
    std::vector<double> dz(e);
    for (int o = 0; o < e; ++o) dz[o] = (grad_output[o] - fc.output[o] * dot) / fc.z_norm;

    std::vector<double> dgap(c2, 0.0);
    for (int o = 0; o < e; ++o) {
      grad[L.fc_b + o] += dz[o];
      const std::size_t row = L.fc_w + static_cast<std::size_t>(o) * c2;
      for (int k = 0; k < c2; ++k) {
        grad[row + k] += dz[o] * fc.gap[k];
        dgap[k] += p[row + k] * dz[o];
      }
    }

    std::vector<double> dpre2(plane2 * c2);
    for (int ch = 0; ch < c2; ++ch) {
      const double g = dgap[ch] / static_cast<double>(plane2);
      for (std::size_t i = 0; i < plane2; ++i) {
        dpre2[ch * plane2 + i] = fc.pre2[ch * plane2 + i] > 0.0 ? g : 0.0;
      }
    }

    std::vector<double> dpooled(plane2 * c1, 0.0);
    detail::conv3x3_backward(fc.pooled, c1, h2, w2, p.subspan(L.conv2_w, L.conv2_b - L.conv2_w),
                             dpre2, c2, grad.subspan(L.conv2_w, L.conv2_b - L.conv2_w),
                             grad.subspan(L.conv2_b, c2), dpooled);

    std::vector<double> dpre1(plane * c1, 0.0);
    for (int ch = 0; ch < c1; ++ch) {
      for (int y = 0; y < h2; ++y) {
        for (int xx = 0; xx < w2; ++xx) {
          const double g = 0.25 * dpooled[ch * plane2 + static_cast<std::size_t>(y) * w2 + xx];
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t at = ch * plane + static_cast<std::size_t>(2 * y + dy) * w + 2 * xx + dx;
              dpre1[at] = fc.pre1[at] > 0.0 ? g : 0.0;
            }
          }
        }
      }
    }

    detail::conv3x3_backward(fc.input, c, h, w, p.subspan(L.conv1_w, L.conv1_b - L.conv1_w),
                             dpre1, c1, grad.subspan(L.conv1_w, L.conv1_b - L.conv1_w),
                             grad.subspan(L.conv1_b, c1), {});
  }

  bool operator==(const EmbeddingNet& other) const {
    return arch_ == other.arch_ && params_ == other.params_;
  }

 private:
  Architecture arch_;
  std::uint64_t seed_ = 0;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// File format: "SEMSIM01", u32 width, height, channels, conv1_channels,
// conv2_channels, embed_dim (little endian), then every parameter as
// float64 little endian in declaration order.

inline constexpr std::string_view kNetMagic = "SEMSIM01";

inline std::string encode_net(const EmbeddingNet& net) {
  const auto& a = net.architecture();
  std::string out(kNetMagic);
  for (int v : {a.width, a.height, a.channels, a.conv1_channels, a.conv2_channels, a.embed_dim}) {
    detail::put_u32(out, static_cast<std::uint32_t>(v));
  }
  for (double v : net.parameters()) detail::put_f64(out, v);
  return out;
}

inline EmbeddingNet decode_net(std::string_view data) {
  if (data.substr(0, kNetMagic.size()) != kNetMagic) {
    fail(ErrorCode::kFormat, "missing SEMSIM01 magic");
  }
  std::size_t pos = kNetMagic.size();
  Architecture a;
  a.width = static_cast<int>(detail::get_u32(data, pos));
  a.height = static_cast<int>(detail::get_u32(data, pos));
  a.channels = static_cast<int>(detail::get_u32(data, pos));
  a.conv1_channels = static_cast<int>(detail::get_u32(data, pos));
  a.conv2_channels = static_cast<int>(detail::get_u32(data, pos));
  a.embed_dim = static_cast<int>(detail::get_u32(data, pos));
  a.validate();
  const std::size_t n = ParamLayout(a).total;
  if (data.size() != pos + 8 * n) fail(ErrorCode::kFormat, "network file length mismatch");
  std::vector<double> params(n);
  for (auto& v : params) v = detail::get_f64(data, pos);
  return EmbeddingNet::from_parameters(a, std::move(params));
}

inline void save_net(const std::filesystem::path& path, const EmbeddingNet& net) {
  detail::write_file(path, encode_net(net));
}

inline EmbeddingNet load_net(const std::filesystem::path& path) {
  return decode_net(detail::read_file(path));
}

}  // namespace privleak
