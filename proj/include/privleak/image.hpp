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

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "privleak/error.hpp"

namespace privleak {

// Dense row-major H x W x C raster. Values live in [0, max_value].
class Image {
 public:
  Image() = default;

  Image(int width, int height, int channels, double max_value = 1.0)
      : width_(width), height_(height), channels_(channels),
        max_value_(max_value) {
    validate_shape(width, height, channels, max_value);
    pixels_.assign(static_cast<std::size_t>(width) * height * channels, 0.0);
  }

  Image(int width, int height, int channels, std::vector<double> pixels,
        double max_value = 1.0)
      : width_(width), height_(height), channels_(channels),
        max_value_(max_value), pixels_(std::move(pixels)) {
    validate_shape(width, height, channels, max_value);
    if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
      fail(ErrorCode::kDimension, "pixel buffer length does not match shape");
    }
    for (double v : pixels_) {
      if (!(v >= 0.0 && v <= max_value_)) {
        fail(ErrorCode::kInvalidValue, "pixel outside [0, max_value]");
      }
    }
  }

  static Image filled(int width, int height, int channels, double value,
                      double max_value = 1.0) {
    Image img(width, height, channels, max_value);
    std::fill(img.pixels_.begin(), img.pixels_.end(), value);
    return img;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  double max_value() const { return max_value_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  std::span<const double> pixels() const { return pixels_; }
  std::span<double> pixels() { return pixels_; }

  double at(int y, int x, int c = 0) const { return pixels_[index(y, x, c)]; }
  double& at(int y, int x, int c = 0) { return pixels_[index(y, x, c)]; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_ && max_value_ == other.max_value_;
  }

  void clip() {
    for (double& v : pixels_) v = std::clamp(v, 0.0, max_value_);
  }

  // Equal-weight channel mean, single-channel result.
  Image luma() const {
    if (channels_ == 1) return *this;
    Image out(width_, height_, 1, max_value_);
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        double sum = 0.0;
        for (int c = 0; c < channels_; ++c) sum += at(y, x, c);
        out.at(y, x) = sum / channels_;
      }
    }
    return out;
  }

  bool operator==(const Image&) const = default;

 private:
  static void validate_shape(int width, int height, int channels,
                             double max_value) {
    if (width <= 0 || height <= 0) {
      fail(ErrorCode::kDimension, "image width and height must be positive");
    }
    if (channels != 1 && channels != 3) {
      fail(ErrorCode::kDimension, "image channels must be 1 or 3");
    }
    if (!(max_value > 0.0) || !std::isfinite(max_value)) {
      fail(ErrorCode::kInvalidValue, "max_value must be positive and finite");
    }
  }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  double max_value_ = 1.0;
  std::vector<double> pixels_;
};

inline void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kDimension, "image shapes differ: " +
                                    std::to_string(a.width()) + "x" +
                                    std::to_string(a.height()) + "x" +
                                    std::to_string(a.channels()) + " vs " +
                                    std::to_string(b.width()) + "x" +
                                    std::to_string(b.height()) + "x" +
                                    std::to_string(b.channels()));
  }
}

// ---------------------------------------------------------------------------
// Raw tensor format: "LKM1", u32 width, height, channels (little endian),
// then width*height*channels float64 little-endian values.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) fail(ErrorCode::kFormat, "truncated u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += 4;
  return v;
}

inline double get_f64(std::string_view in, std::size_t& pos) {
  if (pos + 8 > in.size()) fail(ErrorCode::kFormat, "truncated f64");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += 8;
  return std::bit_cast<double>(bits);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorCode::kIo, "short write to " + path.string());
}

}  // namespace detail

inline constexpr std::string_view kRawMagic = "LKM1";

// max_value is not stored in the raw format; values are taken as-is and the
// caller states the dynamic range.
inline std::string encode_raw(const Image& img) {
  std::string out(kRawMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(img.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(img.height()));
  detail::put_u32(out, static_cast<std::uint32_t>(img.channels()));
  for (double v : img.pixels()) detail::put_f64(out, v);
  return out;
}

inline Image decode_raw(std::string_view data, double max_value = 1.0) {
  if (data.substr(0, 4) != kRawMagic) fail(ErrorCode::kFormat, "missing LKM1 magic");
  std::size_t pos = 4;
  const auto w = detail::get_u32(data, pos);
  const auto h = detail::get_u32(data, pos);
  const auto c = detail::get_u32(data, pos);
  const std::size_t n = static_cast<std::size_t>(w) * h * c;
  if (data.size() != pos + 8 * n) fail(ErrorCode::kFormat, "raw tensor length mismatch");
  std::vector<double> px(n);
  for (auto& v : px) v = detail::get_f64(data, pos);
  return Image(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c),
               std::move(px), max_value);
}

// ---------------------------------------------------------------------------
// PNG (8-bit). Gray and RGB are kept, alpha is dropped, palettes expanded.

inline std::string encode_png(const Image& img) {
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorCode::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "png encode failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        static_cast<std::string*>(png_get_io_ptr(p))
            ->append(reinterpret_cast<const char*>(data), len);
      },
      [](png_structp) {});
  const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * img.channels());
  const auto px = img.pixels();
  for (int y = 0; y < img.height(); ++y) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double v = px[static_cast<std::size_t>(y) * row.size() + i] / img.max_value();
      row[i] = static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline Image decode_png(std::string_view data) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
    fail(ErrorCode::kFormat, std::string("png decode failed: ") + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorCode::kFormat, std::string("png decode failed: ") + image.message);
  }
  std::vector<double> px(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) px[i] = buffer[i] / 255.0;
  return Image(static_cast<int>(image.width), static_cast<int>(image.height), channels,
               std::move(px), 1.0);
}

// Dispatch on extension: ".png" or anything else as raw LKM1.
inline Image load_image(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  if (path.extension() == ".png") return decode_png(data);
  return decode_raw(data);
}

inline void save_image(const std::filesystem::path& path, const Image& img) {
  if (path.extension() == ".png") {
    detail::write_file(path, encode_png(img));
  } else {
    detail::write_file(path, encode_raw(img));
  }
}

}  // namespace privleak
