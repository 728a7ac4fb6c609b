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
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "privleak/error.hpp"
#include "privleak/image.hpp"
#include "privleak/rng.hpp"
#include "privleak/semsim.hpp"

namespace privleak {

// Synthetic stand-in for reconstruction attacks: each pseudo-model turns an
// original into a parametric degradation of it, and a rule-based oracle says
// whether the result is still recognizable.

enum class Family {
  kGaussianBlur,           // sigma in (0, 8]
  kAdditiveGaussianNoise,  // sigma in (0, 1], relative to max_value
  kPatchShuffle,           // grid g in {2, 4, 8}
  kBrightnessShift,        // c in [-0.6, 0.6], relative to max_value
  kBlockAverage,           // block b in {2, 4, 8}
};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::kGaussianBlur: return "gaussian_blur";
    case Family::kAdditiveGaussianNoise: return "additive_gaussian_noise";
    case Family::kPatchShuffle: return "patch_shuffle";
    case Family::kBrightnessShift: return "brightness_shift";
    case Family::kBlockAverage: return "block_average";
  }
  return "unknown";
}

inline Family parse_family(const std::string& name) {
  for (Family f : {Family::kGaussianBlur, Family::kAdditiveGaussianNoise, Family::kPatchShuffle,
                   Family::kBrightnessShift, Family::kBlockAverage}) {
    if (family_name(f) == name) return f;
  }
  fail(ErrorCode::kConfiguration, "unknown degradation family '" + name + "'");
}

inline void validate_strength(Family f, double s) {
  auto is_grid = [](double v) { return v == 2.0 || v == 4.0 || v == 8.0; };
  bool ok = false;
  switch (f) {
    case Family::kGaussianBlur: ok = s > 0.0 && s <= 8.0; break;
    case Family::kAdditiveGaussianNoise: ok = s > 0.0 && s <= 1.0; break;
    case Family::kPatchShuffle: ok = is_grid(s); break;
    case Family::kBrightnessShift: ok = s >= -0.6 && s <= 0.6; break;
    case Family::kBlockAverage: ok = is_grid(s); break;
  }
  if (!ok) {
    fail(ErrorCode::kConfiguration,
         "strength " + std::to_string(s) + " out of range for " + family_name(f));
  }
}

// Frozen recognizability thresholds (see README: pilot calibration).
struct ProxyThresholds {
  double max_blur_sigma = 2.0;
  double max_noise_sigma = 0.15;
};

inline bool proxy_label(Family f, double strength, const ProxyThresholds& t = {}) {
  validate_strength(f, strength);
  switch (f) {
    case Family::kBrightnessShift: return true;
    case Family::kGaussianBlur: return strength <= t.max_blur_sigma;
    case Family::kAdditiveGaussianNoise: return strength <= t.max_noise_sigma;
    case Family::kPatchShuffle: return strength <= 2.0;
    case Family::kBlockAverage: return strength <= 2.0;
  }
  return false;
}

namespace detail {

inline Image gaussian_blur(const Image& x, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= total;
  const int w = x.width(), h = x.height(), c = x.channels();
  Image tmp(w, h, c, x.max_value());
  Image out(w, h, c, x.max_value());
  // Borders replicate the edge pixel.
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          s += k[static_cast<std::size_t>(i + radius)] * x.at(y, std::clamp(xx + i, 0, w - 1), ch);
        }
        tmp.at(y, xx, ch) = s;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          s += k[static_cast<std::size_t>(i + radius)] * tmp.at(std::clamp(y + i, 0, h - 1), xx, ch);
        }
        out.at(y, xx, ch) = s;
      }
    }
  }
  out.clip();
  return out;
}

inline Image patch_shuffle(const Image& x, int grid, Rng& rng) {
  if (x.width() % grid != 0 || x.height() % grid != 0) {
    fail(ErrorCode::kConfiguration, "patch_shuffle grid must divide the image size");
  }
  const int pw = x.width() / grid, ph = x.height() / grid;
  std::vector<int> perm(static_cast<std::size_t>(grid * grid));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<int>(perm));
  Image out(x.width(), x.height(), x.channels(), x.max_value());
  for (int dst = 0; dst < grid * grid; ++dst) {
    const int src = perm[static_cast<std::size_t>(dst)];
    const int sy = (src / grid) * ph, sx = (src % grid) * pw;
    const int dy = (dst / grid) * ph, dx = (dst % grid) * pw;
    for (int y = 0; y < ph; ++y) {
      for (int xx = 0; xx < pw; ++xx) {
        for (int ch = 0; ch < x.channels(); ++ch) out.at(dy + y, dx + xx, ch) = x.at(sy + y, sx + xx, ch);
      }
    }
  }
  return out;
}

inline Image block_average(const Image& x, int block) {
  Image out(x.width(), x.height(), x.channels(), x.max_value());
  for (int by = 0; by < x.height(); by += block) {
    for (int bx = 0; bx < x.width(); bx += block) {
      const int ey = std::min(x.height(), by + block), ex = std::min(x.width(), bx + block);
      for (int ch = 0; ch < x.channels(); ++ch) {
        double s = 0.0;
        for (int y = by; y < ey; ++y) {
          for (int xx = bx; xx < ex; ++xx) s += x.at(y, xx, ch);
        }
        s /= static_cast<double>((ey - by) * (ex - bx));
        for (int y = by; y < ey; ++y) {
          for (int xx = bx; xx < ex; ++xx) out.at(y, xx, ch) = s;
        }
      }
    }
  }
  out.clip();
  return out;
}

}  // namespace detail

// Deterministic given seed; output has the input's shape and range.
inline Image degrade(const Image& x, Family family, double strength, std::uint64_t seed) {
  validate_strength(family, strength);
  Rng rng(seed);
  const double range = x.max_value();
  switch (family) {
    case Family::kGaussianBlur:
      return detail::gaussian_blur(x, strength);
    case Family::kAdditiveGaussianNoise: {
      Image out = x;
      for (double& v : out.pixels()) v += strength * range * rng.normal();
      out.clip();
      return out;
    }
    case Family::kPatchShuffle:
      return detail::patch_shuffle(x, static_cast<int>(strength), rng);
    case Family::kBrightnessShift: {
      Image out = x;
      for (double& v : out.pixels()) v += strength * range;
      out.clip();
      return out;
    }
    case Family::kBlockAverage:
      return detail::block_average(x, static_cast<int>(strength));
  }
  fail(ErrorCode::kConfiguration, "unhandled degradation family");
}

// ---------------------------------------------------------------------------
// Pseudo-models and benchmark generation.

struct ProfileEntry {
  Family family = Family::kBrightnessShift;
  double strength = 0.0;
  double weight = 1.0;
};

struct PseudoModel {
  std::string model_id;
  std::vector<ProfileEntry> profile;
  std::uint64_t seed = 0;

  void validate() const {
    if (model_id.empty()) fail(ErrorCode::kConfiguration, "model_id must be non-empty");
    if (profile.empty()) fail(ErrorCode::kConfiguration, "model " + model_id + " has an empty profile");
    double total = 0.0;
    for (const auto& e : profile) {
      validate_strength(e.family, e.strength);
      if (!(e.weight > 0.0)) fail(ErrorCode::kConfiguration, "profile weights must be positive");
      total += e.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      fail(ErrorCode::kConfiguration, "profile weights of " + model_id + " must sum to 1");
    }
  }
};

struct Reconstruction {
  std::string image_id;
  std::string family;  // "external" for reconstructions not produced here
  double strength = 0.0;
  std::optional<bool> proxy_label;
  // Precomputed distance from an outside metric (e.g. a perceptual network),
  // carried through the manifest as "external_distance".
  std::optional<double> external_distance;
  ImagePtr image;
};

// (model id, image id) -> recognizable.
using LabelMap = std::map<std::pair<std::string, std::string>, bool>;

// Originals are keyed by image id; each model maps to reconstructions in
// original-id order.
struct Benchmark {
  std::map<std::string, ImagePtr> originals;
  std::map<std::string, std::vector<Reconstruction>> models;

  // Fraction of a model's reconstructions the proxy oracle calls
  // recognizable.
  double proxy_fraction(const std::string& model_id) const {
    const auto it = models.find(model_id);
    if (it == models.end() || it->second.empty()) {
      fail(ErrorCode::kNotFound, "unknown model " + model_id);
    }
    std::size_t hits = 0;
    for (const auto& r : it->second) {
      if (!r.proxy_label) fail(ErrorCode::kIncomplete, "reconstruction without proxy label");
      hits += *r.proxy_label ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(it->second.size());
  }
};

// Image i of a model uses a generator seeded with (model seed XOR i): it
// picks a profile entry by weight, then supplies the degradation seed.
inline Benchmark generate_benchmark(const std::map<std::string, ImagePtr>& originals,
                                    const std::vector<PseudoModel>& models,
                                    const ProxyThresholds& thresholds = {}) {
  if (originals.empty()) fail(ErrorCode::kInsufficientData, "no originals");
  if (models.empty()) fail(ErrorCode::kInsufficientData, "no pseudo-models");
  Benchmark bench;
  bench.originals = originals;
  for (const auto& model : models) {
    model.validate();
    if (bench.models.contains(model.model_id)) {
      fail(ErrorCode::kConfiguration, "duplicate model id " + model.model_id);
    }
    auto& recs = bench.models[model.model_id];
    std::uint64_t index = 0;
    for (const auto& [image_id, original] : originals) {
      Rng rng(model.seed ^ index);
      ++index;
      const double u = rng.uniform();
      double cumulative = 0.0;
      const ProfileEntry* chosen = &model.profile.back();
      for (const auto& e : model.profile) {
        cumulative += e.weight;
        if (u < cumulative) {
          chosen = &e;
          break;
        }
      }
      const std::uint64_t degrade_seed = rng.next_u64();
      Reconstruction r;
      r.image_id = image_id;
      r.family = family_name(chosen->family);
      r.strength = chosen->strength;
      r.proxy_label = proxy_label(chosen->family, chosen->strength, thresholds);
      r.image = std::make_shared<const Image>(
          degrade(*original, chosen->family, chosen->strength, degrade_seed));
      recs.push_back(std::move(r));
    }
  }
  return bench;
}

// Constant-plus-texture images: a base level plus a sum of 1..4 random
// low-frequency sinusoids (1 to 4 cycles across the image).
inline std::map<std::string, ImagePtr> smooth_corpus(int count, int width, int height,
                                                     int channels, std::uint64_t seed,
                                                     const std::string& prefix = "img") {
  if (count <= 0) fail(ErrorCode::kConfiguration, "corpus size must be positive");
  std::map<std::string, ImagePtr> out;
  Rng rng(seed);
  const int digits = std::max(3, static_cast<int>(std::to_string(count - 1).size()));
  for (int n = 0; n < count; ++n) {
    const double base = rng.uniform(0.25, 0.55);
    const int waves = 1 + static_cast<int>(rng.uniform_index(4));
    struct Wave { double fx, fy, phase, amp; };
    std::vector<Wave> ws;
    for (int k = 0; k < waves; ++k) {
      const double freq = rng.uniform(1.0, 4.0);
      const double angle = rng.uniform(0.0, std::numbers::pi);
      ws.push_back({freq * std::cos(angle) / width, freq * std::sin(angle) / height,
                    rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.08, 0.2) / waves});
    }
    std::vector<double> tint(static_cast<std::size_t>(channels), 0.0);
    if (channels == 3) {
      for (auto& t : tint) t = rng.uniform(-0.05, 0.05);
    }
    Image img(width, height, channels);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double v = base;
        for (const auto& wv : ws) {
          v += wv.amp * std::sin(2.0 * std::numbers::pi * (wv.fx * x + wv.fy * y) + wv.phase);
        }
        for (int c = 0; c < channels; ++c) img.at(y, x, c) = std::clamp(v + tint[static_cast<std::size_t>(c)], 0.0, 1.0);
      }
    }
    std::string id = std::to_string(n);
    id.insert(0, static_cast<std::size_t>(digits) - std::min<std::size_t>(id.size(), digits), '0');
    out.emplace(prefix + id, std::make_shared<const Image>(std::move(img)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON config and benchmark directory format.

inline PseudoModel parse_pseudo_model(const nlohmann::json& j) {
  PseudoModel m;
  m.model_id = j.at("model_id").get<std::string>();
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& e : j.at("profile")) {
    ProfileEntry p;
    p.family = parse_family(e.at("family").get<std::string>());
    p.strength = e.at("strength").get<double>();
    p.weight = e.value("weight", 1.0);
    m.profile.push_back(p);
  }
  return m;
}

inline nlohmann::json to_json(const PseudoModel& m) {
  nlohmann::json profile = nlohmann::json::array();
  for (const auto& e : m.profile) {
    profile.push_back({{"family", family_name(e.family)}, {"strength", e.strength}, {"weight", e.weight}});
  }
  return {{"model_id", m.model_id}, {"seed", m.seed}, {"profile", profile}};
}

// Accepts {"models": [...]} or a bare array.
inline std::vector<PseudoModel> load_models_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open models config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "models config: " + std::string(e.what()));
  }
  const nlohmann::json& arr = j.is_array() ? j : j.at("models");
  std::vector<PseudoModel> models;
  for (const auto& m : arr) models.push_back(parse_pseudo_model(m));
  return models;
}

// Loads every .lkm / .png file in dir, keyed by file stem.
inline std::map<std::string, ImagePtr> load_image_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::kIo, "not a directory: " + dir.string());
  std::map<std::string, ImagePtr> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext != ".lkm" && ext != ".png") continue;
    out.emplace(entry.path().stem().string(), std::make_shared<const Image>(load_image(entry.path())));
  }
  if (out.empty()) fail(ErrorCode::kIo, "no images in " + dir.string());
  return out;
}

inline void save_image_dir(const std::filesystem::path& dir,
                           const std::map<std::string, ImagePtr>& images) {
  std::filesystem::create_directories(dir);
  for (const auto& [id, img] : images) save_image(dir / (id + ".lkm"), *img);
}

inline nlohmann::json manifest_line(const std::string& model_id, const Reconstruction& r) {
  nlohmann::json j;
  j["model_id"] = model_id;
  j["image_id"] = r.image_id;
  j["family"] = r.family;
  j["strength"] = r.strength;
  j["proxy_label"] = r.proxy_label ? nlohmann::json(*r.proxy_label ? 1 : 0) : nlohmann::json(nullptr);
  if (r.external_distance) j["external_distance"] = *r.external_distance;
  return j;
}

// Layout: originals/<image_id>.lkm, <model_id>/<image_id>.lkm, and
// manifest.jsonl with one line per reconstruction.
inline void write_benchmark(const std::filesystem::path& dir, const Benchmark& bench) {
  std::filesystem::create_directories(dir);
  save_image_dir(dir / "originals", bench.originals);
  std::string manifest;
  for (const auto& [model_id, recs] : bench.models) {
    for (const auto& r : recs) {
      save_image(dir / model_id / (r.image_id + ".lkm"), *r.image);
      manifest += manifest_line(model_id, r).dump() + "\n";
    }
  }
  detail::write_file(dir / "manifest.jsonl", manifest);
}

inline std::filesystem::path find_image_file(const std::filesystem::path& stem_path) {
  for (const char* ext : {".lkm", ".png"}) {
    auto p = stem_path;
    p += ext;
    if (std::filesystem::exists(p)) return p;
  }
  fail(ErrorCode::kIo, "missing image " + stem_path.string() + ".{lkm,png}");
}

inline Benchmark read_benchmark(const std::filesystem::path& dir) {
  Benchmark bench;
  bench.originals = load_image_dir(dir / "originals");
  std::ifstream in(dir / "manifest.jsonl");
  if (!in) fail(ErrorCode::kIo, "missing manifest.jsonl in " + dir.string());
  std::string line;
  std::vector<std::string> missing;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, "manifest line: " + std::string(e.what()));
    }
    Reconstruction r;
    const auto model_id = j.at("model_id").get<std::string>();
    r.image_id = j.at("image_id").get<std::string>();
    r.family = j.value("family", std::string("external"));
    r.strength = j.value("strength", 0.0);
    if (j.contains("proxy_label") && !j["proxy_label"].is_null()) {
      const auto& pl = j["proxy_label"];
      r.proxy_label = pl.is_boolean() ? pl.get<bool>() : pl.get<int>() != 0;
    }
    if (j.contains("external_distance") && !j["external_distance"].is_null()) {
      r.external_distance = j["external_distance"].get<double>();
    }
    if (!bench.originals.contains(r.image_id)) {
      fail(ErrorCode::kIo, "manifest references unknown original " + r.image_id);
    }
    try {
      r.image = std::make_shared<const Image>(load_image(find_image_file(dir / model_id / r.image_id)));
    } catch (const Error&) {
      missing.push_back((dir / model_id / r.image_id).string());
      continue;
    }
    bench.models[model_id].push_back(std::move(r));
  }
  if (!missing.empty()) {
    std::string msg = "missing or unreadable reconstructions:";
    for (const auto& m : missing) msg += " " + m;
    fail(ErrorCode::kIo, msg);
  }
  for (auto& [id, recs] : bench.models) {
    std::sort(recs.begin(), recs.end(),
              [](const Reconstruction& a, const Reconstruction& b) { return a.image_id < b.image_id; });
  }
  return bench;
}

}  // namespace privleak
