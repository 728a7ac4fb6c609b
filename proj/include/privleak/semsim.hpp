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
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "privleak/embedding_net.hpp"
#include "privleak/error.hpp"
#include "privleak/image.hpp"
#include "privleak/metrics.hpp"
#include "privleak/rng.hpp"

namespace privleak {

using ImagePtr = std::shared_ptr<const Image>;

// Anchor is an original, positive a recognizable reconstruction of it,
// negative an unrecognizable one.
struct Triplet {
  ImagePtr anchor;
  ImagePtr positive;
  ImagePtr negative;
};

enum class LossKind { kTriplet, kContrastive };

struct TrainConfig {
  double margin = 1.0;
  double learning_rate = 0.05;
  int batch_size = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kTriplet;
  // Architecture widths; input shape is taken from the training images.
  int conv1_channels = 16;
  int conv2_channels = 32;
  int embed_dim = 64;

  // Hyperparameters of the original large-scale setup.
  static TrainConfig large_preset() {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 128;
    cfg.epochs = 200;
    return cfg;
  }

  void validate() const {
    if (!(margin >= 0.0) || !std::isfinite(margin)) fail(ErrorCode::kConfiguration, "margin must be >= 0");
    if (!(learning_rate > 0.0)) fail(ErrorCode::kConfiguration, "learning rate must be positive");
    if (batch_size <= 0) fail(ErrorCode::kConfiguration, "batch size must be positive");
    if (epochs <= 0) fail(ErrorCode::kConfiguration, "epochs must be positive");
  }
};

inline double triplet_loss(double d_pos, double d_neg, double margin) {
  if (d_pos < 0.0 || d_neg < 0.0) fail(ErrorCode::kInvalidValue, "distances must be nonnegative");
  if (margin < 0.0) fail(ErrorCode::kInvalidValue, "margin must be nonnegative");
  return std::max(d_pos - d_neg + margin, 0.0);
}

inline double contrastive_loss(double dist, bool same_label, double margin) {
  if (dist < 0.0) fail(ErrorCode::kInvalidValue, "distance must be nonnegative");
  if (margin < 0.0) fail(ErrorCode::kInvalidValue, "margin must be nonnegative");
  if (same_label) return dist * dist;
  const double gap = std::max(margin - dist, 0.0);
  return gap * gap;
}

inline double semsim_score(const EmbeddingNet& net, const Image& x, const Image& x_bar) {
  const auto a = net.forward(x);
  const auto b = net.forward(x_bar);
  return l2_distance(a, b);
}

struct BatchGradient {
  std::vector<double> grad;  // layout of EmbeddingNet::parameters()
  double loss = 0.0;         // summed over the batch
};

namespace detail {

// dL/d(ya) contribution of d = |ya - yb|, scaled by coeff; zero at d == 0.
inline void add_distance_grad(std::span<const double> ya, std::span<const double> yb, double dist,
                              double coeff, std::span<double> ga, std::span<double> gb) {
  if (dist == 0.0 || coeff == 0.0) return;
  for (std::size_t k = 0; k < ya.size(); ++k) {
    const double g = coeff * (ya[k] - yb[k]) / dist;
    ga[k] += g;
    gb[k] -= g;
  }
}

}  // namespace detail

// Exact gradient of the summed loss over the batch. Each distinct image in
// the batch is embedded once and back-propagated once with its accumulated
// output gradient.
//
// Triplet loss: max(d(a,p) - d(a,n) + margin, 0).
// Contrastive loss on a triplet: d(a,p)^2 + max(margin - d(a,n), 0)^2.
inline BatchGradient grad_batch(const EmbeddingNet& net, std::span<const Triplet> batch,
                                const TrainConfig& cfg) {
  if (batch.empty()) fail(ErrorCode::kInsufficientData, "empty batch");
  std::vector<const Image*> images;
  std::unordered_map<const Image*, std::size_t> slot;
  auto intern = [&](const ImagePtr& img) {
    if (!img) fail(ErrorCode::kInvalidValue, "null image in triplet");
    auto [it, inserted] = slot.try_emplace(img.get(), images.size());
    if (inserted) images.push_back(img.get());
    return it->second;
  };
  struct Ids { std::size_t a, p, n; };
  std::vector<Ids> ids;
  ids.reserve(batch.size());
  for (const auto& t : batch) {
    require_same_shape(*t.anchor, *t.positive);
    require_same_shape(*t.anchor, *t.negative);
    ids.push_back({intern(t.anchor), intern(t.positive), intern(t.negative)});
  }

  std::vector<ForwardCache> caches;
  caches.reserve(images.size());
  for (const Image* img : images) caches.push_back(net.forward_cached(*img));

  const std::size_t e = static_cast<std::size_t>(net.architecture().embed_dim);
  std::vector<std::vector<double>> grad_out(images.size(), std::vector<double>(e, 0.0));
  BatchGradient result;
  for (const auto& t : ids) {
    const auto& ya = caches[t.a].output;
    const auto& yp = caches[t.p].output;
    const auto& yn = caches[t.n].output;
    const double d_pos = l2_distance(ya, yp);
    const double d_neg = l2_distance(ya, yn);
    if (cfg.loss == LossKind::kTriplet) {
      const double loss = triplet_loss(d_pos, d_neg, cfg.margin);
      result.loss += loss;
      if (loss > 0.0) {
        detail::add_distance_grad(ya, yp, d_pos, 1.0, grad_out[t.a], grad_out[t.p]);
        detail::add_distance_grad(ya, yn, d_neg, -1.0, grad_out[t.a], grad_out[t.n]);
      }
    } else {
      result.loss += contrastive_loss(d_pos, true, cfg.margin) +
                     contrastive_loss(d_neg, false, cfg.margin);
      detail::add_distance_grad(ya, yp, d_pos, 2.0 * d_pos, grad_out[t.a], grad_out[t.p]);
      if (d_neg < cfg.margin) {
        detail::add_distance_grad(ya, yn, d_neg, -2.0 * (cfg.margin - d_neg), grad_out[t.a],
                                  grad_out[t.n]);
      }
    }
  }

  result.grad.assign(net.parameter_count(), 0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const bool nonzero = std::any_of(grad_out[i].begin(), grad_out[i].end(),
                                     [](double g) { return g != 0.0; });
    if (nonzero) net.backward(caches[i], grad_out[i], result.grad);
  }
  return result;
}

struct TrainResult {
  EmbeddingNet net;
  std::vector<double> epoch_loss;  // mean per-triplet loss of each epoch
};

// Plain SGD on the batch-mean loss with a constant learning rate. Triplet
// order is reshuffled every epoch from the config seed; the run is fully
// determined by (triplets, cfg).
inline TrainResult train(std::span<const Triplet> triplets, const TrainConfig& cfg) {
  cfg.validate();
  if (triplets.empty()) fail(ErrorCode::kInsufficientData, "no training triplets");
  const Image& probe = *triplets.front().anchor;
  Architecture arch;
  arch.width = probe.width();
  arch.height = probe.height();
  arch.channels = probe.channels();
  arch.conv1_channels = cfg.conv1_channels;
  arch.conv2_channels = cfg.conv2_channels;
  arch.embed_dim = cfg.embed_dim;

  TrainResult result{EmbeddingNet::init(arch, cfg.seed), {}};
  Rng shuffler(mix_seed(cfg.seed ^ 0x5348554646ULL));
  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Triplet> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffler.shuffle(std::span<std::size_t>(order));
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(triplets[order[k]]);
      const BatchGradient g = grad_batch(result.net, batch, cfg);
      if (!std::isfinite(g.loss)) {
        fail(ErrorCode::kDivergence, "non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_sum += g.loss;
      const double step = cfg.learning_rate / static_cast<double>(batch.size());
      auto params = result.net.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * g.grad[i];
    }
    const double mean_loss = epoch_sum / static_cast<double>(triplets.size());
    for (double p : result.net.parameters()) {
      if (!std::isfinite(p)) {
        fail(ErrorCode::kDivergence, "non-finite parameter at epoch " + std::to_string(epoch));
      }
    }
    result.epoch_loss.push_back(mean_loss);
  }
  return result;
}

// One reconstruction of an original plus its binary majority label.
struct LabeledReconstruction {
  ImagePtr image;
  bool recognizable = false;
};

struct TripletSet {
  std::vector<Triplet> triplets;
  std::size_t skipped = 0;  // originals lacking either polarity
};

// Full positive x negative cross product per original. Originals without
// reconstructions of both polarities are skipped and counted.
inline TripletSet build_triplets(
    const std::map<std::string, ImagePtr>& originals,
    const std::map<std::string, std::vector<LabeledReconstruction>>& reconstructions) {
  TripletSet out;
  for (const auto& [id, original] : originals) {
    auto it = reconstructions.find(id);
    std::vector<ImagePtr> pos, neg;
    if (it != reconstructions.end()) {
      for (const auto& r : it->second) (r.recognizable ? pos : neg).push_back(r.image);
    }
    if (pos.empty() || neg.empty()) {
      ++out.skipped;
      continue;
    }
    for (const auto& p : pos) {
      for (const auto& n : neg) out.triplets.push_back({original, p, n});
    }
  }
  return out;
}

}  // namespace privleak
