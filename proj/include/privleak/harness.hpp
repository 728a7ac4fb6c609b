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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "privleak/attack_sim.hpp"
#include "privleak/embedding_net.hpp"
#include "privleak/error.hpp"
#include "privleak/metrics.hpp"
#include "privleak/rank_stats.hpp"
#include "privleak/semsim.hpp"

namespace privleak {

// Evaluation pipeline: per-model leakage scores for each metric, leakage
// ranks, and rank correlation of every metric against a reference
// (human or proxy) recognizable fraction.

enum class Orientation { kHigherMeansMoreLeakage, kLowerMeansMoreLeakage };

enum class MetricKind { kMse, kPsnr, kSsim, kFid, kSemsim, kExternal };

struct MetricDescriptor {
  std::string name;
  MetricKind kind = MetricKind::kMse;
  Orientation orientation = Orientation::kLowerMeansMoreLeakage;

  bool pointwise() const { return kind != MetricKind::kFid; }
};

inline MetricDescriptor metric_by_name(const std::string& name) {
  using enum MetricKind;
  using enum Orientation;
  if (name == "mse") return {name, kMse, kLowerMeansMoreLeakage};
  if (name == "psnr") return {name, kPsnr, kHigherMeansMoreLeakage};
  if (name == "ssim") return {name, kSsim, kHigherMeansMoreLeakage};
  if (name == "fid") return {name, kFid, kLowerMeansMoreLeakage};
  if (name == "semsim") return {name, kSemsim, kLowerMeansMoreLeakage};
  if (name == "external") return {name, kExternal, kLowerMeansMoreLeakage};
  fail(ErrorCode::kConfiguration, "unknown metric '" + name + "'");
}

inline std::vector<MetricDescriptor> parse_metric_list(const std::string& csv) {
  std::vector<MetricDescriptor> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto m = metric_by_name(item);
    for (const auto& existing : out) {
      if (existing.name == m.name) fail(ErrorCode::kConfiguration, "metric listed twice: " + item);
    }
    out.push_back(std::move(m));
  }
  return out;
}

struct EvalContext {
  const EmbeddingNet* net = nullptr;  // required for semsim; FID embeds with it if set
  SsimConfig ssim;
  using ExternalFn = std::function<double(const Image& original, const Image& reconstruction)>;
  ExternalFn external;
};

// 8x8 luma thumbnail by area averaging over integer bin edges (64 values).
inline std::vector<double> pixel_embedding(const Image& img) {
  constexpr int kSide = 8;
  if (img.width() < kSide || img.height() < kSide) {
    fail(ErrorCode::kDimension, "image too small for the 8x8 pixel embedding");
  }
  const Image l = img.luma();
  std::vector<double> out;
  out.reserve(kSide * kSide);
  for (int by = 0; by < kSide; ++by) {
    const int y0 = by * l.height() / kSide, y1 = (by + 1) * l.height() / kSide;
    for (int bx = 0; bx < kSide; ++bx) {
      const int x0 = bx * l.width() / kSide, x1 = (bx + 1) * l.width() / kSide;
      double s = 0.0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) s += l.at(y, x);
      }
      out.push_back(s / static_cast<double>((y1 - y0) * (x1 - x0)));
    }
  }
  return out;
}

inline double pair_score(const MetricDescriptor& metric, const Image& x, const Image& x_bar,
                         const EvalContext& ctx) {
  switch (metric.kind) {
    case MetricKind::kMse: return mse(x, x_bar);
    case MetricKind::kPsnr: return psnr(x, x_bar);
    case MetricKind::kSsim: return ssim(x, x_bar, ctx.ssim);
    case MetricKind::kSemsim:
      if (!ctx.net) fail(ErrorCode::kConfiguration, "semsim requested without a network");
      return semsim_score(*ctx.net, x, x_bar);
    case MetricKind::kExternal:
      if (!ctx.external) fail(ErrorCode::kConfiguration, "external metric without distances");
      return ctx.external(x, x_bar);
    case MetricKind::kFid: break;
  }
  fail(ErrorCode::kConfiguration, metric.name + " is not a pointwise metric");
}

// Mean pairwise score over (x_i, x_bar_i); for FID, the Frechet distance
// between Gaussian fits of the embedded sets.
inline double info_leak(const MetricDescriptor& metric, std::span<const ImagePtr> originals,
                        std::span<const ImagePtr> reconstructions, const EvalContext& ctx = {}) {
  if (originals.size() != reconstructions.size()) {
    fail(ErrorCode::kPairing, "original and reconstruction lists differ in length");
  }
  if (originals.empty()) fail(ErrorCode::kPairing, "no image pairs");
  for (std::size_t i = 0; i < originals.size(); ++i) {
    require_same_shape(*originals[i], *reconstructions[i]);
  }
  if (metric.kind == MetricKind::kFid) {
    auto embed = [&](const Image& img) {
      return ctx.net ? ctx.net->forward(img) : pixel_embedding(img);
    };
    std::vector<std::vector<double>> fa, fb;
    for (std::size_t i = 0; i < originals.size(); ++i) {
      fa.push_back(embed(*originals[i]));
      fb.push_back(embed(*reconstructions[i]));
    }
    return frechet_distance(gaussian_stats(fa), gaussian_stats(fb));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    sum += pair_score(metric, *originals[i], *reconstructions[i], ctx);
  }
  return sum / static_cast<double>(originals.size());
}

using ScoreRow = std::vector<std::pair<std::string, double>>;

// One InfoLeak score per requested metric for a single model. An empty
// metric list yields an empty row and a warning on stderr.
inline ScoreRow privacy_leakage(const std::map<std::string, ImagePtr>& originals,
                                const std::vector<Reconstruction>& reconstructions,
                                const std::vector<MetricDescriptor>& metrics,
                                const EvalContext& ctx = {}) {
  ScoreRow row;
  if (metrics.empty()) {
    std::cerr << "warning: no metrics requested, score row is empty\n";
    return row;
  }
  std::vector<ImagePtr> xs, xbars;
  std::vector<std::string> missing;
  for (const auto& r : reconstructions) {
    const auto it = originals.find(r.image_id);
    if (it == originals.end()) {
      missing.push_back(r.image_id);
      continue;
    }
    xs.push_back(it->second);
    xbars.push_back(r.image);
  }
  if (!missing.empty()) {
    std::string msg = "reconstructions without originals:";
    for (const auto& m : missing) msg += " " + m;
    fail(ErrorCode::kIo, msg);
  }
  for (const auto& m : metrics) {
    if (m.kind == MetricKind::kSemsim && !ctx.net) {
      fail(ErrorCode::kConfiguration, "semsim requested without a network");
    }
  }
  for (const auto& m : metrics) row.emplace_back(m.name, info_leak(m, xs, xbars, ctx));
  return row;
}

// Rank 1 is the model that leaks most under the metric's orientation.
// PSNR infinities count as the most leakage; ties share average ranks.
inline std::vector<double> leakage_ranks(std::span<const double> scores, Orientation o) {
  std::vector<double> key(scores.begin(), scores.end());
  if (o == Orientation::kHigherMeansMoreLeakage) {
    for (double& v : key) v = -v;
  }
  return average_rank(key);
}

struct FaithfulnessEntry {
  std::string metric;
  std::optional<CorrelationResult> result;
  std::string error;  // set when the correlation is undefined
};

// Raw-sign rank correlation of each metric column against the reference.
// A constant column fails only that metric.
inline std::vector<FaithfulnessEntry> faithfulness(
    const std::vector<MetricDescriptor>& metrics,
    const std::vector<std::vector<double>>& columns, std::span<const double> reference) {
  if (columns.size() != metrics.size()) fail(ErrorCode::kDimension, "one column per metric required");
  if (reference.size() < 3) fail(ErrorCode::kInsufficientData, "faithfulness needs at least 3 models");
  std::vector<FaithfulnessEntry> out;
  for (std::size_t m = 0; m < metrics.size(); ++m) {
    FaithfulnessEntry e{metrics[m].name, std::nullopt, {}};
    try {
      e.result = correlate(columns[m], reference);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kUndefinedCorrelation) throw;
      e.error = err.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

struct ModelRow {
  std::string model_id;
  std::vector<double> scores;  // metric declaration order
  std::vector<double> ranks;
  std::map<std::string, double> references;  // e.g. "proxy_fraction" -> value
};

struct LeakageReport {
  std::vector<MetricDescriptor> metrics;
  // Reference column the correlations are computed against:
  // "proxy_fraction" or "human_fraction". Never mixed within one report.
  std::string reference_name;
  std::vector<ModelRow> rows;  // sorted by model id
  std::vector<FaithfulnessEntry> correlations;

  std::vector<double> column(std::size_t metric) const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.scores.at(metric));
    return out;
  }

  std::vector<double> reference_column() const {
    std::vector<double> out;
    for (const auto& r : rows) {
      const auto it = r.references.find(reference_name);
      if (it == r.references.end()) {
        fail(ErrorCode::kIncomplete, "model " + r.model_id + " has no " + reference_name + " value");
      }
      out.push_back(it->second);
    }
    return out;
  }

  std::size_t metric_index(const std::string& name) const {
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      if (metrics[i].name == name) return i;
    }
    fail(ErrorCode::kNotFound, "metric " + name + " not in report");
  }

  const FaithfulnessEntry& correlation(const std::string& name) const {
    for (const auto& c : correlations) {
      if (c.metric == name) return c;
    }
    fail(ErrorCode::kNotFound, "no correlation for metric " + name);
  }

  void compute_ranks() {
    for (auto& r : rows) r.ranks.assign(metrics.size(), 0.0);
    if (rows.empty()) return;
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      const auto ranks = leakage_ranks(column(m), metrics[m].orientation);
      for (std::size_t k = 0; k < rows.size(); ++k) rows[k].ranks[m] = ranks[k];
    }
  }

  void compute_correlations() {
    correlations = faithfulness(metrics, [&] {
      std::vector<std::vector<double>> cols;
      for (std::size_t m = 0; m < metrics.size(); ++m) cols.push_back(column(m));
      return cols;
    }(), reference_column());
  }
};

// model id -> reference recognizable fraction.
using ReferenceScores = std::map<std::string, double>;

inline ReferenceScores proxy_reference(const Benchmark& bench) {
  ReferenceScores out;
  for (const auto& [id, recs] : bench.models) out[id] = bench.proxy_fraction(id);
  return out;
}

inline constexpr std::string_view kProxyReference = "proxy_fraction";
inline constexpr std::string_view kHumanReference = "human_fraction";

// Scores every model of the benchmark. Every (model, metric) cell must be
// computable or the whole call fails. Correlations against reference_name
// are filled when that reference exists and at least 3 models do.
inline LeakageReport build_report(const Benchmark& bench, const std::vector<MetricDescriptor>& metrics,
                                  const EvalContext& ctx,
                                  const std::map<std::string, ReferenceScores>& references = {},
                                  const std::string& reference_name = std::string(kProxyReference)) {
  LeakageReport report;
  report.metrics = metrics;
  report.reference_name = reference_name;
  for (const auto& [model_id, recs] : bench.models) {
    ModelRow row;
    row.model_id = model_id;
    for (auto& [name, score] : privacy_leakage(bench.originals, recs, metrics, ctx)) {
      row.scores.push_back(score);
    }
    if (row.scores.size() != metrics.size()) {
      fail(ErrorCode::kIncomplete, "model " + model_id + " is missing metric scores");
    }
    for (const auto& [name, scores] : references) {
      const auto it = scores.find(model_id);
      if (it == scores.end()) fail(ErrorCode::kIncomplete, "no " + name + " value for " + model_id);
      row.references[name] = it->second;
    }
    report.rows.push_back(std::move(row));
  }
  report.compute_ranks();
  if (references.contains(reference_name) && report.rows.size() >= 3 && !metrics.empty()) {
    report.compute_correlations();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report files: CSV score table and JSON correlation summary.

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string report_csv(const LeakageReport& report) {
  std::string out = "model_id";
  for (const auto& m : report.metrics) out += "," + m.name;
  for (const auto& m : report.metrics) out += ",rank_" + m.name;
  std::vector<std::string> refs;
  if (!report.rows.empty()) {
    for (const auto& [name, v] : report.rows.front().references) refs.push_back(name);
  }
  for (const auto& name : refs) out += "," + name;
  out += "\n";
  for (const auto& r : report.rows) {
    out += r.model_id;
    for (double s : r.scores) out += "," + format_number(s);
    for (double s : r.ranks) out += "," + format_number(s);
    for (const auto& name : refs) {
      const auto it = r.references.find(name);
      if (it == r.references.end()) fail(ErrorCode::kIncomplete, "ragged reference column " + name);
      out += "," + format_number(it->second);
    }
    out += "\n";
  }
  return out;
}

// Rank columns are recomputed rather than trusted.
inline LeakageReport parse_report_csv(const std::string& text,
                                      const std::string& reference_name = std::string(kProxyReference)) {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kFormat, "empty report");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  const auto header = split(line);
  if (header.empty() || header[0] != "model_id") fail(ErrorCode::kFormat, "report must start with model_id");
  LeakageReport report;
  report.reference_name = reference_name;
  std::vector<int> role(header.size(), -1);  // metric index, -2 rank, -3 reference
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h.starts_with("rank_")) {
      role[c] = -2;
    } else if (h.ends_with("_fraction")) {
      role[c] = -3;
    } else {
      role[c] = static_cast<int>(report.metrics.size());
      report.metrics.push_back(metric_by_name(h));
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) fail(ErrorCode::kFormat, "ragged report row: " + line);
    ModelRow row;
    row.model_id = cells[0];
    row.scores.assign(report.metrics.size(), 0.0);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0') fail(ErrorCode::kFormat, "bad number '" + cells[c] + "'");
      if (role[c] >= 0) {
        row.scores[static_cast<std::size_t>(role[c])] = v;
      } else if (role[c] == -3) {
        row.references[header[c]] = v;
      }
    }
    report.rows.push_back(std::move(row));
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const ModelRow& a, const ModelRow& b) { return a.model_id < b.model_id; });
  report.compute_ranks();
  return report;
}

inline nlohmann::ordered_json correlations_json(const LeakageReport& report) {
  nlohmann::ordered_json j;
  j["reference"] = report.reference_name;
  j["n_models"] = report.rows.size();
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& c : report.correlations) {
    if (c.result) {
      metrics[c.metric] = {{"rho", c.result->rho}, {"tau", c.result->tau}, {"n", c.result->n}};
    } else {
      metrics[c.metric] = {{"error", c.error}};
    }
  }
  j["metrics"] = metrics;
  return j;
}

// ---------------------------------------------------------------------------
// Labeled datasets, SemSim training from benchmarks, leave-one-out.

inline LabelMap proxy_labels(const Benchmark& bench) {
  LabelMap out;
  for (const auto& [model_id, recs] : bench.models) {
    for (const auto& r : recs) {
      if (!r.proxy_label) {
        fail(ErrorCode::kIncomplete, "no proxy label for " + model_id + "/" + r.image_id);
      }
      out[{model_id, r.image_id}] = *r.proxy_label;
    }
  }
  return out;
}

// Recognizable fraction per model; every reconstruction must be labeled.
inline ReferenceScores label_fractions(const Benchmark& bench, const LabelMap& labels) {
  ReferenceScores out;
  for (const auto& [model_id, recs] : bench.models) {
    std::size_t hits = 0;
    for (const auto& r : recs) {
      const auto it = labels.find({model_id, r.image_id});
      if (it == labels.end()) fail(ErrorCode::kIncomplete, "unlabeled " + model_id + "/" + r.image_id);
      hits += it->second ? 1 : 0;
    }
    out[model_id] = static_cast<double>(hits) / static_cast<double>(recs.size());
  }
  return out;
}

struct LabeledDataset {
  std::string name;
  Benchmark bench;
  LabelMap labels;
  std::string reference_name = std::string(kProxyReference);
};

// Reconstructions without a label are left out of training.
inline TripletSet dataset_triplets(const LabeledDataset& ds) {
  std::map<std::string, std::vector<LabeledReconstruction>> recs;
  for (const auto& [model_id, list] : ds.bench.models) {
    for (const auto& r : list) {
      const auto it = ds.labels.find({model_id, r.image_id});
      if (it == ds.labels.end()) continue;
      recs[r.image_id].push_back({r.image, it->second});
    }
  }
  return build_triplets(ds.bench.originals, recs);
}

// Seeded subsample of round(fraction * size) triplets, order preserved.
inline std::vector<Triplet> subsample_triplets(std::span<const Triplet> triplets, double fraction,
                                               std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) fail(ErrorCode::kConfiguration, "fraction must be in (0, 1]");
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(triplets.size())));
  std::vector<std::size_t> idx(triplets.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(std::max<std::size_t>(keep, triplets.empty() ? 0 : 1));
  std::sort(idx.begin(), idx.end());
  std::vector<Triplet> out;
  for (auto i : idx) out.push_back(triplets[i]);
  return out;
}

struct FoldReport {
  std::string held_out;
  std::optional<LeakageReport> report;
  std::vector<double> epoch_loss;
  std::size_t train_triplets = 0;
  std::string error;
};

// Trains SemSim on the union of the training datasets' triplets and
// evaluates every metric (plus semsim) on the held-out dataset.
inline FoldReport evaluate_fold(std::span<const LabeledDataset* const> train_sets,
                                const LabeledDataset& held_out, const TrainConfig& cfg,
                                std::vector<MetricDescriptor> metrics, const EvalContext& base_ctx = {}) {
  FoldReport fold;
  fold.held_out = held_out.name;
  std::vector<Triplet> triplets;
  for (const auto* ds : train_sets) {
    auto t = dataset_triplets(*ds);
    triplets.insert(triplets.end(), t.triplets.begin(), t.triplets.end());
  }
  fold.train_triplets = triplets.size();
  if (triplets.empty()) {
    fold.error = "fold " + held_out.name + " has no training triplets";
    return fold;
  }
  TrainResult trained = train(triplets, cfg);
  fold.epoch_loss = trained.epoch_loss;
  if (std::none_of(metrics.begin(), metrics.end(),
                   [](const MetricDescriptor& m) { return m.kind == MetricKind::kSemsim; })) {
    metrics.push_back(metric_by_name("semsim"));
  }
  EvalContext ctx = base_ctx;
  ctx.net = &trained.net;
  fold.report = build_report(held_out.bench, metrics, ctx,
                             {{held_out.reference_name, label_fractions(held_out.bench, held_out.labels)}},
                             held_out.reference_name);
  return fold;
}

// One fold per dataset: train on all the others, evaluate on it. A fold
// without training triplets records an error; the other folds proceed.
inline std::vector<FoldReport> leave_one_out(const std::vector<LabeledDataset>& datasets,
                                             const TrainConfig& cfg,
                                             const std::vector<MetricDescriptor>& metrics,
                                             const EvalContext& base_ctx = {}) {
  if (datasets.size() < 2) fail(ErrorCode::kInsufficientData, "leave-one-out needs at least 2 datasets");
  std::vector<FoldReport> folds;
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    std::vector<const LabeledDataset*> train_sets;
    for (std::size_t j = 0; j < datasets.size(); ++j) {
      if (j != k) train_sets.push_back(&datasets[j]);
    }
    try {
      folds.push_back(evaluate_fold(train_sets, datasets[k], cfg, metrics, base_ctx));
    } catch (const Error& e) {
      FoldReport failed;
      failed.held_out = datasets[k].name;
      failed.error = e.what();
      folds.push_back(std::move(failed));
    }
  }
  return folds;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg = j.value("preset", std::string()) == "large" ? TrainConfig::large_preset() : TrainConfig{};
  cfg.margin = j.value("margin", cfg.margin);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  const auto loss = j.value("loss", std::string("triplet"));
  if (loss == "triplet") {
    cfg.loss = LossKind::kTriplet;
  } else if (loss == "contrastive") {
    cfg.loss = LossKind::kContrastive;
  } else {
    fail(ErrorCode::kConfiguration, "unknown loss '" + loss + "'");
  }
  cfg.conv1_channels = j.value("conv1_channels", cfg.conv1_channels);
  cfg.conv2_channels = j.value("conv2_channels", cfg.conv2_channels);
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  cfg.validate();
  return cfg;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  try {
    return train_config_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "train config: " + std::string(e.what()));
  }
}

}  // namespace privleak
