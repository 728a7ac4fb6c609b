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
#include <memory>
#include <vector>

#include "gradcheck.hpp"
#include "privleak/semsim.hpp"
#include "support.hpp"

namespace privleak {
namespace {

ImagePtr shared(Image img) { return std::make_shared<const Image>(std::move(img)); }

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.conv1_channels = 4;
  cfg.conv2_channels = 8;
  cfg.embed_dim = 16;
  cfg.batch_size = 4;
  cfg.epochs = 5;
  cfg.seed = 1;
  return cfg;
}

EmbeddingNet tiny_net(std::uint64_t seed, int channels = 1) {
  Architecture a;
  a.width = 8;
  a.height = 8;
  a.channels = channels;
  a.conv1_channels = 4;
  a.conv2_channels = 8;
  a.embed_dim = 16;
  return EmbeddingNet::init(a, seed);
}

std::vector<Triplet> random_triplets(Rng& rng, std::size_t n, int channels = 1) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({shared(test::random_image(rng, 8, 8, channels)), shared(test::random_image(rng, 8, 8, channels)),
                   shared(test::random_image(rng, 8, 8, channels))});
  }
  return out;
}

// Positives are noisy anchors; negatives are unrelated noise.
std::vector<Triplet> separable_triplets(Rng& rng, std::size_t n) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image anchor(8, 8, 1);
    const double level = rng.uniform(0.2, 0.8);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) anchor.at(y, x) = std::clamp(level + 0.2 * std::sin(x + y * 0.5 + i), 0.0, 1.0);
    }
    Image pos = anchor;
    for (double& v : pos.pixels()) v = std::clamp(v + 0.02 * rng.normal(), 0.0, 1.0);
    out.push_back({shared(anchor), shared(pos), shared(test::random_image(rng, 8, 8, 1))});
  }
  return out;
}

TEST(Losses, TripletExamples) {
  EXPECT_EQ(triplet_loss(0.2, 1.5, 1.0), 0.0);
  EXPECT_EQ(triplet_loss(0.7, 0.7, 1.0), 1.0);
  EXPECT_NEAR(triplet_loss(1.0, 0.3, 1.0), 1.7, 1e-15);
  EXPECT_THROW(triplet_loss(-0.1, 0.3, 1.0), Error);
  EXPECT_THROW(triplet_loss(0.1, -0.3, 1.0), Error);
}

TEST(Losses, TripletMonotoneInMargin) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const double dp = rng.uniform(0, 2), dn = rng.uniform(0, 2);
    const double m1 = rng.uniform(0, 2), m2 = m1 + rng.uniform(0, 1);
    EXPECT_LE(triplet_loss(dp, dn, m1), triplet_loss(dp, dn, m2));
  }
}

TEST(Losses, ContrastiveExamples) {
  EXPECT_EQ(contrastive_loss(0.0, true, 1.0), 0.0);
  EXPECT_EQ(contrastive_loss(1.2, false, 1.0), 0.0);
  EXPECT_EQ(contrastive_loss(1.0, false, 1.0), 0.0);
  EXPECT_NEAR(contrastive_loss(0.4, false, 1.0), 0.36, 1e-15);
  EXPECT_NEAR(contrastive_loss(0.4, true, 1.0), 0.16, 1e-15);
  EXPECT_THROW(contrastive_loss(-1.0, true, 1.0), Error);
}

TEST(SemsimScore, PropertiesOfUnitEmbeddings) {
  Rng rng(2);
  const auto net = tiny_net(4);
  for (int t = 0; t < 20; ++t) {
    const Image a = test::random_image(rng, 8, 8, 1);
    const Image b = test::random_image(rng, 8, 8, 1);
    EXPECT_NEAR(semsim_score(net, a, a), 0.0, 1e-9);
    const double s = semsim_score(net, a, b);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 2.0);
    EXPECT_NEAR(s, semsim_score(net, b, a), 1e-12);
    const double cs = cosine_similarity(net.forward(a), net.forward(b));
    EXPECT_NEAR(s, std::sqrt(std::max(0.0, 2.0 * (1.0 - cs))), 1e-9);
  }
  EXPECT_THROW(semsim_score(net, Image(8, 8, 1), Image(4, 4, 1)), Error);
}

TEST(GradBatch, MatchesFiniteDifferencesTriplet) {
  Rng rng(3);
  auto cfg = tiny_config();
  for (std::uint64_t seed : {1u, 2u}) {
    const auto net = tiny_net(seed);
    const auto batch = random_triplets(rng, 1 + seed * 2);
    const auto r = oracle::finite_difference_check(net, batch, cfg);
    EXPECT_EQ(r.checked, net.parameter_count());
    EXPECT_LT(r.max_rel_error, 1e-4) << "worst parameter " << r.worst_index;
  }
}

TEST(GradBatch, KinkSkippingAccountsForEveryParameter) {
  Rng rng(5);
  const auto cfg = tiny_config();
  const auto net = tiny_net(4);
  const auto batch = random_triplets(rng, 3);
  const auto coarse = oracle::finite_difference_check(net, batch, cfg, 1e-2, 1e-6, true);
  EXPECT_EQ(coarse.checked + coarse.skipped_at_kink, net.parameter_count());
  EXPECT_GT(coarse.skipped_at_kink, 0u);
  const auto fine = oracle::finite_difference_check(net, batch, cfg, 1e-5, 1e-6, true);
  EXPECT_LT(fine.max_rel_error, 1e-4);
}

TEST(GradBatch, MatchesFiniteDifferencesContrastiveRgb) {
  Rng rng(4);
  auto cfg = tiny_config();
  cfg.loss = LossKind::kContrastive;
  cfg.margin = 1.5;
  const auto net = tiny_net(7, 3);
  const auto batch = random_triplets(rng, 3, 3);
  const auto r = oracle::finite_difference_check(net, batch, cfg);
  EXPECT_LT(r.max_rel_error, 1e-4) << "worst parameter " << r.worst_index;
}

TEST(GradBatch, LossIsSumOfTripletLosses) {
  Rng rng(5);
  const auto net = tiny_net(1);
  const auto batch = random_triplets(rng, 4);
  const auto cfg = tiny_config();
  EXPECT_NEAR(grad_batch(net, batch, cfg).loss, oracle::batch_loss(net, batch, cfg), 1e-12);
}

TEST(GradBatch, InactiveHingeGivesZeroGradient) {
  Rng rng(6);
  const auto net = tiny_net(1);
  auto batch = random_triplets(rng, 3);
  // Positive identical to the anchor and margin 0: hinge is max(-d_neg, 0) = 0.
  for (auto& t : batch) t.positive = t.anchor;
  auto cfg = tiny_config();
  cfg.margin = 0.0;
  const auto g = grad_batch(net, batch, cfg);
  EXPECT_EQ(g.loss, 0.0);
  for (double v : g.grad) EXPECT_EQ(v, 0.0);
}

TEST(GradBatch, DuplicatedTripletDoublesGradient) {
  Rng rng(7);
  const auto net = tiny_net(2);
  const auto one = random_triplets(rng, 1);
  const std::vector<Triplet> two = {one[0], one[0]};
  const auto cfg = tiny_config();
  const auto g1 = grad_batch(net, one, cfg);
  const auto g2 = grad_batch(net, two, cfg);
  EXPECT_EQ(g2.loss, 2.0 * g1.loss);
  for (std::size_t i = 0; i < g1.grad.size(); ++i) EXPECT_NEAR(g2.grad[i], 2.0 * g1.grad[i], 1e-15 + 1e-13 * std::abs(g1.grad[i]));
}

TEST(GradBatch, Errors) {
  Rng rng(8);
  const auto net = tiny_net(2);
  const auto cfg = tiny_config();
  EXPECT_THROW(grad_batch(net, std::vector<Triplet>{}, cfg), Error);
  std::vector<Triplet> bad = {{shared(Image(8, 8, 1)), shared(Image(8, 8, 1)), shared(Image(4, 4, 1))}};
  try {
    grad_batch(net, bad, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimension);
  }
}

TEST(Train, ProgressAndSeparationOnToyData) {
  Rng rng(9);
  const auto triplets = separable_triplets(rng, 20);
  auto cfg = tiny_config();
  cfg.epochs = 30;
  cfg.batch_size = 5;
  cfg.learning_rate = 0.05;
  const auto result = train(triplets, cfg);
  ASSERT_EQ(result.epoch_loss.size(), 30u);
  EXPECT_LT(result.epoch_loss.back(), result.epoch_loss.front());
  double pos = 0.0, neg = 0.0;
  for (const auto& t : triplets) {
    pos += semsim_score(result.net, *t.anchor, *t.positive);
    neg += semsim_score(result.net, *t.anchor, *t.negative);
  }
  EXPECT_LT(pos / 20, neg / 20);
}

TEST(Train, DeterministicGivenSeed) {
  Rng rng(10);
  const auto triplets = random_triplets(rng, 10);
  const auto cfg = tiny_config();
  const auto a = train(triplets, cfg);
  const auto b = train(triplets, cfg);
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  auto other = cfg;
  other.seed = 2;
  EXPECT_FALSE(train(triplets, other).net == a.net);
}

TEST(Train, ZeroMarginIdenticalPositivesHasZeroLoss) {
  Rng rng(11);
  auto triplets = random_triplets(rng, 8);
  for (auto& t : triplets) t.positive = t.anchor;
  auto cfg = tiny_config();
  cfg.margin = 0.0;
  const auto result = train(triplets, cfg);
  EXPECT_LE(result.epoch_loss.back(), 1e-6);
  EXPECT_EQ(result.net, EmbeddingNet::init(result.net.architecture(), cfg.seed));
}

TEST(Train, Errors) {
  const auto cfg = tiny_config();
  try {
    train(std::vector<Triplet>{}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientData);
  }
  Rng rng(12);
  const auto triplets = random_triplets(rng, 4);
  auto bad = cfg;
  bad.margin = -1.0;
  EXPECT_THROW(train(triplets, bad), Error);
  Image poisoned = *triplets[0].anchor;
  poisoned.pixels()[5] = std::nan("");
  auto diverging = triplets;
  diverging[0].anchor = shared(poisoned);
  try {
    train(diverging, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, PaperPreset) {
  const auto p = TrainConfig::large_preset();
  EXPECT_EQ(p.learning_rate, 0.1);
  EXPECT_EQ(p.batch_size, 128);
  EXPECT_EQ(p.epochs, 200);
  EXPECT_EQ(p.margin, 1.0);
}

TEST(BuildTriplets, CrossProductsAndSkips) {
  auto img = [] { return shared(Image(4, 4, 1)); };
  std::map<std::string, ImagePtr> originals = {{"a", img()}, {"b", img()}, {"c", img()}, {"d", img()}};
  std::map<std::string, std::vector<LabeledReconstruction>> recs;
  auto add = [&](const std::string& id, int pos, int neg) {
    for (int i = 0; i < pos; ++i) recs[id].push_back({img(), true});
    for (int i = 0; i < neg; ++i) recs[id].push_back({img(), false});
  };
  add("a", 2, 3);
  EXPECT_EQ(build_triplets({{"a", originals["a"]}}, recs).triplets.size(), 6u);
  recs.clear();
  add("a", 1, 1);
  add("b", 0, 2);
  add("c", 2, 2);
  add("d", 3, 0);
  const auto set = build_triplets(originals, recs);
  EXPECT_EQ(set.triplets.size(), 5u);
  EXPECT_EQ(set.skipped, 2u);
  for (const auto& t : set.triplets) {
    bool pos_found = false, neg_found = false;
    for (const auto& [id, list] : recs) {
      for (const auto& r : list) {
        if (r.image == t.positive) pos_found = r.recognizable && originals[id] == t.anchor;
        if (r.image == t.negative) neg_found = !r.recognizable && originals[id] == t.anchor;
      }
    }
    EXPECT_TRUE(pos_found && neg_found);
  }
}

}  // namespace
}  // namespace privleak
