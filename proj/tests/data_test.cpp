/*
 * Copyright 2026 The maskfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "maskfed/data.hpp"
#include "maskfed/errors.hpp"
#include "maskfed/ops.hpp"
#include "maskfed/optim.hpp"
#include "maskfed/rng.hpp"

namespace maskfed {
namespace {

std::pair<Dataset, Dataset> toy(double noise, int per_class = 100, std::uint64_t seed = 1) {
  ToyDatasetSpec spec;
  spec.noise = noise;
  spec.train_per_class = per_class;
  auto rng = make_stream(seed, StreamPurpose::kData);
  return make_toy_dataset(spec, rng);
}

std::vector<int> balanced_labels(int classes, int per_class) {
  std::vector<int> labels;
  for (int c = 0; c < classes; ++c) labels.insert(labels.end(), per_class, c);
  return labels;
}

TEST(Toy, CountsAndBalance) {
  auto [train, test] = toy(0.1);
  EXPECT_EQ(train.size(), 400);
  EXPECT_EQ(test.size(), 200);
  EXPECT_EQ(train.images.shape(), (Shape{400, 1, 16, 16}));
  std::vector<int> hist(4);
  for (int l : train.labels) ++hist.at(l);
  for (int h : hist) EXPECT_EQ(h, 100);
}

TEST(Toy, ZeroNoiseCollapsesEachClass) {
  auto [train, test] = toy(0.0, 20);
  for (std::int64_t i = 0; i < train.size(); ++i) {
    for (std::int64_t j = i + 1; j < train.size(); ++j) {
      const bool same = train.image(i).same_bits(train.image(j));
      EXPECT_EQ(same, train.labels[i] == train.labels[j]) << i << " " << j;
    }
  }
}

TEST(Toy, TemplatesAreDistinct) {
  for (int a = 0; a < 10; ++a) {
    for (int b = a + 1; b < 10; ++b) EXPECT_NE(class_template(a, 4, 4), class_template(b, 4, 4));
  }
}

TEST(Toy, SplitsUseDifferentNoise) {
  auto [train, test] = toy(0.1, 50);
  EXPECT_FALSE(train.image(0).same_bits(test.image(0)));
  auto [again, unused] = toy(0.1, 50);
  EXPECT_TRUE(train.images.same_bits(again.images));
}

// Softmax regression on raw pixels, trained with the engine itself.
TEST(Toy, LinearProbeLearnsTheTask) {
  auto [train, test] = toy(0.1);
  const std::int64_t v = 256;
  auto weight = Tensor::zeros({v, 4}, DType::kFloat64, true);
  auto bias = Tensor::zeros({4}, DType::kFloat64, true);
  AdamW opt({weight, bias}, {.weight_decay = 0.0});
  auto flat = [v](const Dataset& ds) {
    std::vector<double> x(ds.images.data().begin(), ds.images.data().end());
    return Tensor::from({ds.size(), v}, std::move(x), DType::kFloat64);
  };
  auto xtr = flat(train), xte = flat(test);
  for (int step = 0; step < 200; ++step) {
    Graph g;
    auto logits = ops::add_row(g, ops::matmul(g, xtr, weight), bias);
    g.backward(ops::cross_entropy(g, logits, train.labels));
    opt.step(0.01);
    opt.zero_grad();
  }
  Graph g;
  auto logits = ops::add_row(g, ops::matmul(g, xte, weight), bias);
  int correct = 0;
  for (std::int64_t i = 0; i < test.size(); ++i) {
    int best = 0;
    for (int c = 1; c < 4; ++c) {
      if (logits.at(i * 4 + c) > logits.at(i * 4 + best)) best = c;
    }
    correct += best == test.labels[i];
  }
  EXPECT_GT(correct / static_cast<double>(test.size()), 0.9);
}

TEST(Toy, BinaryRoundTrip) {
  auto [train, test] = toy(0.1, 5);
  auto path = std::filesystem::temp_directory_path() / "maskfed_data_test.bin";
  save_binary_dataset(path, train);
  auto back = load_binary_dataset(path, 4);
  EXPECT_EQ(back.labels, train.labels);
  EXPECT_TRUE(back.images.same_bits(train.images));
  EXPECT_THROW(load_binary_dataset(path, 2), LabelError);
  std::filesystem::remove(path);
}

TEST(Partition, SingleClientGetsEverything) {
  auto labels = balanced_labels(4, 25);
  auto p = dirichlet_partition(labels, 1, 0.1, 3);
  for (int a : p.assignment) EXPECT_EQ(a, 0);
}

TEST(Partition, ConservesSamples) {
  auto labels = balanced_labels(10, 37);
  for (double beta : {0.05, 0.1, 1.0, 100.0}) {
    auto p = dirichlet_partition(labels, 13, beta, 7);
    auto clients = make_client_datasets(p, labels);
    std::int64_t total = 0;
    std::vector<int> seen(labels.size());
    for (const auto& cd : clients) {
      total += cd.size();
      for (auto i : cd.indices) ++seen[static_cast<std::size_t>(i)];
      for (auto [c, n] : cd.class_counts) {
        EXPECT_GE(c, 0);
        EXPECT_LT(c, 10);
      }
    }
    EXPECT_EQ(total, static_cast<std::int64_t>(labels.size()));
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(Partition, Deterministic) {
  auto labels = balanced_labels(10, 30);
  auto a = dirichlet_partition(labels, 8, 0.3, 11);
  auto b = dirichlet_partition(labels, 8, 0.3, 11);
  auto c = dirichlet_partition(labels, 8, 0.3, 12);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_NE(a.assignment, c.assignment);
}

TEST(Partition, LargeBetaIsNearIid) {
  auto labels = balanced_labels(10, 100);
  auto clients = make_client_datasets(dirichlet_partition(labels, 10, 1e6, 5), labels);
  for (const auto& cd : clients) {
    ASSERT_GT(cd.size(), 0);
    for (int c = 0; c < 10; ++c) {
      const double share = cd.class_counts.count(c) ? cd.class_counts.at(c) / double(cd.size()) : 0;
      EXPECT_NEAR(share, 0.1, 0.05) << "client " << cd.client_id << " class " << c;
    }
  }
}

TEST(Partition, SmallBetaMissesClasses) {
  auto labels = balanced_labels(10, 100);
  auto clients = make_client_datasets(dirichlet_partition(labels, 10, 0.1, 5), labels);
  EXPECT_TRUE(std::any_of(clients.begin(), clients.end(),
                          [](const ClientDataset& cd) { return cd.distinct_classes() < 10; }));
}

TEST(Partition, HeterogeneityFallsWithBeta) {
  auto labels = balanced_labels(10, 100);
  for (std::uint64_t seed : {1, 2, 3}) {
    auto tv = [&](double beta) {
      return mean_tv_distance(make_client_datasets(dirichlet_partition(labels, 10, beta, seed), labels), 10);
    };
    const double low = tv(0.1), mid = tv(1.0), high = tv(1e6);
    EXPECT_GT(low, mid) << "seed " << seed;
    EXPECT_GT(mid, high) << "seed " << seed;
  }
}

TEST(Partition, RejectsBadArguments) {
  auto labels = balanced_labels(2, 2);
  EXPECT_THROW(dirichlet_partition(labels, 3, 0.0, 1), ConfigError);
  EXPECT_THROW(dirichlet_partition(labels, 3, -1.0, 1), ConfigError);
  EXPECT_THROW(dirichlet_partition(labels, 0, 1.0, 1), ConfigError);
}

TEST(Partition, CsvHistogram) {
  auto labels = balanced_labels(3, 2);
  auto clients = make_client_datasets(dirichlet_partition(labels, 1, 1.0, 1), labels);
  EXPECT_EQ(partition_csv(clients, 3), "client,n_k,c_k,class_0,class_1,class_2\n0,6,3,2,2,2\n");
}

Tensor ramp_image() {
  std::vector<double> v(2 * 4 * 4);
  std::iota(v.begin(), v.end(), 1.0);
  return Tensor::from({2, 4, 4}, v, DType::kFloat64);
}

TEST(Augment, DisabledIsIdentity) {
  std::mt19937_64 rng(1);
  auto img = ramp_image();
  EXPECT_TRUE(augment(img, rng, {.enabled = false}).same_bits(img));
}

TEST(Augment, NeutralDrawIsIdentity) {
  auto img = ramp_image();
  EXPECT_TRUE(apply_augment(img, {}, 2).same_bits(img));
}

TEST(Augment, DoubleFlipRestores) {
  auto img = ramp_image();
  AugmentDraw flip{.flip = true};
  auto once = apply_augment(img, flip, 2);
  EXPECT_FALSE(once.same_bits(img));
  EXPECT_EQ(once.at(0), img.at(3));
  EXPECT_TRUE(apply_augment(once, flip, 2).same_bits(img));
}

TEST(Augment, ShiftPadsWithZeros) {
  auto img = ramp_image();
  auto shifted = apply_augment(img, {.shift_y = 0, .shift_x = 1}, 2);
  EXPECT_EQ(shifted.at(0), img.at(1));
  EXPECT_EQ(shifted.at(3), 0.0);
  EXPECT_THROW(apply_augment(img, {.shift_y = 3}, 2), DimensionError);
}

TEST(Augment, DrawsStayInRange) {
  std::mt19937_64 rng(3);
  int flips = 0;
  for (int i = 0; i < 2000; ++i) {
    auto d = draw_augment(rng, {});
    EXPECT_LE(std::abs(d.shift_x), 2);
    EXPECT_LE(std::abs(d.shift_y), 2);
    EXPECT_GE(d.brightness, 0.8);
    EXPECT_LE(d.brightness, 1.2);
    flips += d.flip;
  }
  EXPECT_NEAR(flips / 2000.0, 0.5, 0.05);
}

TEST(Batches, ShortFinalBatchKept) {
  std::vector<std::int64_t> idx(70);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(1);
  auto b = batches(idx, 32, rng);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 32u);
  EXPECT_EQ(b[1].size(), 32u);
  EXPECT_EQ(b[2].size(), 6u);
  std::vector<std::int64_t> all;
  for (auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, idx);
}

TEST(Batches, SeededOrder) {
  std::vector<std::int64_t> idx(50);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 a(9), b(9), c(10);
  EXPECT_EQ(batches(idx, 32, a), batches(idx, 32, b));
  EXPECT_NE(batches(idx, 32, a), batches(idx, 32, c));
}

TEST(Batches, EmptyAndInvalid) {
  std::mt19937_64 rng(1);
  EXPECT_TRUE(batches({}, 32, rng).empty());
  std::vector<std::int64_t> idx{1, 2};
  EXPECT_THROW(batches(idx, 0, rng), ConfigError);
}

TEST(Streams, KeyedSeedsDiffer) {
  auto base = derive_seed(1, StreamPurpose::kBatch, 3, 4, 5);
  EXPECT_EQ(base, derive_seed(1, StreamPurpose::kBatch, 3, 4, 5));
  EXPECT_NE(base, derive_seed(2, StreamPurpose::kBatch, 3, 4, 5));
  EXPECT_NE(base, derive_seed(1, StreamPurpose::kMask, 3, 4, 5));
  EXPECT_NE(base, derive_seed(1, StreamPurpose::kBatch, 4, 3, 5));
  EXPECT_NE(base, derive_seed(1, StreamPurpose::kBatch, 3, 4, 6));
}

}  // namespace
}  // namespace maskfed
