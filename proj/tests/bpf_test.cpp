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
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "maskfed/bpf.hpp"
#include "maskfed/errors.hpp"
#include "maskfed/selftest.hpp"

namespace maskfed {
namespace {

constexpr std::int64_t kDim = 3;
constexpr std::int64_t kKept = 2;

// A pool as local training would leave it: every sample once per epoch.
// Feature values encode (sample, epoch) so records can be traced back.
std::vector<PatchFeatureRecord> make_pool(const std::map<int, std::int64_t>& counts, int epochs) {
  std::vector<PatchFeatureRecord> pool;
  for (int e = 0; e < epochs; ++e) {
    int sample = 0;
    for (auto [cls, n] : counts) {
      for (std::int64_t i = 0; i < n; ++i, ++sample) {
        PatchFeatureRecord r;
        r.client_id = 4;
        r.label = cls;
        r.epoch = e;
        r.kept_indices = {sample % 5, 5 + sample % 3};
        r.features = Tensor::full({kKept + 1, kDim}, sample * 10 + e, DType::kFloat32);
        pool.push_back(std::move(r));
      }
    }
  }
  return pool;
}

std::map<int, std::int64_t> epochs_by_class(const BalancedFeatureSet& set, int epoch) {
  std::map<int, std::int64_t> out;
  for (const auto& r : set.records) out[r.label] += r.epoch == epoch;
  return out;
}

TEST(Median, Examples) {
  EXPECT_EQ(class_median({{0, 6}, {1, 3}, {2, 1}}), 3);
  EXPECT_EQ(class_median({{0, 5}}), 5);
  EXPECT_EQ(class_median({{0, 4}, {1, 2}}), 2);
  EXPECT_EQ(class_median({{0, 4}, {1, 0}, {2, 2}}), 2);
  EXPECT_THROW(class_median({}), EmptyClientError);
  EXPECT_THROW(class_median({{3, 0}}), EmptyClientError);
}

TEST(Balance, ThreeClassExample) {
  std::map<int, std::int64_t> counts{{0, 6}, {1, 3}, {2, 1}};
  auto pool = make_pool(counts, 3);
  std::mt19937_64 rng(1);
  auto set = median_balance(4, pool, counts, 3, rng);
  EXPECT_EQ(set.median_used, 3);
  EXPECT_EQ(set.per_class_count, (std::map<int, std::int64_t>{{0, 3}, {1, 3}, {2, 3}}));
  EXPECT_EQ(set.records.size(), 9u);
  auto final_counts = epochs_by_class(set, 2);
  EXPECT_EQ(final_counts[0], 3);
  EXPECT_EQ(final_counts[1], 3);
  EXPECT_EQ(final_counts[2], 1);
  std::set<int> c_epochs;
  for (const auto& r : set.records) {
    if (r.label == 2) c_epochs.insert(r.epoch);
  }
  EXPECT_EQ(c_epochs, (std::set<int>{0, 1, 2}));
}

TEST(Balance, SingleClassKeepsFinalEpoch) {
  std::map<int, std::int64_t> counts{{7, 5}};
  for (int epochs : {1, 2, 4}) {
    auto pool = make_pool(counts, epochs);
    std::mt19937_64 rng(2);
    auto set = median_balance(4, pool, counts, class_median(counts), rng);
    EXPECT_EQ(set.median_used, 5);
    EXPECT_EQ(set.per_class_count.at(7), 5);
    for (const auto& r : set.records) EXPECT_EQ(r.epoch, epochs - 1);
  }
}

TEST(Balance, LowerMedianOfTwo) {
  std::map<int, std::int64_t> counts{{0, 9}, {1, 1}};
  auto pool = make_pool(counts, 2);
  std::mt19937_64 rng(3);
  auto set = median_balance(4, pool, counts, class_median(counts), rng);
  EXPECT_EQ(set.median_used, 1);
  EXPECT_EQ(set.per_class_count, (std::map<int, std::int64_t>{{0, 1}, {1, 1}}));
  for (const auto& r : set.records) EXPECT_EQ(r.epoch, 1);
}

TEST(Balance, MinorityShortfallIsNotDuplicated) {
  std::map<int, std::int64_t> counts{{0, 10}, {1, 8}, {2, 1}};
  auto pool = make_pool(counts, 2);
  std::mt19937_64 rng(4);
  auto set = median_balance(4, pool, counts, class_median(counts), rng);
  EXPECT_EQ(set.per_class_count.at(2), 2);
  EXPECT_EQ(set.per_class_count.at(0), 8);
  EXPECT_EQ(set.per_class_count.at(1), 8);
}

TEST(Balance, RecordsComeFromThePool) {
  std::map<int, std::int64_t> counts{{0, 7}, {1, 4}, {2, 2}, {3, 1}};
  auto pool = make_pool(counts, 3);
  std::mt19937_64 rng(5);
  auto set = median_balance(4, pool, counts, class_median(counts), rng);
  std::set<const TensorImpl*> members;
  for (const auto& r : pool) members.insert(r.features.impl().get());
  std::set<const TensorImpl*> used;
  for (const auto& r : set.records) {
    EXPECT_TRUE(members.count(r.features.impl().get()));
    EXPECT_TRUE(used.insert(r.features.impl().get()).second) << "record duplicated";
    EXPECT_LE(set.per_class_count.at(r.label), set.median_used);
  }
}

TEST(Balance, MajorityClassesHitTheMedian) {
  std::mt19937_64 gen(6);
  for (int t = 0; t < 200; ++t) {
    std::map<int, std::int64_t> counts;
    for (int c = 0; c < 6; ++c) {
      auto n = std::uniform_int_distribution<std::int64_t>(0, 12)(gen);
      if (n) counts[c] = n;
    }
    if (counts.empty()) continue;
    const int epochs = std::uniform_int_distribution<int>(1, 4)(gen);
    auto pool = make_pool(counts, epochs);
    auto median = class_median(counts);
    auto set = median_balance(4, pool, counts, median, gen);
    for (auto [cls, n] : counts) {
      if (n >= median) EXPECT_EQ(set.per_class_count.at(cls), median);
      EXPECT_LE(set.per_class_count.at(cls), median);
    }
  }
}

TEST(Balance, DeterministicForFixedStream) {
  std::map<int, std::int64_t> counts{{0, 9}, {1, 5}, {2, 2}};
  auto pool = make_pool(counts, 3);
  std::mt19937_64 a(8), b(8);
  auto x = median_balance(4, pool, counts, 5, a);
  auto y = median_balance(4, pool, counts, 5, b);
  ASSERT_EQ(x.records.size(), y.records.size());
  for (std::size_t i = 0; i < x.records.size(); ++i) {
    EXPECT_EQ(x.records[i].features.impl(), y.records[i].features.impl());
  }
}

TEST(Balance, BruteForceOracle) {
  std::mt19937_64 rng(20);
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    auto check = check_median_instance(rng);
    if (!check.passed) {
      ++failures;
      ADD_FAILURE() << check.detail;
    }
  }
  EXPECT_EQ(failures, 0);
}

TEST(Balance, ReferenceMatchesHandExamples) {
  EXPECT_EQ(reference_balance_counts({{0, 6}, {1, 3}, {2, 1}}, 3),
            (std::map<int, std::int64_t>{{0, 3}, {1, 3}, {2, 3}}));
  EXPECT_EQ(reference_balance_counts({{0, 9}, {1, 1}}, 2),
            (std::map<int, std::int64_t>{{0, 1}, {1, 1}}));
}

TEST(Collect, OneRecordPerSamplePerEpoch) {
  FeaturePool pool(3);
  MaskedBatch batch;
  batch.kept = kKept;
  batch.patches = Tensor::zeros({5, kKept, 4});
  batch.labels = {0, 1, 2, 1, 0};
  for (int i = 0; i < 5; ++i) batch.kept_indices.insert(batch.kept_indices.end(), {i, i + 5});
  for (int epoch = 0; epoch < 3; ++epoch) {
    for (int half = 0; half < 2; ++half) {
      std::vector<double> v(5 * (kKept + 1) * kDim, epoch + 0.5);
      pool.collect(epoch, Tensor::from({5, kKept + 1, kDim}, v, DType::kFloat64), batch);
    }
  }
  ASSERT_EQ(pool.size(), 30u);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& r = pool.records()[i];
    EXPECT_EQ(r.client_id, 3);
    EXPECT_EQ(r.label, batch.labels[i % 5]);
    EXPECT_EQ(r.features.dtype(), DType::kFloat32);
    EXPECT_FALSE(r.features.requires_grad());
    EXPECT_EQ(r.kept_indices, (std::vector<std::int64_t>{static_cast<std::int64_t>(i % 5),
                                                         static_cast<std::int64_t>(i % 5 + 5)}));
  }
}

TEST(Collect, PooledFeaturesAreDetached) {
  FeaturePool pool(0);
  MaskedBatch batch;
  batch.kept = 1;
  batch.patches = Tensor::zeros({1, 1, 4});
  batch.labels = {1};
  batch.kept_indices = {0};
  auto source = Tensor::full({1, 2, kDim}, 2.0, DType::kFloat32, true);
  pool.collect(0, source, batch);
  auto stored = pool.records()[0].features;
  stored.mutable_data()[0] = 99.0;
  EXPECT_EQ(source.at(0), 2.0);
  EXPECT_NE(stored.impl(), source.impl());
  EXPECT_FALSE(source.has_grad());
  EXPECT_THROW(pool.collect(0, Tensor::zeros({1, 3, kDim}), batch), DimensionError);
}

TEST(Wire, EmptySetIsHeaderOnly) {
  BalancedFeatureSet set;
  set.client_id = 12;
  set.median_used = 4;
  auto bytes = serialize_bpf(set);
  EXPECT_EQ(bytes.size(), kBpfHeaderBytes);
  EXPECT_EQ(bytes[0], kBpfVersion);
  auto back = deserialize_bpf(bytes);
  EXPECT_EQ(back.client_id, 12);
  EXPECT_TRUE(back.records.empty());
  EXPECT_TRUE(back.per_class_count.empty());
}

TEST(Wire, RoundTripIsBitExact) {
  std::map<int, std::int64_t> counts{{0, 4}, {2, 3}};
  auto pool = make_pool(counts, 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise;
  for (auto& r : pool) {
    for (auto& x : r.features.mutable_data()) x = static_cast<float>(noise(rng));
  }
  auto set = median_balance(4, pool, counts, class_median(counts), rng);
  auto bytes = serialize_bpf(set);
  EXPECT_EQ(bytes.size(), bpf_payload_size(set.records.size(), kKept, kDim));
  EXPECT_EQ(bytes.size(), 21 + set.records.size() * (4 + 4 * kKept + 4 * (kKept + 1) * kDim));
  auto back = deserialize_bpf(bytes);
  EXPECT_EQ(back.client_id, set.client_id);
  EXPECT_EQ(back.median_used, set.median_used);
  EXPECT_EQ(back.per_class_count, set.per_class_count);
  ASSERT_EQ(back.records.size(), set.records.size());
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    EXPECT_EQ(back.records[i].label, set.records[i].label);
    EXPECT_EQ(back.records[i].kept_indices, set.records[i].kept_indices);
    EXPECT_TRUE(back.records[i].features.same_bits(set.records[i].features));
  }
  EXPECT_EQ(serialize_bpf(back), bytes);
}

TEST(Wire, RejectsCorruptPayloads) {
  std::map<int, std::int64_t> counts{{0, 2}};
  auto pool = make_pool(counts, 1);
  std::mt19937_64 rng(1);
  auto bytes = serialize_bpf(median_balance(4, pool, counts, 2, rng));
  auto bad_version = bytes;
  bad_version[0] = 9;
  EXPECT_THROW(deserialize_bpf(bad_version), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_bpf(trailing), FormatError);
  bytes.resize(bytes.size() - 1);
  EXPECT_THROW(deserialize_bpf(bytes), FormatError);
}

}  // namespace
}  // namespace maskfed
