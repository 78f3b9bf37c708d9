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

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "maskfed/tensor.hpp"
#include "maskfed/vit.hpp"

namespace maskfed {

// One uploaded feature sequence H_p with its provenance.
struct PatchFeatureRecord {
  int client_id = 0;
  int label = 0;
  int epoch = 0;
  std::vector<std::int64_t> kept_indices;
  Tensor features;  // [(kept + 1), d], f32, detached
};

// Per-client pool of records gathered over all local epochs.
class FeaturePool {
 public:
  explicit FeaturePool(int client_id) : client_id_(client_id) {}

  // Appends one detached record per sample of `patch_features` [b, kept+1, d].
  void collect(int epoch, const Tensor& patch_features, const MaskedBatch& batch);

  int client_id() const { return client_id_; }
  const std::vector<PatchFeatureRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  int client_id_;
  std::vector<PatchFeatureRecord> records_;
};

// The balanced patch features set D_H^k.
struct BalancedFeatureSet {
  int client_id = 0;
  std::vector<PatchFeatureRecord> records;
  std::map<int, std::int64_t> per_class_count;
  std::int64_t median_used = 0;
};

// Lower median of the non-zero class counts: sorted ascending, element
// floor((len - 1) / 2). Throws EmptyClientError when no class is present.
std::int64_t class_median(const std::map<int, std::int64_t>& counts);

// Classes whose dataset count is below `median` keep records from every
// epoch, the rest keep only final-epoch records; each class is then
// subsampled without replacement to min(median, available). Records keep the
// pool's tensor handles and pool order.
BalancedFeatureSet median_balance(int client_id, std::span<const PatchFeatureRecord> pool,
                                  const std::map<int, std::int64_t>& dataset_counts,
                                  std::int64_t median, std::mt19937_64& rng);

// Wire format (little-endian): u8 version, u32 client_id, u32 record count,
// u32 d, u32 kept, u32 median; then per record u32 label, kept x u32
// indices, (kept + 1) * d f32 features. Epoch tags are not transmitted.
inline constexpr std::uint8_t kBpfVersion = 1;
inline constexpr std::size_t kBpfHeaderBytes = 1 + 5 * 4;

std::vector<std::uint8_t> serialize_bpf(const BalancedFeatureSet& set);
BalancedFeatureSet deserialize_bpf(const std::vector<std::uint8_t>& payload);
std::size_t bpf_payload_size(std::size_t records, std::int64_t kept, std::int64_t dim);

}  // namespace maskfed
