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

#include "maskfed/bpf.hpp"

#include <algorithm>
#include <numeric>

#include "maskfed/errors.hpp"
#include "maskfed/tensor_io.hpp"

namespace maskfed {

void FeaturePool::collect(int epoch, const Tensor& patch_features, const MaskedBatch& batch) {
  if (patch_features.rank() != 3 || patch_features.dim(0) != batch.batch() ||
      patch_features.dim(1) != batch.kept + 1) {
    throw DimensionError("collect: features " + shape_string(patch_features.shape()) +
                         " do not match the masked batch");
  }
  const auto rows = patch_features.dim(1);
  const auto d = patch_features.dim(2);
  auto src = patch_features.data();
  for (std::int64_t i = 0; i < batch.batch(); ++i) {
    PatchFeatureRecord rec;
    rec.client_id = client_id_;
    rec.label = batch.labels.at(static_cast<std::size_t>(i));
    rec.epoch = epoch;
    rec.kept_indices.assign(batch.kept_indices.begin() + i * batch.kept,
                            batch.kept_indices.begin() + (i + 1) * batch.kept);
    std::vector<double> values(src.begin() + i * rows * d, src.begin() + (i + 1) * rows * d);
    rec.features = Tensor::from({rows, d}, std::move(values), DType::kFloat32);
    records_.push_back(std::move(rec));
  }
}

std::int64_t class_median(const std::map<int, std::int64_t>& counts) {
  std::vector<std::int64_t> present;
  for (auto [cls, n] : counts) {
    if (n > 0) present.push_back(n);
  }
  if (present.empty()) throw EmptyClientError("class_median: client holds no samples");
  std::sort(present.begin(), present.end());
  return present[(present.size() - 1) / 2];
}

BalancedFeatureSet median_balance(int client_id, std::span<const PatchFeatureRecord> pool,
                                  const std::map<int, std::int64_t>& dataset_counts,
                                  std::int64_t median, std::mt19937_64& rng) {
  BalancedFeatureSet out;
  out.client_id = client_id;
  out.median_used = median;
  if (pool.empty()) return out;
  int final_epoch = 0;
  for (const auto& r : pool) final_epoch = std::max(final_epoch, r.epoch);

  std::map<int, std::vector<std::size_t>> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& r = pool[i];
    auto it = dataset_counts.find(r.label);
    const std::int64_t count = it == dataset_counts.end() ? 0 : it->second;
    const bool minority = count < median;
    if (minority || r.epoch == final_epoch) eligible[r.label].push_back(i);
  }
  std::vector<std::size_t> chosen;
  for (auto& [cls, members] : eligible) {
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(median), members.size());
    // partial Fisher-Yates for a uniform subset of size `take`
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
      std::swap(members[i], members[pick(rng)]);
    }
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    out.per_class_count[cls] = static_cast<std::int64_t>(take);
  }
  std::sort(chosen.begin(), chosen.end());
  for (auto i : chosen) out.records.push_back(pool[i]);
  return out;
}

std::size_t bpf_payload_size(std::size_t records, std::int64_t kept, std::int64_t dim) {
  const auto per_record = 4 + 4 * kept + 4 * (kept + 1) * dim;
  return kBpfHeaderBytes + records * static_cast<std::size_t>(per_record);
}

std::vector<std::uint8_t> serialize_bpf(const BalancedFeatureSet& set) {
  std::int64_t kept = 0, dim = 0;
  if (!set.records.empty()) {
    kept = static_cast<std::int64_t>(set.records.front().kept_indices.size());
    dim = set.records.front().features.dim(1);
  }
  std::vector<std::uint8_t> out;
  out.reserve(bpf_payload_size(set.records.size(), kept, dim));
  wire::put_u8(out, kBpfVersion);
  wire::put_u32(out, static_cast<std::uint32_t>(set.client_id));
  wire::put_u32(out, static_cast<std::uint32_t>(set.records.size()));
  wire::put_u32(out, static_cast<std::uint32_t>(dim));
  wire::put_u32(out, static_cast<std::uint32_t>(kept));
  wire::put_u32(out, static_cast<std::uint32_t>(set.median_used));
  for (const auto& r : set.records) {
    if (static_cast<std::int64_t>(r.kept_indices.size()) != kept || r.features.rank() != 2 ||
        r.features.dim(0) != kept + 1 || r.features.dim(1) != dim) {
      throw DimensionError("serialize_bpf: records must share kept count and width");
    }
    wire::put_u32(out, static_cast<std::uint32_t>(r.label));
    for (auto i : r.kept_indices) wire::put_u32(out, static_cast<std::uint32_t>(i));
    for (double v : r.features.data()) wire::put_f32(out, static_cast<float>(v));
  }
  return out;
}

BalancedFeatureSet deserialize_bpf(const std::vector<std::uint8_t>& payload) {
  wire::Reader r(payload);
  const auto version = r.u8();
  if (version != kBpfVersion) {
    throw FormatError("unsupported BPF version " + std::to_string(version));
  }
  BalancedFeatureSet set;
  set.client_id = static_cast<int>(r.u32());
  const auto count = r.u32();
  const std::int64_t dim = r.u32();
  const std::int64_t kept = r.u32();
  set.median_used = r.u32();
  for (std::uint32_t n = 0; n < count; ++n) {
    PatchFeatureRecord rec;
    rec.client_id = set.client_id;
    rec.label = static_cast<int>(r.u32());
    rec.kept_indices.resize(static_cast<std::size_t>(kept));
    for (auto& i : rec.kept_indices) i = r.u32();
    std::vector<double> values(static_cast<std::size_t>((kept + 1) * dim));
    for (auto& v : values) v = r.f32();
    rec.features = Tensor::from({kept + 1, dim}, std::move(values), DType::kFloat32);
    ++set.per_class_count[rec.label];
    set.records.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError("BPF payload has trailing bytes");
  return set;
}

}  // namespace maskfed
