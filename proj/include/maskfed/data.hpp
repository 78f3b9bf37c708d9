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
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maskfed/tensor.hpp"

namespace maskfed {

// Immutable image collection; images are [N, channels, h, w].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t channels() const { return images.dim(1); }
  std::int64_t height() const { return images.dim(2); }
  std::int64_t width() const { return images.dim(3); }

  Tensor image(std::int64_t i) const;  // [channels, h, w]
  Tensor gather(std::span<const std::int64_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::int64_t> indices) const;
};

struct ToyDatasetSpec {
  int classes = 4;
  int train_per_class = 100;
  int test_per_class = 50;
  std::int64_t image_h = 16;
  std::int64_t image_w = 16;
  std::int64_t channels = 1;
  std::int64_t patch = 4;
  double noise = 0.1;
};

// Patch-aligned binary template of class `cls` on the patch grid (1 = bright
// patch). Classes 0..3 are horizontal stripes, vertical stripes, checkerboard
// and a border ring; later classes widen the period, and a fixed hash pattern
// takes over when a template would repeat.
std::vector<std::uint8_t> class_template(int cls, std::int64_t grid_h, std::int64_t grid_w);

// Templates plus Gaussian pixel noise; train and test use disjoint streams
// drawn from `rng`.
std::pair<Dataset, Dataset> make_toy_dataset(const ToyDatasetSpec& spec, std::mt19937_64& rng);

// Flat binary format: u32 count, u32 channels, u32 h, u32 w, then per
// sample a u8 label followed by channels*h*w f32 pixels (little-endian).
Dataset load_binary_dataset(const std::filesystem::path& path, int num_classes);
void save_binary_dataset(const std::filesystem::path& path, const Dataset& dataset);

struct PartitionSpec {
  double beta = 0.1;
  int num_clients = 1;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // sample index -> client id

  // Ascending sample indices held by each client.
  std::vector<std::vector<std::int64_t>> client_indices() const;
};

// Per class: proportions ~ Dir(beta) over the clients, rounded to counts by
// largest remainder, samples shuffled then dealt out in client order.
PartitionSpec dirichlet_partition(std::span<const int> labels, int num_clients, double beta,
                                  std::uint64_t seed);

struct ClientDataset {
  int client_id = 0;
  std::vector<std::int64_t> indices;  // into the shared training set
  std::map<int, std::int64_t> class_counts;

  std::int64_t size() const { return static_cast<std::int64_t>(indices.size()); }
  int distinct_classes() const { return static_cast<int>(class_counts.size()); }
};

std::vector<ClientDataset> make_client_datasets(const PartitionSpec& partition,
                                                std::span<const int> labels);

// "client,n_k,c_k,class_0,...,class_{C-1}" with one row per client.
std::string partition_csv(const std::vector<ClientDataset>& clients, int num_classes);

// Mean over non-empty clients of the total-variation distance between the
// client label distribution and the pooled one.
double mean_tv_distance(const std::vector<ClientDataset>& clients, int num_classes);

struct AugmentDraw {
  std::int64_t shift_y = 0;  // crop offset relative to the unpadded image
  std::int64_t shift_x = 0;
  bool flip = false;
  double brightness = 1.0;
};

struct AugmentOptions {
  bool enabled = true;
  std::int64_t pad = 2;
};

// Zero-pad by `pad`, crop back at the shifted window, optional horizontal
// flip, then scale by the brightness factor.
Tensor apply_augment(const Tensor& image, const AugmentDraw& draw, std::int64_t pad);
AugmentDraw draw_augment(std::mt19937_64& rng, const AugmentOptions& options);
Tensor augment(const Tensor& image, std::mt19937_64& rng, const AugmentOptions& options);

// One shuffled pass; the last batch may be short. Empty input gives none.
std::vector<std::vector<std::int64_t>> batches(std::span<const std::int64_t> indices,
                                               int batch_size, std::mt19937_64& rng);

}  // namespace maskfed
