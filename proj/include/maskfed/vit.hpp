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
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maskfed/graph.hpp"
#include "maskfed/tensor.hpp"
#include "maskfed/tensor_io.hpp"

namespace maskfed {

// Geometry of the split Vision Transformer. `image_w` is the image width in
// pixels; the global module's parameters are called w_global elsewhere.
struct ViTConfig {
  std::int64_t image_h = 16;
  std::int64_t image_w = 16;
  std::int64_t channels = 1;
  std::int64_t patch = 4;
  std::int64_t dim = 64;
  std::int64_t heads = 4;
  std::int64_t depth = 6;        // N_T
  std::int64_t local_depth = 2;  // M
  std::int64_t mlp_ratio = 4;
  std::int64_t num_classes = 4;  // C
  DType dtype = DType::kFloat32;

  std::int64_t num_patches() const { return (image_h / patch) * (image_w / patch); }
  std::int64_t global_depth() const { return depth - local_depth; }  // N
  std::int64_t patch_dim() const { return patch * patch * channels; }
  std::int64_t head_dim() const { return dim / heads; }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct BlockParams {
  Tensor ln1_gain, ln1_bias;
  Tensor qkv_weight, qkv_bias;
  Tensor proj_weight, proj_bias;
  Tensor ln2_gain, ln2_bias;
  Tensor fc1_weight, fc1_bias;
  Tensor fc2_weight, fc2_bias;

  std::vector<NamedTensor> named(const std::string& prefix) const;
};

// phi: patch embedding, positional table (row 0 belongs to the class
// token, row 1 + i to patch i), class token and the first M blocks.
struct LocalModule {
  Tensor patch_weight, patch_bias;
  Tensor pos_embedding;
  Tensor class_token;
  std::vector<BlockParams> blocks;

  std::vector<NamedTensor> named() const;
};

// w_global: the remaining N blocks plus the final normalization.
struct GlobalModule {
  std::vector<BlockParams> blocks;
  Tensor norm_gain, norm_bias;
  std::int64_t first_layer = 0;  // index of blocks[0] within the full stack

  std::vector<NamedTensor> named() const;
};

// theta: affine classification head.
struct Head {
  Tensor weight, bias;

  std::vector<NamedTensor> named() const;
};

struct ParamSet {
  LocalModule phi;
  GlobalModule w_global;
  Head theta;
};

// Deep copies (new buffers, same requires_grad flags).
LocalModule clone(const LocalModule& m);
GlobalModule clone(const GlobalModule& m);
Head clone(const Head& h);
ParamSet clone(const ParamSet& p);

void set_trainable(const std::vector<NamedTensor>& tensors, bool trainable);
std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named);
std::int64_t parameter_count(const std::vector<NamedTensor>& named);
// Combined checksum over all tensors in order.
std::uint64_t checksum(const std::vector<NamedTensor>& named);
bool same_bits(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b);
// Copies values from `src` into `dst` in place (matching order and shapes).
void assign_values(const std::vector<NamedTensor>& dst, const std::vector<NamedTensor>& src);

// Pre-norm blocks, truncated-normal(0.02) weights, zero biases, unit gains.
ParamSet init_params(const ViTConfig& cfg, std::mt19937_64& rng);
BlockParams init_block(const ViTConfig& cfg, std::mt19937_64& rng);

// Layers [0, M) go local, [M, N_T) global.
std::pair<std::vector<BlockParams>, std::vector<BlockParams>> split_params(
    std::vector<BlockParams> all_layers, std::int64_t local_layers);

// max(1, floor((1 - r_m) * n)).
std::int64_t keep_count(std::int64_t num_patches, double mask_ratio);

// image[channels, h, w] -> [n, p*p*channels]; patch i is the grid cell at
// row-major position i, flattened channel-major.
Tensor patchify(const Tensor& image, const ViTConfig& cfg);

struct MaskResult {
  Tensor patches;                          // [kept, v]
  std::vector<std::int64_t> kept_indices;  // ascending
};

// Uniform subset of keep_count(n, r_m) patches without replacement.
MaskResult mask_discard(const Tensor& patches, double mask_ratio, std::mt19937_64& rng);

struct MaskedBatch {
  Tensor patches;                          // [b, kept, v]
  std::vector<std::int64_t> kept_indices;  // b * kept, each row ascending
  std::vector<int> labels;
  double mask_ratio = 0.0;
  std::int64_t kept = 0;

  std::int64_t batch() const { return patches.dim(0); }
};

// images[b, channels, h, w]; each image gets an independent mask.
MaskedBatch make_masked_batch(const Tensor& images, std::span<const int> labels,
                              double mask_ratio, std::mt19937_64& rng, const ViTConfig& cfg);
// All patches in grid order; the inference path.
MaskedBatch make_full_batch(const Tensor& images, std::span<const int> labels,
                            const ViTConfig& cfg);

Tensor block_forward(Graph& g, const BlockParams& p, const Tensor& x, std::int64_t heads);

// H_p: [b, kept + 1, d], class token first.
Tensor local_forward(Graph& g, const LocalModule& phi, const MaskedBatch& batch,
                     const ViTConfig& cfg);
// H_r: class-token row after the global blocks and final norm, [b, d].
Tensor global_forward(Graph& g, const GlobalModule& w_global, const Tensor& patch_features,
                      const ViTConfig& cfg);
// logits [b, C].
Tensor head_forward(Graph& g, const Head& theta, const Tensor& representation);

Tensor full_forward(Graph& g, const ParamSet& params, const Tensor& images,
                    std::span<const int> labels, double mask_ratio, std::mt19937_64& rng,
                    const ViTConfig& cfg);
Tensor infer_logits(Graph& g, const ParamSet& params, const Tensor& images,
                    const ViTConfig& cfg);

}  // namespace maskfed
