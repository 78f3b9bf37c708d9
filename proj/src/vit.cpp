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

#include "maskfed/vit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maskfed/errors.hpp"
#include "maskfed/ops.hpp"

namespace maskfed {

void ViTConfig::validate() const {
  auto positive = [](std::int64_t v, const char* field) {
    if (v <= 0) throw ConfigError(std::string(field) + ": must be positive");
  };
  positive(image_h, "image_h");
  positive(image_w, "image_w");
  positive(channels, "channels");
  positive(patch, "patch");
  positive(dim, "dim");
  positive(heads, "heads");
  positive(depth, "depth");
  positive(mlp_ratio, "mlp_ratio");
  positive(num_classes, "num_classes");
  if (image_h % patch != 0 || image_w % patch != 0) {
    throw ConfigError("patch: image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                      " is not divisible by patch size " + std::to_string(patch));
  }
  if (dim % heads != 0) throw ConfigError("heads: dim must be divisible by heads");
  if (local_depth < 1 || local_depth > depth - 1) {
    throw ConfigError("local_depth: M must lie in [1, N_T - 1] so that M >= 1 and N >= 1");
  }
}

std::vector<NamedTensor> BlockParams::named(const std::string& prefix) const {
  return {{prefix + ".ln1.gain", ln1_gain},       {prefix + ".ln1.bias", ln1_bias},
          {prefix + ".attn.qkv.weight", qkv_weight}, {prefix + ".attn.qkv.bias", qkv_bias},
          {prefix + ".attn.proj.weight", proj_weight}, {prefix + ".attn.proj.bias", proj_bias},
          {prefix + ".ln2.gain", ln2_gain},       {prefix + ".ln2.bias", ln2_bias},
          {prefix + ".mlp.fc1.weight", fc1_weight}, {prefix + ".mlp.fc1.bias", fc1_bias},
          {prefix + ".mlp.fc2.weight", fc2_weight}, {prefix + ".mlp.fc2.bias", fc2_bias}};
}

std::vector<NamedTensor> LocalModule::named() const {
  std::vector<NamedTensor> out = {{"patch_embed.weight", patch_weight},
                                  {"patch_embed.bias", patch_bias},
                                  {"pos_embed", pos_embedding},
                                  {"cls_token", class_token}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto b = blocks[i].named("blocks." + std::to_string(i));
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<NamedTensor> GlobalModule::named() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto b = blocks[i].named("blocks." + std::to_string(first_layer + static_cast<std::int64_t>(i)));
    out.insert(out.end(), b.begin(), b.end());
  }
  out.push_back({"norm.gain", norm_gain});
  out.push_back({"norm.bias", norm_bias});
  return out;
}

std::vector<NamedTensor> Head::named() const {
  return {{"head.weight", weight}, {"head.bias", bias}};
}

namespace {

BlockParams clone_block(const BlockParams& b) {
  return {b.ln1_gain.clone(),  b.ln1_bias.clone(),   b.qkv_weight.clone(), b.qkv_bias.clone(),
          b.proj_weight.clone(), b.proj_bias.clone(), b.ln2_gain.clone(),  b.ln2_bias.clone(),
          b.fc1_weight.clone(), b.fc1_bias.clone(),  b.fc2_weight.clone(), b.fc2_bias.clone()};
}

Tensor trunc_normal(Shape shape, DType dtype, std::mt19937_64& rng) {
  constexpr double kStd = 0.02;
  std::normal_distribution<double> normal(0.0, kStd);
  std::vector<double> values(static_cast<std::size_t>(numel(shape)));
  for (auto& v : values) {
    do {
      v = normal(rng);
    } while (std::abs(v) > 2.0 * kStd);
  }
  return Tensor::from(std::move(shape), std::move(values), dtype, true);
}

}  // namespace

LocalModule clone(const LocalModule& m) {
  LocalModule out{m.patch_weight.clone(), m.patch_bias.clone(), m.pos_embedding.clone(),
                  m.class_token.clone(), {}};
  for (const auto& b : m.blocks) out.blocks.push_back(clone_block(b));
  return out;
}

GlobalModule clone(const GlobalModule& m) {
  GlobalModule out;
  for (const auto& b : m.blocks) out.blocks.push_back(clone_block(b));
  out.norm_gain = m.norm_gain.clone();
  out.norm_bias = m.norm_bias.clone();
  out.first_layer = m.first_layer;
  return out;
}

Head clone(const Head& h) { return {h.weight.clone(), h.bias.clone()}; }

ParamSet clone(const ParamSet& p) {
  return {clone(p.phi), clone(p.w_global), clone(p.theta)};
}

void set_trainable(const std::vector<NamedTensor>& tensors, bool trainable) {
  for (const auto& nt : tensors) {
    Tensor t = nt.tensor;
    t.set_requires_grad(trainable);
  }
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& nt : named) out.push_back(nt.tensor);
  return out;
}

std::int64_t parameter_count(const std::vector<NamedTensor>& named) {
  std::int64_t n = 0;
  for (const auto& nt : named) n += nt.tensor.numel();
  return n;
}

std::uint64_t checksum(const std::vector<NamedTensor>& named) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& nt : named) h = (h ^ checksum(nt.tensor)) * 0x100000001b3ULL;
  return h;
}

bool same_bits(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !a[i].tensor.same_bits(b[i].tensor)) return false;
  }
  return true;
}

void assign_values(const std::vector<NamedTensor>& dst, const std::vector<NamedTensor>& src) {
  if (dst.size() != src.size()) throw DimensionError("assign_values: tensor count differs");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    Tensor d = dst[i].tensor;
    if (d.shape() != src[i].tensor.shape()) {
      throw DimensionError("assign_values: shape differs for " + dst[i].name);
    }
    auto out = d.mutable_data();
    auto in = src[i].tensor.data();
    std::copy(in.begin(), in.end(), out.begin());
    round_to(d.dtype(), out);
  }
}

BlockParams init_block(const ViTConfig& cfg, std::mt19937_64& rng) {
  const auto d = cfg.dim;
  const auto hidden = cfg.mlp_ratio * d;
  const auto dt = cfg.dtype;
  BlockParams b;
  b.ln1_gain = Tensor::full({d}, 1.0, dt, true);
  b.ln1_bias = Tensor::zeros({d}, dt, true);
  b.qkv_weight = trunc_normal({d, 3 * d}, dt, rng);
  b.qkv_bias = Tensor::zeros({3 * d}, dt, true);
  b.proj_weight = trunc_normal({d, d}, dt, rng);
  b.proj_bias = Tensor::zeros({d}, dt, true);
  b.ln2_gain = Tensor::full({d}, 1.0, dt, true);
  b.ln2_bias = Tensor::zeros({d}, dt, true);
  b.fc1_weight = trunc_normal({d, hidden}, dt, rng);
  b.fc1_bias = Tensor::zeros({hidden}, dt, true);
  b.fc2_weight = trunc_normal({hidden, d}, dt, rng);
  b.fc2_bias = Tensor::zeros({d}, dt, true);
  return b;
}

ParamSet init_params(const ViTConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto d = cfg.dim;
  const auto dt = cfg.dtype;
  ParamSet p;
  p.phi.patch_weight = trunc_normal({cfg.patch_dim(), d}, dt, rng);
  p.phi.patch_bias = Tensor::zeros({d}, dt, true);
  p.phi.pos_embedding = trunc_normal({cfg.num_patches() + 1, d}, dt, rng);
  p.phi.class_token = trunc_normal({d}, dt, rng);
  std::vector<BlockParams> layers;
  for (std::int64_t i = 0; i < cfg.depth; ++i) layers.push_back(init_block(cfg, rng));
  auto [local, global] = split_params(std::move(layers), cfg.local_depth);
  p.phi.blocks = std::move(local);
  p.w_global.blocks = std::move(global);
  p.w_global.first_layer = cfg.local_depth;
  p.w_global.norm_gain = Tensor::full({d}, 1.0, dt, true);
  p.w_global.norm_bias = Tensor::zeros({d}, dt, true);
  p.theta.weight = trunc_normal({d, cfg.num_classes}, dt, rng);
  p.theta.bias = Tensor::zeros({cfg.num_classes}, dt, true);
  return p;
}

std::pair<std::vector<BlockParams>, std::vector<BlockParams>> split_params(
    std::vector<BlockParams> all_layers, std::int64_t local_layers) {
  const auto total = static_cast<std::int64_t>(all_layers.size());
  if (local_layers < 1 || local_layers > total - 1) {
    throw ConfigError("local_depth: M=" + std::to_string(local_layers) + " outside [1, " +
                      std::to_string(total - 1) + "]");
  }
  std::vector<BlockParams> global(std::make_move_iterator(all_layers.begin() + local_layers),
                                  std::make_move_iterator(all_layers.end()));
  all_layers.resize(static_cast<std::size_t>(local_layers));
  return {std::move(all_layers), std::move(global)};
}

std::int64_t keep_count(std::int64_t num_patches, double mask_ratio) {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
    throw ConfigError("r_m: masking ratio must lie in [0, 1)");
  }
  const auto kept = static_cast<std::int64_t>(
      std::floor((1.0 - mask_ratio) * static_cast<double>(num_patches)));
  return std::max<std::int64_t>(1, kept);
}

Tensor patchify(const Tensor& image, const ViTConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != cfg.channels || image.dim(1) != cfg.image_h ||
      image.dim(2) != cfg.image_w) {
    throw DimensionError("patchify: image " + shape_string(image.shape()) + " does not match [" +
                         std::to_string(cfg.channels) + "x" + std::to_string(cfg.image_h) + "x" +
                         std::to_string(cfg.image_w) + "]");
  }
  if (cfg.image_h % cfg.patch != 0 || cfg.image_w % cfg.patch != 0) {
    throw DimensionError("patchify: image is not divisible by patch size " +
                         std::to_string(cfg.patch));
  }
  const auto p = cfg.patch;
  const auto grid_w = cfg.image_w / p;
  const auto n = cfg.num_patches();
  const auto v = cfg.patch_dim();
  std::vector<double> out(static_cast<std::size_t>(n * v));
  auto src = image.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto row0 = (i / grid_w) * p;
    const auto col0 = (i % grid_w) * p;
    double* dst = out.data() + i * v;
    for (std::int64_t c = 0; c < cfg.channels; ++c) {
      for (std::int64_t y = 0; y < p; ++y) {
        for (std::int64_t x = 0; x < p; ++x) {
          *dst++ = src[(c * cfg.image_h + row0 + y) * cfg.image_w + col0 + x];
        }
      }
    }
  }
  return Tensor::from({n, v}, std::move(out), image.dtype());
}

MaskResult mask_discard(const Tensor& patches, double mask_ratio, std::mt19937_64& rng) {
  if (patches.rank() != 2) throw DimensionError("mask_discard: expects [n, v] patches");
  const auto n = patches.dim(0);
  const auto v = patches.dim(1);
  const auto kept = keep_count(n, mask_ratio);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // partial Fisher-Yates: the first `kept` slots form a uniform subset
  for (std::int64_t i = 0; i < kept; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(static_cast<std::size_t>(kept));
  std::sort(order.begin(), order.end());
  std::vector<double> out(static_cast<std::size_t>(kept * v));
  auto src = patches.data();
  for (std::int64_t r = 0; r < kept; ++r) {
    std::copy_n(src.begin() + order[r] * v, v, out.begin() + r * v);
  }
  return {Tensor::from({kept, v}, std::move(out), patches.dtype()), std::move(order)};
}

namespace {

Tensor image_at(const Tensor& images, std::int64_t i) {
  const auto per = images.numel() / images.dim(0);
  auto src = images.data();
  std::vector<double> values(src.begin() + i * per, src.begin() + (i + 1) * per);
  return Tensor::from({images.dim(1), images.dim(2), images.dim(3)}, std::move(values),
                      images.dtype());
}

MaskedBatch assemble(const Tensor& images, std::span<const int> labels, double mask_ratio,
                     std::mt19937_64* rng, const ViTConfig& cfg) {
  if (images.rank() != 4) throw DimensionError("expected images [b, channels, h, w]");
  const auto b = images.dim(0);
  const auto n = cfg.num_patches();
  const auto v = cfg.patch_dim();
  const auto kept = rng ? keep_count(n, mask_ratio) : n;
  MaskedBatch batch;
  batch.labels.assign(labels.begin(), labels.end());
  batch.mask_ratio = rng ? mask_ratio : 0.0;
  batch.kept = kept;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(b * kept * v));
  for (std::int64_t i = 0; i < b; ++i) {
    Tensor patches = patchify(image_at(images, i), cfg);
    if (rng) {
      auto masked = mask_discard(patches, mask_ratio, *rng);
      data.insert(data.end(), masked.patches.data().begin(), masked.patches.data().end());
      batch.kept_indices.insert(batch.kept_indices.end(), masked.kept_indices.begin(),
                                masked.kept_indices.end());
    } else {
      data.insert(data.end(), patches.data().begin(), patches.data().end());
      for (std::int64_t j = 0; j < n; ++j) batch.kept_indices.push_back(j);
    }
  }
  batch.patches = Tensor::from({b, kept, v}, std::move(data), cfg.dtype);
  return batch;
}

}  // namespace

MaskedBatch make_masked_batch(const Tensor& images, std::span<const int> labels,
                              double mask_ratio, std::mt19937_64& rng, const ViTConfig& cfg) {
  return assemble(images, labels, mask_ratio, &rng, cfg);
}

MaskedBatch make_full_batch(const Tensor& images, std::span<const int> labels,
                            const ViTConfig& cfg) {
  return assemble(images, labels, 0.0, nullptr, cfg);
}

Tensor block_forward(Graph& g, const BlockParams& p, const Tensor& x, std::int64_t heads) {
  const auto b = x.dim(0);
  const auto s = x.dim(1);
  const auto d = x.dim(2);
  const auto dh = d / heads;

  Tensor h = ops::layer_norm(g, x, p.ln1_gain, p.ln1_bias);
  Tensor qkv = ops::add_row(g, ops::matmul(g, h, p.qkv_weight), p.qkv_bias);
  auto split_heads = [&](std::int64_t part) {
    Tensor t = ops::slice(g, qkv, 2, part * d, (part + 1) * d);
    return ops::permute(g, ops::reshape(g, t, {b, s, heads, dh}), {0, 2, 1, 3});
  };
  Tensor q = ops::scale(g, split_heads(0), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor k_t = ops::permute(g, split_heads(1), {0, 1, 3, 2});
  Tensor v = split_heads(2);
  Tensor attn = ops::softmax_rows(g, ops::matmul(g, q, k_t));  // [b, heads, s, s]
  Tensor ctx = ops::matmul(g, attn, v);                        // [b, heads, s, dh]
  ctx = ops::reshape(g, ops::permute(g, ctx, {0, 2, 1, 3}), {b, s, d});
  Tensor attn_out = ops::add_row(g, ops::matmul(g, ctx, p.proj_weight), p.proj_bias);
  Tensor x1 = ops::add(g, x, attn_out);

  Tensor h2 = ops::layer_norm(g, x1, p.ln2_gain, p.ln2_bias);
  Tensor hidden = ops::gelu(g, ops::add_row(g, ops::matmul(g, h2, p.fc1_weight), p.fc1_bias));
  Tensor mlp_out = ops::add_row(g, ops::matmul(g, hidden, p.fc2_weight), p.fc2_bias);
  return ops::add(g, x1, mlp_out);
}

Tensor local_forward(Graph& g, const LocalModule& phi, const MaskedBatch& batch,
                     const ViTConfig& cfg) {
  if (batch.patches.rank() != 3 || batch.patches.dim(2) != cfg.patch_dim()) {
    throw DimensionError("local_forward: patches " + shape_string(batch.patches.shape()) +
                         " do not have patch dimension " + std::to_string(cfg.patch_dim()));
  }
  const auto b = batch.patches.dim(0);
  const auto kept = batch.patches.dim(1);
  if (static_cast<std::int64_t>(batch.kept_indices.size()) != b * kept) {
    throw DimensionError("local_forward: kept_indices do not match the patch batch");
  }
  const auto n = cfg.num_patches();
  // Position row 0 is the class token; patch i uses row i + 1.
  std::vector<std::int64_t> positions;
  positions.reserve(static_cast<std::size_t>(b * (kept + 1)));
  for (std::int64_t i = 0; i < b; ++i) {
    positions.push_back(0);
    for (std::int64_t j = 0; j < kept; ++j) {
      const auto idx = batch.kept_indices[i * kept + j];
      if (idx < 0 || idx >= n) {
        throw DimensionError("local_forward: patch index " + std::to_string(idx) +
                             " out of range [0, " + std::to_string(n) + ")");
      }
      positions.push_back(idx + 1);
    }
  }
  Tensor embedded =
      ops::add_row(g, ops::matmul(g, batch.patches, phi.patch_weight), phi.patch_bias);
  Tensor cls = ops::expand_batch(g, ops::reshape(g, phi.class_token, {1, cfg.dim}), b);
  Tensor tokens = ops::concat(g, {cls, embedded}, 1);
  Tensor pos = ops::gather_rows(g, phi.pos_embedding, positions, {b, kept + 1});
  Tensor x = ops::add(g, tokens, pos);
  for (const auto& block : phi.blocks) x = block_forward(g, block, x, cfg.heads);
  return x;
}

Tensor global_forward(Graph& g, const GlobalModule& w_global, const Tensor& patch_features,
                      const ViTConfig& cfg) {
  if (w_global.blocks.empty()) throw ConfigError("global_depth: N must be at least 1");
  if (patch_features.rank() != 3 || patch_features.dim(2) != cfg.dim) {
    throw DimensionError("global_forward: features " + shape_string(patch_features.shape()) +
                         " do not have width " + std::to_string(cfg.dim));
  }
  Tensor x = patch_features;
  for (const auto& block : w_global.blocks) x = block_forward(g, block, x, cfg.heads);
  // Layer norm is row-wise, so normalizing only the class-token row is exact.
  Tensor cls = ops::reshape(g, ops::slice(g, x, 1, 0, 1), {x.dim(0), cfg.dim});
  return ops::layer_norm(g, cls, w_global.norm_gain, w_global.norm_bias);
}

Tensor head_forward(Graph& g, const Head& theta, const Tensor& representation) {
  if (representation.rank() != 2 || representation.dim(1) != theta.weight.dim(0)) {
    throw DimensionError("head_forward: representation " +
                         shape_string(representation.shape()) + " does not match head " +
                         shape_string(theta.weight.shape()));
  }
  return ops::add_row(g, ops::matmul(g, representation, theta.weight), theta.bias);
}

Tensor full_forward(Graph& g, const ParamSet& params, const Tensor& images,
                    std::span<const int> labels, double mask_ratio, std::mt19937_64& rng,
                    const ViTConfig& cfg) {
  MaskedBatch batch = make_masked_batch(images, labels, mask_ratio, rng, cfg);
  Tensor features = local_forward(g, params.phi, batch, cfg);
  return head_forward(g, params.theta, global_forward(g, params.w_global, features, cfg));
}

Tensor infer_logits(Graph& g, const ParamSet& params, const Tensor& images,
                    const ViTConfig& cfg) {
  MaskedBatch batch = make_full_batch(images, {}, cfg);
  Tensor features = local_forward(g, params.phi, batch, cfg);
  return head_forward(g, params.theta, global_forward(g, params.w_global, features, cfg));
}

}  // namespace maskfed
