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
#include <span>
#include <vector>

#include "maskfed/graph.hpp"
#include "maskfed/tensor.hpp"

// Differentiable operations. All inputs must share a dtype. Broadcasting is
// limited to leading batch dimensions of matmul; every other shape change
// needs an explicit op (add_row, expand_batch, reshape, ...).
namespace maskfed::ops {

// a[..., m, k] x b[k, q] or a[B..., m, k] x b[B..., k, q].
// Adds m*k*q MACs per matrix pair.
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);

// x[..., d] + v[d] for every row.
Tensor add_row(Graph& g, const Tensor& x, const Tensor& v);

// Exact (erf) GELU.
Tensor gelu(Graph& g, const Tensor& x);

// Softmax over the last axis with row-max subtraction.
Tensor softmax_rows(Graph& g, const Tensor& x);

// Per-row standardization over the last axis followed by gain/bias.
// A zero-variance row standardizes to zeros.
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-6);

Tensor reshape(Graph& g, const Tensor& x, Shape shape);
Tensor permute(Graph& g, const Tensor& x, const std::vector<std::size_t>& perm);
Tensor slice(Graph& g, const Tensor& x, std::size_t axis, std::int64_t begin,
             std::int64_t end);
Tensor concat(Graph& g, const std::vector<Tensor>& xs, std::size_t axis);

// x[...] -> [batch, ...] by repetition; the gradient sums over the batch.
Tensor expand_batch(Graph& g, const Tensor& x, std::int64_t batch);

// Rows of table[n, d] picked by `indices`; result has shape
// index_shape + [d]. Gradients scatter-add back into the table.
Tensor gather_rows(Graph& g, const Tensor& table,
                   std::span<const std::int64_t> indices, Shape index_shape);

// Mean negative log-likelihood of `labels` under softmax(logits[b, C]).
Tensor cross_entropy(Graph& g, const Tensor& logits,
                     std::span<const int> labels);

Tensor sum(Graph& g, const Tensor& x);

}  // namespace maskfed::ops
