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

#include "maskfed/graph.hpp"

#include <unordered_set>

#include "maskfed/errors.hpp"

namespace maskfed {

void Graph::record(const std::vector<Tensor>& inputs, const Tensor& output,
                   std::function<void()> backward_fn) {
  if (consumed_) throw GraphConsumedError("graph already ran backward; re-execute the forward pass");
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  output.impl()->is_leaf = false;
  if (!needs_grad) return;
  output.impl()->requires_grad = true;
  Node node;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.impl());
  node.output = output.impl();
  node.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(node));
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) throw GraphConsumedError("backward called twice on the same graph");
  if (loss.numel() != 1) {
    throw DimensionError("backward expects a scalar loss, got " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error("loss does not depend on any tensor that requires a gradient");
  }
  consumed_ = true;

  const bool trace = tracing();
  if (!trace) {
    std::unordered_set<TensorImpl*> seen;
    for (auto& node : nodes_) {
      for (auto& in : node.inputs) {
        if (in->is_leaf && in->requires_grad && seen.insert(in.get()).second) {
          in->grad.assign(in->data.size(), 0.0);
        }
      }
    }
    loss.impl()->grad.assign(1, 1.0);
  }

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!trace && it->output->grad.empty()) continue;  // not on a path to loss
    it->backward_fn();
    if (trace) continue;
    for (auto& in : it->inputs) {
      if (in->dtype == DType::kFloat32 && !in->grad.empty()) round_to(in->dtype, in->grad);
    }
    if (!it->output->is_leaf) it->output->grad.clear();
  }
  nodes_.clear();
}

}  // namespace maskfed
