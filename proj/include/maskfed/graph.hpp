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
#include <functional>
#include <memory>
#include <vector>

#include "maskfed/tensor.hpp"

namespace maskfed {

// Tape of executed operations. One graph belongs to one thread.
//
// In kTrace mode operations only propagate shapes and add their closed-form
// multiply-accumulate counts; no buffers are allocated. backward() on a trace
// graph walks the tape the same way and counts the backward MACs.
class Graph {
 public:
  enum class Mode { kExecute, kTrace };

  explicit Graph(Mode mode = Mode::kExecute) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const { return mode_; }
  bool tracing() const { return mode_ == Mode::kTrace; }

  std::uint64_t mac_count() const { return macs_; }
  void add_macs(std::uint64_t n) { macs_ += n; }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Registers `output` as produced from `inputs`. `backward_fn` reads
  // output's gradient and accumulates into the inputs that require one.
  // Nothing is recorded when no input requires a gradient.
  void record(const std::vector<Tensor>& inputs, const Tensor& output,
              std::function<void()> backward_fn);

  // Populates gradients of every requires_grad leaf reachable from the tape.
  // Leaves present in the tape but not influencing `loss` get zeros.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward_fn;
  };

  Mode mode_;
  std::uint64_t macs_ = 0;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

}  // namespace maskfed
