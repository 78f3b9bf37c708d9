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
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace maskfed {

// Storage is always double; kFloat32 tensors have every value rounded to the
// nearest float after each operation, which gives 32-bit semantics.
enum class DType : std::uint8_t { kFloat64 = 0, kFloat32 = 1 };

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);
std::string dtype_name(DType dtype);

// Rounds values in place to the precision of `dtype`.
void round_to(DType dtype, std::span<double> values);

struct TensorImpl {
  Shape shape;
  DType dtype = DType::kFloat32;
  std::vector<double> data;  // empty for shape-only (trace) tensors
  std::vector<double> grad;  // empty when no gradient slot
  bool requires_grad = false;
  bool shape_only = false;
  bool is_leaf = true;
};

// Shared handle to a dense row-major buffer. Copying a Tensor aliases the
// same storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::kFloat32,
                      bool requires_grad = false);
  static Tensor full(Shape shape, double value, DType dtype = DType::kFloat32,
                     bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     DType dtype = DType::kFloat32, bool requires_grad = false);
  static Tensor scalar(double value, DType dtype = DType::kFloat32);
  // Tensor without a data buffer, used by the MAC tracing graph.
  static Tensor shape_only(Shape shape, DType dtype);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t numel() const { return maskfed::numel(impl_->shape); }
  DType dtype() const { return impl_->dtype; }
  bool is_shape_only() const { return impl_->shape_only; }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double at(std::int64_t flat_index) const;
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  void zero_grad();
  void clear_grad();

  // Independent copy of the data (and flags). Gradient state is dropped.
  Tensor clone() const;
  // Independent copy with no gradient slot and requires_grad=false.
  Tensor detach() const;
  Tensor to(DType dtype) const;

  // Bitwise equality of shape, dtype and data.
  bool same_bits(const Tensor& other) const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// FNV-1a over shape and raw data bytes; used for freeze/broadcast checks.
std::uint64_t checksum(const Tensor& t);

}  // namespace maskfed
