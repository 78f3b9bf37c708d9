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

#include "maskfed/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "maskfed/errors.hpp"

namespace maskfed {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string dtype_name(DType dtype) {
  return dtype == DType::kFloat64 ? "f64" : "f32";
}

void round_to(DType dtype, std::span<double> values) {
  if (dtype != DType::kFloat32) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in " + shape_string(shape));
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
  return full(std::move(shape), 0.0, dtype, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, DType dtype, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(maskfed::numel(shape)), value);
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->requires_grad = requires_grad;
  round_to(dtype, impl->data);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, DType dtype,
                    bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != maskfed::numel(shape)) {
    throw DimensionError("buffer of " + std::to_string(values.size()) +
                         " values does not fill shape " + shape_string(shape));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor data");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->dtype = dtype;
  impl->requires_grad = requires_grad;
  round_to(dtype, impl->data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, DType dtype) {
  return from({1}, {value}, dtype);
}

Tensor Tensor::shape_only(Shape shape, DType dtype) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->shape_only = true;
  return Tensor(std::move(impl));
}

double Tensor::at(std::int64_t flat_index) const {
  return impl_->data.at(static_cast<std::size_t>(flat_index));
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data.at(0);
}

void Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  if (!flag) impl_->grad.clear();
}

void Tensor::zero_grad() {
  impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::clear_grad() { impl_->grad.clear(); }

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  impl->shape_only = impl_->shape_only;
  return Tensor(std::move(impl));
}

Tensor Tensor::detach() const {
  Tensor t = clone();
  t.impl_->requires_grad = false;
  return t;
}

Tensor Tensor::to(DType dtype) const {
  Tensor t = detach();
  t.impl_->dtype = dtype;
  round_to(dtype, t.impl_->data);
  return t;
}

bool Tensor::same_bits(const Tensor& other) const {
  if (shape() != other.shape() || dtype() != other.dtype()) return false;
  const auto& a = impl_->data;
  const auto& b = other.impl_->data;
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

std::uint64_t checksum(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (auto d : t.shape()) mix(&d, sizeof d);
  auto data = t.data();
  mix(data.data(), data.size() * sizeof(double));
  return h;
}

}  // namespace maskfed
