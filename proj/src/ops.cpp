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

#include "maskfed/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "maskfed/errors.hpp"

namespace maskfed::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ImplPtr = std::shared_ptr<TensorImpl>;

void same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw DimensionError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                         " vs " + dtype_name(b.dtype()) + ")");
  }
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
  same_dtype(a, b, op);
}

Tensor make_out(Graph& g, Shape shape, DType dtype) {
  return g.tracing() ? Tensor::shape_only(std::move(shape), dtype)
                     : Tensor::zeros(std::move(shape), dtype);
}

void finish(Tensor& out, const char* op) {
  if (out.is_shape_only()) return;
  auto data = out.mutable_data();
  round_to(out.dtype(), data);
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

std::span<double> grad_of(const ImplPtr& impl) {
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
  return impl->grad;
}

bool wants_grad(const ImplPtr& impl) { return impl->requires_grad; }

// c (+)= op(a) * op(b) where op(a) is m x k and op(b) is k x q.
void gemm(Graph& g, const double* a, bool trans_a, const double* b, bool trans_b,
          double* c, std::int64_t m, std::int64_t k, std::int64_t q, bool accumulate) {
  MutMap C(c, m, q);
  auto run = [&](const auto& A, const auto& B) {
    if (accumulate) {
      C.noalias() += A * B;
    } else {
      C.noalias() = A * B;
    }
  };
  if (!trans_a && !trans_b) {
    run(ConstMap(a, m, k), ConstMap(b, k, q));
  } else if (trans_a && !trans_b) {
    run(ConstMap(a, k, m).transpose(), ConstMap(b, k, q));
  } else if (!trans_a && trans_b) {
    run(ConstMap(a, m, k), ConstMap(b, q, k).transpose());
  } else {
    run(ConstMap(a, k, m).transpose(), ConstMap(b, q, k).transpose());
  }
  g.add_macs(static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(k) *
             static_cast<std::uint64_t>(q));
}

std::int64_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::int64_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  same_dtype(a, b, "matmul");
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands need rank >= 2, got " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  const std::int64_t k = a.shape().back();
  const std::int64_t kb = b.shape()[b.rank() - 2];
  const std::int64_t q = b.shape().back();
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions differ in " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  const bool shared_rhs = b.rank() == 2;
  if (!shared_rhs) {
    if (b.rank() != a.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw DimensionError("matmul: batch dimensions differ in " + shape_string(a.shape()) +
                           " x " + shape_string(b.shape()));
    }
  }
  const std::int64_t m = a.shape()[a.rank() - 2];
  const std::int64_t batch = product(a.shape(), 0, a.rank() - 2);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(q);
  Tensor out = make_out(g, out_shape, a.dtype());

  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  if (g.tracing()) {
    const auto pair_macs = static_cast<std::uint64_t>(batch * m * k * q);
    g.add_macs(pair_macs);
    g.record({a, b}, out, [&g, ai, bi, pair_macs] {
      if (wants_grad(ai)) g.add_macs(pair_macs);
      if (wants_grad(bi)) g.add_macs(pair_macs);
    });
    return out;
  }

  if (shared_rhs) {
    gemm(g, ai->data.data(), false, bi->data.data(), false, oi->data.data(), batch * m, k, q,
         false);
  } else {
    for (std::int64_t t = 0; t < batch; ++t) {
      gemm(g, ai->data.data() + t * m * k, false, bi->data.data() + t * k * q, false,
           oi->data.data() + t * m * q, m, k, q, false);
    }
  }
  finish(out, "matmul");
  g.record({a, b}, out, [&g, ai, bi, oi, shared_rhs, batch, m, k, q] {
    const double* dc = oi->grad.data();
    if (shared_rhs) {
      if (wants_grad(ai)) {
        gemm(g, dc, false, bi->data.data(), true, grad_of(ai).data(), batch * m, q, k, true);
      }
      if (wants_grad(bi)) {
        gemm(g, ai->data.data(), true, dc, false, grad_of(bi).data(), k, batch * m, q, true);
      }
      return;
    }
    for (std::int64_t t = 0; t < batch; ++t) {
      if (wants_grad(ai)) {
        gemm(g, dc + t * m * q, false, bi->data.data() + t * k * q, true,
             grad_of(ai).data() + t * m * k, m, q, k, true);
      }
      if (wants_grad(bi)) {
        gemm(g, ai->data.data() + t * m * k, true, dc + t * m * q, false,
             grad_of(bi).data() + t * k * q, k, m, q, true);
      }
    }
  });
  return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  Tensor out = make_out(g, a.shape(), a.dtype());
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  if (!g.tracing()) {
    for (std::size_t i = 0; i < oi->data.size(); ++i) oi->data[i] = ai->data[i] + bi->data[i];
    finish(out, "add");
  }
  g.record({a, b}, out, [ai, bi, oi, trace = g.tracing()] {
    if (trace) return;
    for (const auto& in : {ai, bi}) {
      if (!wants_grad(in)) continue;
      auto gi = grad_of(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += oi->grad[i];
    }
  });
  return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  Tensor out = make_out(g, a.shape(), a.dtype());
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  if (!g.tracing()) {
    for (std::size_t i = 0; i < oi->data.size(); ++i) oi->data[i] = ai->data[i] * bi->data[i];
    finish(out, "mul");
  }
  g.record({a, b}, out, [ai, bi, oi, trace = g.tracing()] {
    if (trace) return;
    if (wants_grad(ai)) {
      auto ga = grad_of(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += oi->grad[i] * bi->data[i];
    }
    if (wants_grad(bi)) {
      auto gb = grad_of(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += oi->grad[i] * ai->data[i];
    }
  });
  return out;
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  Tensor out = make_out(g, x.shape(), x.dtype());
  ImplPtr xi = x.impl(), oi = out.impl();
  if (!g.tracing()) {
    for (std::size_t i = 0; i < oi->data.size(); ++i) oi->data[i] = xi->data[i] * factor;
    finish(out, "scale");
  }
  g.record({x}, out, [xi, oi, factor, trace = g.tracing()] {
    if (trace) return;
    auto gx = grad_of(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i] * factor;
  });
  return out;
}

Tensor add_row(Graph& g, const Tensor& x, const Tensor& v) {
  same_dtype(x, v, "add_row");
  if (v.rank() != 1 || x.rank() < 1 || x.shape().back() != v.dim(0)) {
    throw DimensionError("add_row: cannot add " + shape_string(v.shape()) + " to rows of " +
                         shape_string(x.shape()));
  }
  const std::int64_t d = v.dim(0);
  Tensor out = make_out(g, x.shape(), x.dtype());
  ImplPtr xi = x.impl(), vi = v.impl(), oi = out.impl();
  if (!g.tracing()) {
    for (std::size_t i = 0; i < oi->data.size(); ++i) {
      oi->data[i] = xi->data[i] + vi->data[i % d];
    }
    finish(out, "add_row");
  }
  g.record({x, v}, out, [xi, vi, oi, d, trace = g.tracing()] {
    if (trace) return;
    if (wants_grad(xi)) {
      auto gx = grad_of(xi);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
    }
    if (wants_grad(vi)) {
      auto gv = grad_of(vi);
      for (std::size_t i = 0; i < oi->grad.size(); ++i) gv[i % d] += oi->grad[i];
    }
  });
  return out;
}

Tensor gelu(Graph& g, const Tensor& x) {
  Tensor out = make_out(g, x.shape(), x.dtype());
  ImplPtr xi = x.impl(), oi = out.impl();
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  if (!g.tracing()) {
    for (std::size_t i = 0; i < oi->data.size(); ++i) {
      const double v = xi->data[i];
      oi->data[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    finish(out, "gelu");
  }
  g.record({x}, out, [xi, oi, trace = g.tracing()] {
    if (trace) return;
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    auto gx = grad_of(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xi->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += oi->grad[i] * (cdf + v * pdf);
    }
  });
  return out;
}

Tensor softmax_rows(Graph& g, const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("softmax_rows: rank-0 input");
  const std::int64_t q = x.shape().back();
  const std::int64_t rows = x.numel() / q;
  Tensor out = make_out(g, x.shape(), x.dtype());
  ImplPtr xi = x.impl(), oi = out.impl();
  if (!g.tracing()) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* in = xi->data.data() + r * q;
      double* y = oi->data.data() + r * q;
      const double mx = *std::max_element(in, in + q);
      double total = 0.0;
      for (std::int64_t j = 0; j < q; ++j) {
        y[j] = std::exp(in[j] - mx);
        total += y[j];
      }
      for (std::int64_t j = 0; j < q; ++j) y[j] /= total;
    }
    finish(out, "softmax_rows");
  }
  g.record({x}, out, [xi, oi, rows, q, trace = g.tracing()] {
    if (trace) return;
    auto gx = grad_of(xi);
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* y = oi->data.data() + r * q;
      const double* dy = oi->grad.data() + r * q;
      double dot = 0.0;
      for (std::int64_t j = 0; j < q; ++j) dot += dy[j] * y[j];
      for (std::int64_t j = 0; j < q; ++j) gx[r * q + j] += y[j] * (dy[j] - dot);
    }
  });
  return out;
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  same_dtype(x, gain, "layer_norm");
  same_dtype(x, bias, "layer_norm");
  if (x.rank() < 1 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.dim(0) != x.shape().back() || bias.dim(0) != x.shape().back()) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match " +
                         shape_string(x.shape()));
  }
  const std::int64_t d = x.shape().back();
  const std::int64_t rows = x.numel() / d;
  Tensor out = make_out(g, x.shape(), x.dtype());
  ImplPtr xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl();
  if (g.tracing()) {
    g.record({x, gain, bias}, out, [] {});
    return out;
  }
  // Normalized rows and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(xi->data.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = xi->data.data() + r * d;
    const auto [lo, hi] = std::minmax_element(in, in + d);
    double* xh = xhat->data() + r * d;
    if (*lo == *hi) {
      std::fill(xh, xh + d, 0.0);
      (*inv_std)[r] = 1.0 / std::sqrt(eps);
    } else {
      double mean = 0.0;
      for (std::int64_t j = 0; j < d; ++j) mean += in[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::int64_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      (*inv_std)[r] = inv;
      for (std::int64_t j = 0; j < d; ++j) xh[j] = (in[j] - mean) * inv;
    }
    double* y = oi->data.data() + r * d;
    for (std::int64_t j = 0; j < d; ++j) y[j] = xh[j] * gi->data[j] + bi->data[j];
  }
  finish(out, "layer_norm");
  g.record({x, gain, bias}, out, [xi, gi, bi, oi, xhat, inv_std, rows, d] {
    std::vector<double> dxhat(d);
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* xh = xhat->data() + r * d;
      const double* dy = oi->grad.data() + r * d;
      if (wants_grad(gi)) {
        auto gg = grad_of(gi);
        for (std::int64_t j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
      }
      if (wants_grad(bi)) {
        auto gb = grad_of(bi);
        for (std::int64_t j = 0; j < d; ++j) gb[j] += dy[j];
      }
      if (!wants_grad(xi)) continue;
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        dxhat[j] = dy[j] * gi->data[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_xhat += dxhat[j] * xh[j];
      }
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_xhat /= static_cast<double>(d);
      auto gx = grad_of(xi);
      const double inv = (*inv_std)[r];
      for (std::int64_t j = 0; j < d; ++j) {
        gx[r * d + j] += inv * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
      }
    }
  });
  return out;
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (maskfed::numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " cannot become " +
                         shape_string(shape));
  }
  Tensor out = make_out(g, std::move(shape), x.dtype());
  ImplPtr xi = x.impl(), oi = out.impl();
  if (!g.tracing()) oi->data = xi->data;
  g.record({x}, out, [xi, oi, trace = g.tracing()] {
    if (trace) return;
    auto gx = grad_of(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
  });
  return out;
}

Tensor permute(Graph& g, const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> identity(r);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  if (sorted != identity) throw DimensionError("permute: invalid axis permutation");
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(perm[i]);
  Tensor out = make_out(g, out_shape, x.dtype());
  ImplPtr xi = x.impl(), oi = out.impl();
  // source offset for every destination element
  auto src_index = std::make_shared<std::vector<std::int64_t>>();
  if (!g.tracing()) {
    const auto in_strides = strides_of(x.shape());
    const auto n = x.numel();
    src_index->resize(n);
    std::vector<std::int64_t> idx(r, 0);
    for (std::int64_t flat = 0; flat < n; ++flat) {
      std::int64_t src = 0;
      for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_strides[perm[i]];
      (*src_index)[flat] = src;
      oi->data[flat] = xi->data[src];
      for (std::size_t i = r; i-- > 0;) {
        if (++idx[i] < out_shape[i]) break;
        idx[i] = 0;
      }
    }
  }
  g.record({x}, out, [xi, oi, src_index, trace = g.tracing()] {
    if (trace) return;
    auto gx = grad_of(xi);
    for (std::size_t i = 0; i < src_index->size(); ++i) gx[(*src_index)[i]] += oi->grad[i];
  });
  return out;
}

Tensor slice(Graph& g, const Tensor& x, std::size_t axis, std::int64_t begin,
             std::int64_t end) {
  if (axis >= x.rank() || begin < 0 || end > x.dim(axis) || begin >= end) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid on axis " + std::to_string(axis) + " of " +
                         shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::int64_t outer = product(x.shape(), 0, axis);
  const std::int64_t inner = product(x.shape(), axis + 1, x.rank());
  const std::int64_t in_len = x.dim(axis) * inner;
  const std::int64_t out_len = (end - begin) * inner;
  Tensor out = make_out(g, out_shape, x.dtype());
  ImplPtr xi = x.impl(), oi = out.impl();
  if (!g.tracing()) {
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(xi->data.data() + o * in_len + begin * inner, out_len,
                  oi->data.data() + o * out_len);
    }
  }
  g.record({x}, out, [xi, oi, outer, in_len, out_len, offset = begin * inner,
                      trace = g.tracing()] {
    if (trace) return;
    auto gx = grad_of(xi);
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t j = 0; j < out_len; ++j) {
        gx[o * in_len + offset + j] += oi->grad[o * out_len + j];
      }
    }
  });
  return out;
}

Tensor concat(Graph& g, const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Tensor& first = xs.front();
  if (axis >= first.rank()) throw DimensionError("concat: axis out of range");
  Shape out_shape = first.shape();
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    same_dtype(first, t, "concat");
    if (t.rank() != first.rank()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < t.rank(); ++i) {
      if (i != axis && t.dim(i) != first.dim(i)) {
        throw DimensionError("concat: " + shape_string(t.shape()) + " does not match " +
                             shape_string(first.shape()));
      }
    }
    out_shape[axis] += t.dim(axis);
  }
  const std::int64_t outer = product(out_shape, 0, axis);
  const std::int64_t inner = product(out_shape, axis + 1, out_shape.size());
  const std::int64_t out_len = out_shape[axis] * inner;
  Tensor out = make_out(g, out_shape, first.dtype());
  std::vector<ImplPtr> impls;
  std::vector<std::int64_t> lens, offsets;
  std::int64_t offset = 0;
  for (const auto& t : xs) {
    impls.push_back(t.impl());
    lens.push_back(t.dim(axis) * inner);
    offsets.push_back(offset);
    offset += lens.back();
  }
  ImplPtr oi = out.impl();
  if (!g.tracing()) {
    for (std::size_t t = 0; t < impls.size(); ++t) {
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(impls[t]->data.data() + o * lens[t], lens[t],
                    oi->data.data() + o * out_len + offsets[t]);
      }
    }
  }
  g.record(xs, out, [impls, lens, offsets, oi, outer, out_len, trace = g.tracing()] {
    if (trace) return;
    for (std::size_t t = 0; t < impls.size(); ++t) {
      if (!wants_grad(impls[t])) continue;
      auto gt = grad_of(impls[t]);
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t j = 0; j < lens[t]; ++j) {
          gt[o * lens[t] + j] += oi->grad[o * out_len + offsets[t] + j];
        }
      }
    }
  });
  return out;
}

Tensor expand_batch(Graph& g, const Tensor& x, std::int64_t batch) {
  if (batch <= 0) throw DimensionError("expand_batch: batch must be positive");
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin(), batch);
  Tensor out = make_out(g, out_shape, x.dtype());
  ImplPtr xi = x.impl(), oi = out.impl();
  const auto n = static_cast<std::size_t>(x.numel());
  if (!g.tracing()) {
    for (std::int64_t b = 0; b < batch; ++b) {
      std::copy(xi->data.begin(), xi->data.end(), oi->data.begin() + b * n);
    }
  }
  g.record({x}, out, [xi, oi, n, batch, trace = g.tracing()] {
    if (trace) return;
    auto gx = grad_of(xi);
    for (std::int64_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < n; ++i) gx[i] += oi->grad[b * n + i];
    }
  });
  return out;
}

Tensor gather_rows(Graph& g, const Tensor& table, std::span<const std::int64_t> indices,
                   Shape index_shape) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be 2-D");
  if (maskfed::numel(index_shape) != static_cast<std::int64_t>(indices.size())) {
    throw DimensionError("gather_rows: index shape does not match index count");
  }
  const std::int64_t rows = table.dim(0);
  const std::int64_t d = table.dim(1);
  for (auto i : indices) {
    if (i < 0 || i >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range [0, " +
                           std::to_string(rows) + ")");
    }
  }
  Shape out_shape = std::move(index_shape);
  out_shape.push_back(d);
  Tensor out = make_out(g, out_shape, table.dtype());
  ImplPtr ti = table.impl(), oi = out.impl();
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices.begin(), indices.end());
  if (!g.tracing()) {
    for (std::size_t r = 0; r < idx->size(); ++r) {
      std::copy_n(ti->data.data() + (*idx)[r] * d, d, oi->data.data() + r * d);
    }
  }
  g.record({table}, out, [ti, oi, idx, d, trace = g.tracing()] {
    if (trace) return;
    auto gt = grad_of(ti);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      for (std::int64_t j = 0; j < d; ++j) gt[(*idx)[r] * d + j] += oi->grad[r * d + j];
    }
  });
  return out;
}

Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [batch, classes]");
  const std::int64_t b = logits.dim(0);
  const std::int64_t c = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(b));
  }
  for (int y : labels) {
    if (y < 0 || y >= c) {
      throw LabelError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(c) + ")");
    }
  }
  Tensor out = make_out(g, {1}, logits.dtype());
  ImplPtr li = logits.impl(), oi = out.impl();
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  if (g.tracing()) {
    g.record({logits}, out, [] {});
    return out;
  }
  auto probs = std::make_shared<std::vector<double>>(li->data.size());
  double total = 0.0;
  for (std::int64_t r = 0; r < b; ++r) {
    const double* z = li->data.data() + r * c;
    double* p = probs->data() + r * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      p[j] = std::exp(z[j] - mx);
      s += p[j];
    }
    for (std::int64_t j = 0; j < c; ++j) p[j] /= s;
    total += (mx + std::log(s)) - z[(*targets)[r]];
  }
  oi->data[0] = total / static_cast<double>(b);
  finish(out, "cross_entropy");
  g.record({logits}, out, [li, oi, probs, targets, b, c] {
    auto gl = grad_of(li);
    const double scale = oi->grad[0] / static_cast<double>(b);
    for (std::int64_t r = 0; r < b; ++r) {
      for (std::int64_t j = 0; j < c; ++j) {
        const double onehot = (j == (*targets)[r]) ? 1.0 : 0.0;
        gl[r * c + j] += scale * ((*probs)[r * c + j] - onehot);
      }
    }
  });
  return out;
}

Tensor sum(Graph& g, const Tensor& x) {
  Tensor out = make_out(g, {1}, x.dtype());
  ImplPtr xi = x.impl(), oi = out.impl();
  if (!g.tracing()) {
    oi->data[0] = std::accumulate(xi->data.begin(), xi->data.end(), 0.0);
    finish(out, "sum");
  }
  g.record({x}, out, [xi, oi, trace = g.tracing()] {
    if (trace) return;
    auto gx = grad_of(xi);
    for (double& v : gx) v += oi->grad[0];
  });
  return out;
}

}  // namespace maskfed::ops
