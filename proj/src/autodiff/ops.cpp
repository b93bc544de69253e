// Copyright 2026 The learnjpeg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ljpg/errors.hpp"
#include "ljpg/tensor.hpp"

namespace ljpg::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MutMap = Eigen::Map<RowMat>;

MutMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch(op, a, b);
}

detail::Node& input(detail::Node& n, std::size_t i) { return *n.inputs[i]; }

template <typename F>
Tensor unary(const char* op, const Tensor& x, F&& f,
             std::function<void(detail::Node&)> backward) {
  std::vector<double> out(x.size());
  const auto xs = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xs[i]);
  return make_result(op, x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bs = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bs[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = input(n, k);
      if (!in.requires_grad) continue;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bs = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bs[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = input(n, k);
      if (!in.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard_mul", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bs = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bs[i];
  return make_result("hadamard_mul", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    auto& x = input(n, 0);
    auto& y = input(n, 1);
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * x.value[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.node()->value, m, k) * as_matrix(b.node()->value, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& node) {
    auto& x = input(node, 0);
    auto& y = input(node, 1);
    const auto g = as_matrix(node.grad, m, n);
    if (x.requires_grad)
      as_matrix(x.grad_buffer(), m, k).noalias() += g * as_matrix(y.value, k, n).transpose();
    if (y.requires_grad)
      as_matrix(y.grad_buffer(), k, n).noalias() += as_matrix(x.value, m, k).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  as_matrix(out, c, r) = as_matrix(a.node()->value, r, c).transpose();
  return make_result("transpose", {c, r}, std::move(out), {a}, [r, c](detail::Node& n) {
    as_matrix(input(n, 0).grad_buffer(), r, c) += as_matrix(n.grad, c, r).transpose();
  });
}

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  int stride, padding;
};

// cols: [C*k*k, Ho*Wo]
void im2col(const std::vector<double>& x, const ConvGeometry& g, std::vector<double>& cols) {
  const std::size_t plane = g.out_h * g.out_w;
  cols.assign(g.channels * g.kernel * g.kernel * plane, 0.0);
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols.data() + ((c * g.kernel + ky) * g.kernel + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.padding;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const double* src = x.data() + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride + static_cast<long>(kx) - g.padding;
            if (ix >= 0 && ix < static_cast<long>(g.width)) row[oy * g.out_w + ox] = src[ix];
          }
        }
      }
}

void col2im(const std::vector<double>& cols, const ConvGeometry& g, std::vector<double>& dx) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols.data() + ((c * g.kernel + ky) * g.kernel + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.padding;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* dst = dx.data() + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride + static_cast<long>(kx) - g.padding;
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += row[oy * g.out_w + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3))
    shape_mismatch("conv2d", x, w);
  if (stride < 1 || padding < 0) throw InvalidArgument("conv2d: stride must be >= 1, padding >= 0");
  const std::size_t out_c = w.dim(0);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out_c)) shape_mismatch("conv2d", w, b);
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), w.dim(2), 0, 0, stride, padding};
  const long span_h = static_cast<long>(g.height) + 2 * padding - static_cast<long>(g.kernel);
  const long span_w = static_cast<long>(g.width) + 2 * padding - static_cast<long>(g.kernel);
  if (span_h < 0 || span_w < 0) shape_mismatch("conv2d", x, w);
  g.out_h = static_cast<std::size_t>(span_h / stride + 1);
  g.out_w = static_cast<std::size_t>(span_w / stride + 1);
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t patch = g.channels * g.kernel * g.kernel;

  auto cols = std::make_shared<std::vector<double>>();
  im2col(x.node()->value, g, *cols);
  std::vector<double> out(out_c * plane);
  auto om = as_matrix(out, out_c, plane);
  om.noalias() = as_matrix(w.node()->value, out_c, patch) * as_matrix(*cols, patch, plane);
  if (b.defined()) {
    const auto bs = b.values();
    for (std::size_t o = 0; o < out_c; ++o) om.row(static_cast<Eigen::Index>(o)).array() += bs[o];
  }
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(
      "conv2d", {out_c, g.out_h, g.out_w}, std::move(out), std::move(inputs),
      [g, cols, out_c, plane, patch](detail::Node& n) {
        auto& xin = input(n, 0);
        auto& win = input(n, 1);
        const auto gm = as_matrix(n.grad, out_c, plane);
        if (win.requires_grad)
          as_matrix(win.grad_buffer(), out_c, patch).noalias() +=
              gm * as_matrix(*cols, patch, plane).transpose();
        if (n.inputs.size() > 2 && input(n, 2).requires_grad) {
          auto& gb = input(n, 2).grad_buffer();
          // Eigen's vectorised sum depends on buffer alignment; keep the order fixed.
          for (std::size_t o = 0; o < out_c; ++o) {
            const auto row = n.grad.begin() + static_cast<std::ptrdiff_t>(o * plane);
            gb[o] += std::accumulate(row, row + static_cast<std::ptrdiff_t>(plane), 0.0);
          }
        }
        if (xin.requires_grad) {
          std::vector<double> dcols(patch * plane);
          as_matrix(dcols, patch, plane).noalias() =
              as_matrix(win.value, out_c, patch).transpose() * gm;
          col2im(dcols, g, xin.grad_buffer());
        }
      });
}

Tensor avg_pool2d(const Tensor& x, int k) {
  if (x.rank() != 3 || k < 1 || x.dim(1) % static_cast<std::size_t>(k) != 0 ||
      x.dim(2) % static_cast<std::size_t>(k) != 0)
    throw ShapeError("avg_pool2d: shape " + shape_str(x.shape()) + " is not divisible by window " +
                     std::to_string(k));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), kk = static_cast<std::size_t>(k);
  const std::size_t oh = h / kk, ow = w / kk;
  const double inv = 1.0 / static_cast<double>(kk * kk);
  std::vector<double> out(c * oh * ow, 0.0);
  const auto xs = x.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        out[(ch * oh + y / kk) * ow + xx / kk] += xs[(ch * h + y) * w + xx] * inv;
  return make_result("avg_pool2d", {c, oh, ow}, std::move(out), {x},
                     [c, h, w, kk, oh, ow, inv](detail::Node& n) {
                       auto& g = input(n, 0).grad_buffer();
                       for (std::size_t ch = 0; ch < c; ++ch)
                         for (std::size_t y = 0; y < h; ++y)
                           for (std::size_t xx = 0; xx < w; ++xx)
                             g[(ch * h + y) * w + xx] += n.grad[(ch * oh + y / kk) * ow + xx / kk] * inv;
                     });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
               [](detail::Node& n) {
                 auto& g = input(n, 0).grad_buffer();
                 for (std::size_t i = 0; i < g.size(); ++i)
                   g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
               });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](detail::Node& n) {
    auto& g = input(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

Tensor reduce_sum(const Tensor& x) {
  const auto xs = x.values();
  const double s = std::accumulate(xs.begin(), xs.end(), 0.0);
  return make_result("reduce_sum", {}, {s}, {x}, [](detail::Node& n) {
    auto& g = input(n, 0).grad_buffer();
    for (double& v : g) v += n.grad[0];
  });
}

Tensor reduce_mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("reduce_mean: empty tensor");
  const auto xs = x.values();
  const double inv = 1.0 / static_cast<double>(xs.size());
  const double s = std::accumulate(xs.begin(), xs.end(), 0.0) * inv;
  return make_result("reduce_mean", {}, {s}, {x}, [inv](detail::Node& n) {
    auto& g = input(n, 0).grad_buffer();
    for (double& v : g) v += n.grad[0] * inv;
  });
}

Tensor reduce_l1(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += std::abs(v);
  return make_result("reduce_l1", {}, {s}, {x}, [](detail::Node& n) {
    auto& in = input(n, 0);
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in.value[i];
      g[i] += n.grad[0] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw InvalidArgument("clamp: lo must not exceed hi");
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](detail::Node& n) {
                 auto& in = input(n, 0);
                 auto& g = in.grad_buffer();
                 for (std::size_t i = 0; i < g.size(); ++i)
                   if (in.value[i] >= lo && in.value[i] <= hi) g[i] += n.grad[i];
               });
}

Tensor scalar_mul(const Tensor& x, double c) {
  return unary("scalar_mul", x, [c](double v) { return c * v; }, [c](detail::Node& n) {
    auto& g = input(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](detail::Node& n) {
    auto& g = input(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Tensor reciprocal(const Tensor& x) {
  for (double v : x.values())
    if (v == 0.0) throw NumericError("reciprocal: division by zero");
  return unary("reciprocal", x, [](double v) { return 1.0 / v; }, [](detail::Node& n) {
    auto& g = input(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i] * n.value[i] * n.value[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return make_result("reshape", std::move(shape),
                     std::vector<double>(x.values().begin(), x.values().end()), {x},
                     [](detail::Node& n) {
                       auto& g = input(n, 0).grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  std::size_t outer = 1, inner = 1, total_axis = 0;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) {
    Shape a = p.shape(), b = first;
    if (a.size() != b.size()) shape_mismatch("concat", parts[0], p);
    a[axis] = b[axis] = 0;
    if (a != b) shape_mismatch("concat", parts[0], p);
    extents.push_back(p.dim(axis));
    total_axis += p.dim(axis);
  }
  Shape shape = first;
  shape[axis] = total_axis;
  std::vector<double> out(outer * total_axis * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].values();
    const std::size_t chunk = extents[k] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total_axis * inner + offset));
    offset += chunk;
  }
  return make_result("concat", std::move(shape), std::move(out), parts,
                     [extents, outer, inner, total_axis](detail::Node& n) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < extents.size(); ++k) {
                         const std::size_t chunk = extents[k] * inner;
                         auto& in = input(n, k);
                         if (in.requires_grad) {
                           auto& g = in.grad_buffer();
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < chunk; ++i)
                               g[o * chunk + i] += n.grad[o * total_axis * inner + offset + i];
                         }
                         offset += chunk;
                       }
                     });
}

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape) {
  if (!index || shape_size(shape) != index->size())
    throw ShapeError("gather: index count does not fill shape " + shape_str(shape));
  const auto xs = x.values();
  std::vector<double> out(index->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t j = (*index)[i];
    if (j >= xs.size()) throw ShapeError("gather: index out of range for " + shape_str(x.shape()));
    out[i] = xs[j];
  }
  return make_result("gather", std::move(shape), std::move(out), {x}, [index](detail::Node& n) {
    auto& g = input(n, 0).grad_buffer();
    for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += n.grad[i];
  });
}

Tensor soft_round(const Tensor& x, RoundingSign sign) {
  const double s = sign == RoundingSign::kResidualFirst ? 1.0 : -1.0;
  return unary(
      "soft_round", x,
      [s](double v) {
        const double r = std::round(v);
        const double d = s * (r - v);
        return r + d * d * d;
      },
      [s](detail::Node& n) {
        auto& in = input(n, 0);
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double d = std::round(in.value[i]) - in.value[i];
          // d/dx (s*(r - x))^3 = -3 s^3 (r - x)^2 = -3 s (r - x)^2
          g[i] += n.grad[i] * (-3.0 * s * d * d);
        }
      });
}

Tensor hard_round(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xs = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::round(xs[i]);
  return Tensor::constant(x.shape(), std::move(out));
}

Tensor kwta(const Tensor& x, std::size_t k) {
  if (x.rank() != 2) throw ShapeError("kwta: expected [rows, n], got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), n = x.dim(1);
  const auto xs = x.values();
  auto keep = std::make_shared<std::vector<std::uint8_t>>(x.size(), 0);
  std::vector<double> out(x.size(), 0.0);
  std::vector<std::size_t> idx(n);
  const std::size_t winners = std::min(k, n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * n;
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto better = [row](std::size_t a, std::size_t b) {
      return row[a] > row[b] || (row[a] == row[b] && a < b);
    };
    if (winners < n) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(winners), idx.end(), better);
    for (std::size_t i = 0; i < winners; ++i) {
      (*keep)[r * n + idx[i]] = 1;
      out[r * n + idx[i]] = row[idx[i]];
    }
  }
  return make_result("kwta", x.shape(), std::move(out), {x}, [keep](detail::Node& nd) {
    auto& g = input(nd, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if ((*keep)[i]) g[i] += nd.grad[i];
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator*(double c, const Tensor& a) { return scalar_mul(a, c); }

}  // namespace ljpg::ad
