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

// Reverse-mode automatic differentiation over dense row-major float64
// arrays.  A Tensor is a shared handle to a graph node; every op whose
// inputs require gradients records a node that knows its inputs and how
// to push an output gradient back into them.  Nodes carry a global
// creation sequence number, so sorting reachable nodes by that number
// is a topological order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ljpg::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  /// Leaf without gradient tracking.
  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor full(Shape shape, double value);
  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
  static Tensor scalar(double v) { return full({}, v); }
  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> values() const&;
  /// A temporary's storage may die with it; bind the tensor first.
  std::span<const double> values() const&& = delete;
  /// Writable view of a leaf's values (optimizer updates).  Throws for
  /// non-leaf tensors, whose values belong to the op that produced them.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  bool has_grad() const;
  /// Gradient accumulated by backward(); all zeros when none was recorded.
  std::vector<double> grad() const;
  std::span<const double> grad_view() const;
  void zero_grad();

  /// Name of the op that produced this tensor ("leaf" for leaves).
  const char* op() const;
  /// Copy of the values as a fresh leaf, detached from any graph.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(const char*, Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);
};

namespace detail {

struct Node {
  std::uint64_t seq = 0;
  const char* op = "leaf";
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Builds an op result; records `backward` only when some input requires
/// grad and recording is enabled on this thread.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward);

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
/// `loss` must hold exactly one element.
void backward(const Tensor& loss);

// Ops ------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// x: [C,H,W], w: [O,C,k,k], b: [O] -> [O,Ho,Wo] with symmetric zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
/// Non-overlapping k x k mean pooling of [C,H,W]; H and W must divide by k.
Tensor avg_pool2d(const Tensor& x, int k);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
Tensor reduce_sum(const Tensor& x);
/// Sum of absolute values; subgradient 0 at 0.
Tensor reduce_l1(const Tensor& x);
/// Gradient passes where lo <= x <= hi (boundaries inclusive), zero outside.
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor scalar_mul(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor reciprocal(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0);
/// out.flat[i] = x.flat[index[i]]; backward scatter-adds.
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape);

enum class RoundingSign {
  /// round(x) + (round(x) - x)^3
  kResidualFirst,
  /// round(x) + (x - round(x))^3
  kInputFirst,
};

/// Cubic rounding surrogate; round() is half away from zero and is held
/// constant when differentiating.
Tensor soft_round(const Tensor& x, RoundingSign sign = RoundingSign::kResidualFirst);
Tensor hard_round(const Tensor& x);

/// Row-wise k-winners-take-all on a [rows, n] tensor: keeps the k largest
/// entries of every row (ties go to the lower index) and zeroes the rest.
/// Gradient flows only through kept entries.
Tensor kwta(const Tensor& x, std::size_t k);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator*(double c, const Tensor& a);

// Gradient checking ------------------------------------------------------------

using ScalarFn = std::function<Tensor(const Tensor&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares backward() gradients of `fn` at `input` against central finite
/// differences; relative error uses max(|a|, |b|, 1e-8) as denominator.
GradCheckResult grad_check_detailed(const ScalarFn& fn, const Tensor& input, double eps);
double grad_check(const ScalarFn& fn, const Tensor& input, double eps);

// Named-tensor container -------------------------------------------------------

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};

/// u32 count, then per tensor: u32 name length, name bytes, u32 rank,
/// u64 dims[rank], float64 payload; all little-endian.
std::vector<std::uint8_t> serialize_tensors(const std::vector<NamedTensor>& tensors);
/// Parses a container from the front of `bytes`; `consumed` receives the
/// number of bytes read.  Throws FormatError on malformed input.
std::vector<NamedTensor> deserialize_tensors(std::span<const std::uint8_t> bytes,
                                             std::size_t* consumed = nullptr);

}  // namespace ljpg::ad
