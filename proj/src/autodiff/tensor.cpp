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

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "ljpg/errors.hpp"
#include "ljpg/tensor.hpp"

namespace ljpg::ad {
namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> value) {
  if (shape_size(shape) != value.size())
    throw ShapeError("tensor: " + std::to_string(value.size()) + " values do not fill shape " +
                     shape_str(shape));
  auto n = std::make_shared<detail::Node>();
  n->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

}  // namespace

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto n = new_node(std::move(shape), std::move(values));
  n->requires_grad = true;
  return Tensor(std::move(n));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::span<const double> Tensor::values() const& { return node_->value; }

std::span<double> Tensor::mutable_values() {
  if (!node_->leaf) throw InvalidArgument("mutable_values: tensor is not a leaf");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

std::span<const double> Tensor::grad_view() const { return node_->grad; }

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

const char* Tensor::op() const { return node_->op; }

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
  auto n = new_node(std::move(shape), std::move(value));
  n->op = op;
  n->leaf = false;
  const bool track = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& t : inputs) n->inputs.push_back(t.node_);
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& in : n->inputs)
      if (in->requires_grad) stack.push_back(in.get());
  }
  // inputs are always created before their consumers
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });
  for (detail::Node* n : order)
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad_buffer()[0] += 1.0;
  for (detail::Node* n : order)
    if (!n->leaf && n->backward) n->backward(*n);
}

// Gradient checking ----------------------------------------------------------

GradCheckResult grad_check_detailed(const ScalarFn& fn, const Tensor& input, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("grad_check: eps must be positive");
  Tensor x = Tensor::parameter(input.shape(), std::vector<double>(input.values().begin(),
                                                                  input.values().end()));
  Tensor y = fn(x);
  backward(y);
  const std::vector<double> analytic = x.grad();

  GradCheckResult result;
  NoGradGuard no_grad;
  std::vector<double> probe(input.values().begin(), input.values().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = fn(Tensor::constant(input.shape(), probe)).item();
    probe[i] = orig - eps;
    const double fm = fn(Tensor::constant(input.shape(), probe)).item();
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
  }
  return result;
}

double grad_check(const ScalarFn& fn, const Tensor& input, double eps) {
  return grad_check_detailed(fn, input, eps).max_rel_error;
}

// Serialisation ------------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class LeReader {
 public:
  explicit LeReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (bytes_.size() - pos_ < sizeof(T)) throw FormatError("", "tensor container truncated");
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }

  std::string bytes(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("", "tensor container truncated");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_tensors(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (shape_size(t.shape) != t.values.size())
      throw ShapeError("serialize_tensors: '" + t.name + "' values do not match shape " +
                       shape_str(t.shape));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_le<std::uint64_t>(out, d);
    for (double v : t.values) put_le<double>(out, v);
  }
  return out;
}

std::vector<NamedTensor> deserialize_tensors(std::span<const std::uint8_t> bytes,
                                             std::size_t* consumed) {
  LeReader r(bytes);
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint32_t>();
    t.name = r.bytes(name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("", "tensor '" + t.name + "' has implausible rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint64_t>();
      if (dim > (std::uint64_t{1} << 32)) throw FormatError("", "tensor dimension too large");
      t.shape.push_back(static_cast<std::size_t>(dim));
      n *= static_cast<std::size_t>(dim);
    }
    if (n > r.remaining() / sizeof(double)) throw FormatError("", "tensor container truncated");
    t.values.resize(n);
    for (double& v : t.values) v = r.get<double>();
    out.push_back(std::move(t));
  }
  if (consumed) *consumed = r.pos();
  return out;
}

}  // namespace ljpg::ad
