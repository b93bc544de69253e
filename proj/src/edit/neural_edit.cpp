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

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ljpg/errors.hpp"
#include "ljpg/neural_edit.hpp"

namespace ljpg {

using namespace ad;

std::uint64_t Rng::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("Rng::below: empty range");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % n;
}

namespace {

Tensor uniform_param(Shape shape, double limit, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-limit, limit);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor zero_param(Shape shape) {
  const std::size_t n = shape_size(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor conv_param(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  const double fan_in = static_cast<double>(in * k * k);
  const double fan_out = static_cast<double>(out * k * k);
  return uniform_param({out, in, k, k}, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

// rows x cols (rows <= cols) with orthonormal rows.
Tensor orthogonal_param(std::size_t rows, std::size_t cols, Rng& rng) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(cols), static_cast<Eigen::Index>(rows));
  for (Eigen::Index c = 0; c < g.cols(); ++c)
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
  std::vector<double> v(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      v[r * cols + c] = q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));
  return Tensor::parameter({rows, cols, 1, 1}, std::move(v));
}

}  // namespace

VisionStem VisionStem::init(Rng& rng) {
  VisionStem s;
  s.conv1_w = conv_param(32, 3, 3, rng);
  s.conv1_b = zero_param({32});
  s.conv2_w = conv_param(64, 32, 3, rng);
  s.conv2_b = zero_param({64});
  s.conv3_w = conv_param(256, 64, 3, rng);
  s.conv3_b = zero_param({256});
  s.reduce_w = orthogonal_param(kSiteChannels, 256, rng);
  s.reduce_b = zero_param({kSiteChannels});
  return s;
}

VisionStem VisionStem::zeros() {
  VisionStem s;
  s.conv1_w = zero_param({32, 3, 3, 3});
  s.conv1_b = zero_param({32});
  s.conv2_w = zero_param({64, 32, 3, 3});
  s.conv2_b = zero_param({64});
  s.conv3_w = zero_param({256, 64, 3, 3});
  s.conv3_b = zero_param({256});
  s.reduce_w = zero_param({kSiteChannels, 256, 1, 1});
  s.reduce_b = zero_param({kSiteChannels});
  return s;
}

std::vector<std::pair<std::string, Tensor>> VisionStem::named(const std::string& prefix) const {
  return {{prefix + "conv1.w", conv1_w},   {prefix + "conv1.b", conv1_b},
          {prefix + "conv2.w", conv2_w},   {prefix + "conv2.b", conv2_b},
          {prefix + "conv3.w", conv3_w},   {prefix + "conv3.b", conv3_b},
          {prefix + "reduce.w", reduce_w}, {prefix + "reduce.b", reduce_b}};
}

Tensor stem_forward(const Tensor& image, const VisionStem& stem) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0 ||
      image.dim(1) == 0 || image.dim(2) == 0)
    throw ShapeError("stem_forward: expected [3,H,W] with H,W multiples of 8, got " +
                     shape_str(image.shape()));
  Tensor h = ad::tanh(conv2d(image, stem.conv1_w, stem.conv1_b, 2, 1));
  h = ad::tanh(conv2d(h, stem.conv2_w, stem.conv2_b, 2, 1));
  h = ad::tanh(conv2d(h, stem.conv3_w, stem.conv3_b, 2, 1));
  h = sigmoid(conv2d(h, stem.reduce_w, stem.reduce_b, 1, 0));
  const std::size_t sites = h.dim(1) * h.dim(2);
  return transpose(reshape(h, {VisionStem::kSiteChannels, sites}));
}

EditMaps split_edit_maps(const Tensor& sites) {
  if (sites.rank() != 2 || sites.dim(1) != VisionStem::kSiteChannels)
    throw ShapeError("split_edit_maps: expected [blocks,128], got " + shape_str(sites.shape()));
  const std::size_t rows = sites.dim(0);
  auto half = [&](std::size_t offset) {
    auto index = std::make_shared<std::vector<std::size_t>>(rows * 64);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < 64; ++j) (*index)[r * 64 + j] = r * 128 + offset + j;
    return gather(sites, std::move(index), {rows, 64});
  };
  return {half(0), half(64)};
}

Smrnn Smrnn::init(std::size_t hidden, std::size_t input, Rng& rng) {
  if (hidden == 0 || input == 0) throw InvalidArgument("Smrnn: sizes must be positive");
  const double in_limit = 1.0 / std::sqrt(static_cast<double>(input));
  const double h_limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  Smrnn c;
  c.wf = uniform_param({hidden, input}, in_limit, rng);
  c.vf = uniform_param({hidden, hidden}, h_limit, rng);
  c.vz = uniform_param({hidden, hidden}, h_limit, rng);
  c.wz = uniform_param({hidden, input}, in_limit, rng);
  c.u = uniform_param({input, hidden}, h_limit, rng);
  return c;
}

Smrnn Smrnn::zeros(std::size_t hidden, std::size_t input) {
  Smrnn c;
  c.wf = zero_param({hidden, input});
  c.vf = zero_param({hidden, hidden});
  c.vz = zero_param({hidden, hidden});
  c.wz = zero_param({hidden, input});
  c.u = zero_param({input, hidden});
  return c;
}

std::vector<std::pair<std::string, Tensor>> Smrnn::named(const std::string& prefix) const {
  return {{prefix + "Wf", wf}, {prefix + "Vf", vf}, {prefix + "Vz", vz},
          {prefix + "Wz", wz}, {prefix + "U", u}};
}

Tensor smrnn_refine(const Tensor& maps, const Tensor& z0, const Smrnn& cell, int steps) {
  if (steps < 0) throw InvalidArgument("smrnn_refine: steps must be >= 0");
  const std::size_t h = cell.hidden(), n = cell.input();
  if (cell.vf.shape() != Shape{h, h} || cell.vz.shape() != Shape{h, h} ||
      cell.wz.shape() != Shape{h, n} || cell.u.shape() != Shape{n, h})
    throw ShapeError("smrnn_refine: inconsistent cell weights (Wf " + shape_str(cell.wf.shape()) +
                     ", Vf " + shape_str(cell.vf.shape()) + ", Vz " + shape_str(cell.vz.shape()) +
                     ", Wz " + shape_str(cell.wz.shape()) + ", U " + shape_str(cell.u.shape()) + ")");
  if (maps.rank() != 2 || maps.dim(1) != n)
    throw ShapeError("smrnn_refine: maps " + shape_str(maps.shape()) + " do not match input size " +
                     std::to_string(n));
  if (z0.shape() != Shape{maps.dim(0), h})
    throw ShapeError("smrnn_refine: z0 " + shape_str(z0.shape()) + " does not match [rows," +
                     std::to_string(h) + "]");
  if (steps == 0) return z0;
  const Tensor gate = matmul(maps, transpose(cell.wf));   // rows of W_f x
  const Tensor drive = matmul(maps, transpose(cell.wz));  // rows of W_z x
  const Tensor vf_t = transpose(cell.vf);
  const Tensor vz_t = transpose(cell.vz);
  Tensor z = z0;
  for (int k = 0; k < steps; ++k) {
    const Tensor f = mul(gate, matmul(z, vf_t));
    z = ad::tanh(add(matmul(f, vz_t), drive));
  }
  return z;
}

std::vector<double> kwta(std::span<const double> v, std::size_t k) {
  Tensor t = kwta(Tensor::constant({1, v.size()}, std::vector<double>(v.begin(), v.end())), k);
  return {t.values().begin(), t.values().end()};
}

Tensor edit_branch(const Tensor& maps, const Smrnn& cell, std::size_t k, int steps) {
  const Tensor z0 = Tensor::zeros({maps.dim(0), cell.hidden()});
  const Tensor z = smrnn_refine(maps, z0, cell, steps);
  return ad::kwta(matmul(z, transpose(cell.u)), k);
}

EditScores edit_scores(const Tensor& image, const VisionStem& stem, const Smrnn& cell,
                       std::size_t k, int steps) {
  const EditMaps maps = split_edit_maps(stem_forward(image, stem));
  return {edit_branch(maps.luma, cell, k, steps), edit_branch(maps.chroma, cell, k, steps)};
}

}  // namespace ljpg
