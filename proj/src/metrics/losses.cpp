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

#include "ljpg/losses.hpp"

#include <cmath>
#include <string>

#include "ljpg/errors.hpp"

namespace ljpg {

using namespace ad;

namespace {

void require_finite_nonneg(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw InvalidArgument(std::string("loss config: ") + name + " must be finite and >= 0, got " +
                          std::to_string(v));
}

void check_sigma(double sigma) {
  if (!(sigma >= 0.1 && sigma <= 0.4))
    throw InvalidArgument("alignment loss: sigma must lie in [0.1, 0.4], got " + std::to_string(sigma));
}

Tensor mean_abs(const Tensor& t) { return scalar_mul(reduce_l1(t), 1.0 / static_cast<double>(t.size())); }

}  // namespace

void LossConfig::validate() const {
  if (!(lambda > 0.0 && lambda < 0.99))
    throw InvalidArgument("loss config: lambda must lie in (0, 0.99), got " + std::to_string(lambda));
  require_finite_nonneg(gamma, "gamma");
  require_finite_nonneg(alpha, "alpha");
  require_finite_nonneg(beta, "beta");
  check_sigma(sigma);
}

Tensor mse_loss(const Tensor& x, const Tensor& xhat) {
  const Tensor d = sub(x, xhat);
  return reduce_mean(mul(d, d));
}

Tensor mae_loss(const Tensor& x, const Tensor& xhat) { return mean_abs(sub(x, xhat)); }

Tensor distortion_loss(const Tensor& x, const Tensor& xhat, double gamma, const FeatureFn& features) {
  require_finite_nonneg(gamma, "gamma");
  Tensor d = mse_loss(x, xhat);
  if (gamma == 0.0) return d;
  if (!features) throw InvalidArgument("distortion loss: gamma > 0 needs a feature extractor");
  return add(d, scalar_mul(mse_loss(features(x), features(xhat)), gamma));
}

Tensor rate_loss(const Tensor& qbar_luma, const Tensor& qbar_chroma, const Tensor& c_luma,
                 const Tensor& c_chroma, double alpha, double beta) {
  require_finite_nonneg(alpha, "alpha");
  require_finite_nonneg(beta, "beta");
  const Tensor tables = add(reduce_l1(qbar_luma), reduce_l1(qbar_chroma));
  const Tensor edits = add(mean_abs(c_luma), mean_abs(c_chroma));
  return add(scalar_mul(tables, alpha), scalar_mul(edits, beta));
}

Tensor alignment_loss(const Tensor& x, const Tensor& xhat, double sigma) {
  check_sigma(sigma);
  return add(scalar_mul(mse_loss(x, xhat), 1.0 - sigma), scalar_mul(mae_loss(x, xhat), sigma));
}

Tensor total_loss(const Tensor& d, const Tensor& r, const Tensor& al, double lambda) {
  if (!(lambda >= 0.0 && lambda + kAlignmentWeight <= 1.0))
    throw InvalidArgument("total loss: lambda must satisfy 0 <= lambda <= 0.99");
  return add(add(scalar_mul(d, lambda), scalar_mul(r, 1.0 - lambda - kAlignmentWeight)),
             scalar_mul(al, kAlignmentWeight));
}

}  // namespace ljpg
