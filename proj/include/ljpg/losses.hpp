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

// Differentiable training objectives.  Images are compared in [0,1].

#pragma once

#include <functional>

#include "ljpg/tensor.hpp"

namespace ljpg {

using ad::Tensor;

struct LossConfig {
  double lambda = 0.9;  // distortion weight; rate gets 1 - lambda - 0.01
  double gamma = 0.0;   // perceptual proxy weight
  double sigma = 0.25;  // MAE share of the alignment term
  double alpha = 1e-3;  // table L1 weight
  double beta = 1e-3;   // edit-score weight

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Weight of the alignment term in the total loss.
inline constexpr double kAlignmentWeight = 0.01;

Tensor mse_loss(const Tensor& x, const Tensor& xhat);
Tensor mae_loss(const Tensor& x, const Tensor& xhat);

/// Maps an image tensor to features for the perceptual proxy.
using FeatureFn = std::function<Tensor(const Tensor&)>;

/// MSE + gamma * mean squared feature distance.  `features` may be empty
/// when gamma == 0.
Tensor distortion_loss(const Tensor& x, const Tensor& xhat, double gamma,
                       const FeatureFn& features = {});

/// alpha (|Qbar_L|_1 + |Qbar_C|_1) + beta (mean|c_L| + mean|c_C|).
Tensor rate_loss(const Tensor& qbar_luma, const Tensor& qbar_chroma, const Tensor& c_luma,
                 const Tensor& c_chroma, double alpha, double beta);

/// (1 - sigma) MSE + sigma MAE; sigma must lie in [0.1, 0.4].
Tensor alignment_loss(const Tensor& x, const Tensor& xhat, double sigma);

/// lambda d + (1 - lambda - 0.01) r + 0.01 al.
Tensor total_loss(const Tensor& d, const Tensor& r, const Tensor& al, double lambda);

}  // namespace ljpg
