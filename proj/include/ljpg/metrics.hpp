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

// Evaluation metrics on 8-bit images.  Everything here is a plain
// function of its inputs; the differentiable training objectives live in
// losses.hpp.

#pragma once

#include <span>

#include "ljpg/image.hpp"

namespace ljpg {

/// Value reported for a perfect reconstruction by the dB metrics.
inline constexpr double kDbCap = 100.0;

double mse(std::span<const double> a, std::span<const double> b);
double mae(std::span<const double> a, std::span<const double> b);
double mse(const RgbImage& a, const RgbImage& b);
double mae(const RgbImage& a, const RgbImage& b);

/// 10 log10(255^2 / mse); kDbCap when mse == 0.
double psnr_from_mse(double mse);
double psnr(const RgbImage& a, const RgbImage& b);

/// BT.601 luma plane in [0, 255].
Plane luma_plane(const RgbImage& img);

/// Single-scale SSIM (Gaussian window 11, sigma 1.5, valid filtering).
/// Planes must be at least 11x11.
double ssim(const Plane& a, const Plane& b);

/// Smallest side MS-SSIM accepts: five dyadic scales of an 11-tap window.
inline constexpr int kMsssimMinSize = 176;

/// Five-scale MS-SSIM.  Throws InvalidArgument when either side is below
/// kMsssimMinSize.  Negative contrast-structure terms are clamped to zero.
double msssim(const Plane& a, const Plane& b);

/// -10 log10(1 - v), kDbCap when v >= 1.
double msssim_db(double v);

double ssim(const RgbImage& a, const RgbImage& b);    // on luma
double msssim(const RgbImage& a, const RgbImage& b);  // on luma

}  // namespace ljpg
