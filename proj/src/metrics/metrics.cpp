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

#include "ljpg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ljpg/errors.hpp"

namespace ljpg {
namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
constexpr std::array<double, 5> kMsssimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw InvalidArgument(std::string(what) + ": size mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
}

void require_same_dims(const RgbImage& a, const RgbImage& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidArgument(std::string(what) + ": image sizes differ (" + std::to_string(a.width) +
                          "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
}

std::vector<double> as_doubles(const RgbImage& img) { return {img.data.begin(), img.data.end()}; }

const std::array<double, kWindow>& gaussian() {
  static const std::array<double, kWindow> g = [] {
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kWindow / 2;
      w[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
      sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return g;
}

// Separable Gaussian filter, valid region only.
Plane filter_valid(const Plane& p) {
  const auto& g = gaussian();
  const int w = p.width - kWindow + 1;
  const int h = p.height - kWindow + 1;
  Plane rows(w, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += g[i] * p.at(x + i, y);
      rows.at(x, y) = s;
    }
  Plane out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += g[i] * rows.at(x, y + i);
      out.at(x, y) = s;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.width, a.height);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

struct SsimTerms {
  double ssim = 0.0;  // mean of l * cs
  double cs = 0.0;    // mean of cs
};

SsimTerms ssim_terms(const Plane& a, const Plane& b) {
  const Plane mu_a = filter_valid(a);
  const Plane mu_b = filter_valid(b);
  const Plane aa = filter_valid(product(a, a));
  const Plane bb = filter_valid(product(b, b));
  const Plane ab = filter_valid(product(a, b));
  double sum_ssim = 0.0, sum_cs = 0.0;
  for (std::size_t i = 0; i < mu_a.data.size(); ++i) {
    const double ma = mu_a.data[i], mb = mu_b.data[i];
    const double va = aa.data[i] - ma * ma;
    const double vb = bb.data[i] - mb * mb;
    const double cov = ab.data[i] - ma * mb;
    const double cs = (2.0 * cov + kC2) / (va + vb + kC2);
    const double l = (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
    sum_ssim += l * cs;
    sum_cs += cs;
  }
  const double n = static_cast<double>(mu_a.data.size());
  return {sum_ssim / n, sum_cs / n};
}

Plane downsample2(const Plane& p) {
  Plane out(p.width / 2, p.height / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.at(x, y) = 0.25 * (p.at(2 * x, 2 * y) + p.at(2 * x + 1, 2 * y) + p.at(2 * x, 2 * y + 1) +
                             p.at(2 * x + 1, 2 * y + 1));
  return out;
}

void require_same_plane(const Plane& a, const Plane& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidArgument(std::string(what) + ": plane sizes differ");
}

}  // namespace

double mse(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "mse");
  if (a.empty()) throw InvalidArgument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double mae(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "mae");
  if (a.empty()) throw InvalidArgument("mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double mse(const RgbImage& a, const RgbImage& b) {
  require_same_dims(a, b, "mse");
  return mse(as_doubles(a), as_doubles(b));
}

double mae(const RgbImage& a, const RgbImage& b) {
  require_same_dims(a, b, "mae");
  return mae(as_doubles(a), as_doubles(b));
}

double psnr_from_mse(double m) {
  if (m < 0.0 || std::isnan(m)) throw InvalidArgument("psnr: mse must be >= 0");
  if (m == 0.0) return kDbCap;
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

double psnr(const RgbImage& a, const RgbImage& b) { return psnr_from_mse(mse(a, b)); }

Plane luma_plane(const RgbImage& img) {
  Plane p(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      p.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
  return p;
}

double ssim(const Plane& a, const Plane& b) {
  require_same_plane(a, b, "ssim");
  if (a.width < kWindow || a.height < kWindow)
    throw InvalidArgument("ssim: images must be at least 11x11");
  return ssim_terms(a, b).ssim;
}

double msssim(const Plane& a, const Plane& b) {
  require_same_plane(a, b, "msssim");
  if (a.width < kMsssimMinSize || a.height < kMsssimMinSize)
    throw InvalidArgument("msssim: images must be at least " + std::to_string(kMsssimMinSize) + "x" +
                          std::to_string(kMsssimMinSize) + ", got " + std::to_string(a.width) +
                          "x" + std::to_string(a.height));
  Plane x = a, y = b;
  double result = 1.0;
  for (std::size_t scale = 0; scale < kMsssimWeights.size(); ++scale) {
    const SsimTerms t = ssim_terms(x, y);
    const bool last = scale + 1 == kMsssimWeights.size();
    result *= std::pow(std::max(last ? t.ssim : t.cs, 0.0), kMsssimWeights[scale]);
    if (!last) {
      x = downsample2(x);
      y = downsample2(y);
    }
  }
  return result;
}

double msssim_db(double v) {
  if (std::isnan(v)) return v;
  if (v >= 1.0) return kDbCap;
  return std::min(kDbCap, -10.0 * std::log10(1.0 - v));
}

double ssim(const RgbImage& a, const RgbImage& b) {
  require_same_dims(a, b, "ssim");
  return ssim(luma_plane(a), luma_plane(b));
}

double msssim(const RgbImage& a, const RgbImage& b) {
  require_same_dims(a, b, "msssim");
  return msssim(luma_plane(a), luma_plane(b));
}

}  // namespace ljpg
