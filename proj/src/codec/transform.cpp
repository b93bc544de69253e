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
#include <cmath>
#include <numbers>

#include "ljpg/codec.hpp"
#include "ljpg/errors.hpp"

namespace ljpg {

const std::array<int, kBlockArea> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

const QuantTable kAnnexKLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

const QuantTable kAnnexKChroma = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

}  // namespace

YcbcrImage rgb_to_ycbcr(const RgbImage& img) {
  YcbcrImage out{Plane(img.width, img.height), Plane(img.width, img.height),
                 Plane(img.width, img.height)};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double r = img.data[3 * i];
    const double g = img.data[3 * i + 1];
    const double b = img.data[3 * i + 2];
    out.y.data[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    out.cb.data[i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    out.cr.data[i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
  }
  return out;
}

RgbImage ycbcr_to_rgb(const YcbcrImage& img) {
  RgbImage out(img.y.width, img.y.height);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    const double y = img.y.data[i];
    const double cb = img.cb.data[i] - 128.0;
    const double cr = img.cr.data[i] - 128.0;
    out.data[3 * i] = to_byte(y + 1.402 * cr);
    out.data[3 * i + 1] = to_byte(y - 0.344136 * cb - 0.714136 * cr);
    out.data[3 * i + 2] = to_byte(y + 1.772 * cb);
  }
  return out;
}

CoefficientGrid partition_blocks(const Plane& plane, Channel channel) {
  if (plane.width <= 0 || plane.height <= 0) throw InvalidArgument("partition_blocks: empty plane");
  CoefficientGrid grid;
  grid.channel = channel;
  grid.width = plane.width;
  grid.height = plane.height;
  grid.blocks_wide = blocks_for(plane.width);
  grid.blocks_high = blocks_for(plane.height);
  grid.blocks.resize(static_cast<std::size_t>(grid.blocks_wide) * grid.blocks_high);
  for (int by = 0; by < grid.blocks_high; ++by) {
    for (int bx = 0; bx < grid.blocks_wide; ++bx) {
      Block& b = grid.at(bx, by);
      for (int y = 0; y < kBlockSize; ++y) {
        const int sy = std::min(by * kBlockSize + y, plane.height - 1);
        for (int x = 0; x < kBlockSize; ++x) {
          const int sx = std::min(bx * kBlockSize + x, plane.width - 1);
          b[y * kBlockSize + x] = plane.at(sx, sy) - 128.0;
        }
      }
    }
  }
  return grid;
}

Plane assemble_blocks(const CoefficientGrid& grid) {
  Plane plane(grid.width, grid.height);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const Block& b = grid.at(x / kBlockSize, y / kBlockSize);
      plane.at(x, y) = b[(y % kBlockSize) * kBlockSize + x % kBlockSize] + 128.0;
    }
  }
  return plane;
}

const std::array<double, kBlockArea>& dct_matrix() {
  static const std::array<double, kBlockArea> matrix = [] {
    std::array<double, kBlockArea> a{};
    for (int u = 0; u < kBlockSize; ++u) {
      const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
      for (int x = 0; x < kBlockSize; ++x)
        a[u * kBlockSize + x] = 0.5 * cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return a;
  }();
  return matrix;
}

namespace {

// out = A * in * A^T when transpose is false, A^T * in * A otherwise.
Block separable(const Block& in, bool inverse) {
  const auto& a = dct_matrix();
  auto m = [&](int r, int c) { return inverse ? a[c * kBlockSize + r] : a[r * kBlockSize + c]; };
  Block tmp{};
  for (int r = 0; r < kBlockSize; ++r)
    for (int c = 0; c < kBlockSize; ++c) {
      double s = 0.0;
      for (int k = 0; k < kBlockSize; ++k) s += m(r, k) * in[k * kBlockSize + c];
      tmp[r * kBlockSize + c] = s;
    }
  Block out{};
  for (int r = 0; r < kBlockSize; ++r)
    for (int c = 0; c < kBlockSize; ++c) {
      double s = 0.0;
      for (int k = 0; k < kBlockSize; ++k) s += tmp[r * kBlockSize + k] * m(c, k);
      out[r * kBlockSize + c] = s;
    }
  return out;
}

}  // namespace

Block fdct_block(const Block& block) { return separable(block, false); }
Block idct_block(const Block& coeffs) { return separable(coeffs, true); }

void QuantTablePair::validate() const {
  for (const QuantTable* t : {&luma, &chroma})
    for (int v : *t)
      if (v < 1 || v > 255)
        throw InvalidArgument("quantisation table entry " + std::to_string(v) + " outside [1,255]");
}

QuantTablePair quality_tables(int quality) {
  if (quality < 1 || quality > 100) throw InvalidArgument("quality must be in [1,100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  auto scaled = [scale](const QuantTable& base) {
    QuantTable t{};
    for (int i = 0; i < kBlockArea; ++i) t[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
    return t;
  };
  return {scaled(kAnnexKLuma), scaled(kAnnexKChroma)};
}

IntBlock quantize_block(const Block& coeffs, const QuantTable& table) {
  IntBlock q{};
  for (int i = 0; i < kBlockArea; ++i)
    q[i] = static_cast<int>(std::round(coeffs[i] / table[i]));  // half away from zero
  return q;
}

Block dequantize_block(const IntBlock& q, const QuantTable& table) {
  Block out{};
  for (int i = 0; i < kBlockArea; ++i) out[i] = static_cast<double>(q[i]) * table[i];
  return out;
}

namespace {

template <typename Out, typename In, typename F>
BlockGrid<Out> map_blocks(const BlockGrid<In>& in, F&& f) {
  BlockGrid<Out> out;
  out.channel = in.channel;
  out.width = in.width;
  out.height = in.height;
  out.blocks_wide = in.blocks_wide;
  out.blocks_high = in.blocks_high;
  out.blocks.reserve(in.blocks.size());
  for (const auto& b : in.blocks) out.blocks.push_back(f(b));
  return out;
}

}  // namespace

CoefficientGrid forward_dct(const CoefficientGrid& spatial) {
  return map_blocks<Block>(spatial, fdct_block);
}

CoefficientGrid inverse_dct(const CoefficientGrid& coeffs) {
  return map_blocks<Block>(coeffs, idct_block);
}

QuantizedGrid quantize(const CoefficientGrid& coeffs, const QuantTable& table) {
  return map_blocks<IntBlock>(coeffs, [&](const Block& b) { return quantize_block(b, table); });
}

CoefficientGrid dequantize(const QuantizedGrid& q, const QuantTable& table) {
  return map_blocks<Block>(q, [&](const IntBlock& b) { return dequantize_block(b, table); });
}

std::array<CoefficientGrid, 3> image_coefficients(const RgbImage& img) {
  const YcbcrImage ycc = rgb_to_ycbcr(img);
  return {forward_dct(partition_blocks(ycc.y, Channel::Y)),
          forward_dct(partition_blocks(ycc.cb, Channel::Cb)),
          forward_dct(partition_blocks(ycc.cr, Channel::Cr))};
}

JfifBitstream encode_baseline(const RgbImage& img, const QuantTablePair& tables) {
  tables.validate();
  const auto coeffs = image_coefficients(img);
  const QuantizedImage q = {quantize(coeffs[0], tables.luma), quantize(coeffs[1], tables.chroma),
                            quantize(coeffs[2], tables.chroma)};
  return entropy_encode(q, tables);
}

RgbImage reconstruct(const DecodedJpeg& decoded) {
  std::array<Plane, 3> planes;
  for (int c = 0; c < 3; ++c) {
    Plane p = assemble_blocks(inverse_dct(dequantize(decoded.grids[c], decoded.component_tables[c])));
    // decoded samples are 8-bit before colour conversion; ties go to even
    for (double& v : p.data) v = std::clamp(std::nearbyint(v), 0.0, 255.0);
    planes[c] = std::move(p);
  }
  return ycbcr_to_rgb(YcbcrImage{std::move(planes[0]), std::move(planes[1]), std::move(planes[2])});
}

RgbImage decode_baseline(std::span<const std::uint8_t> bytes) {
  return reconstruct(entropy_decode(bytes));
}

}  // namespace ljpg
