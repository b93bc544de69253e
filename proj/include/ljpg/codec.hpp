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

// Baseline sequential JPEG: colour transform, 8x8 blocking, DCT,
// quantisation, Annex K Huffman coding and the JFIF container.  Only
// 4:4:4 three-component streams are produced or accepted.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ljpg/image.hpp"

namespace ljpg {

inline constexpr int kBlockSize = 8;
inline constexpr int kBlockArea = 64;

/// 8x8 block in natural (row-major, v fastest) order.
using Block = std::array<double, kBlockArea>;
using IntBlock = std::array<int, kBlockArea>;

/// zigzag position -> natural index
extern const std::array<int, kBlockArea> kZigzag;

struct YcbcrImage {
  Plane y, cb, cr;
};

/// Full-range BT.601, as used by JFIF.  Outputs are unclamped reals.
YcbcrImage rgb_to_ycbcr(const RgbImage& img);
/// Inverse transform; each plane value is treated as real and the result is
/// rounded half away from zero and clamped to [0,255].
RgbImage ycbcr_to_rgb(const YcbcrImage& img);

enum class Channel : std::uint8_t { Y = 0, Cb = 1, Cr = 2 };

template <typename B>
struct BlockGrid {
  Channel channel = Channel::Y;
  int width = 0;   // unpadded plane size
  int height = 0;
  int blocks_wide = 0;
  int blocks_high = 0;
  std::vector<B> blocks;  // raster order

  B& at(int bx, int by) { return blocks[static_cast<std::size_t>(by) * blocks_wide + bx]; }
  const B& at(int bx, int by) const {
    return blocks[static_cast<std::size_t>(by) * blocks_wide + bx];
  }
  bool operator==(const BlockGrid&) const = default;
};

using CoefficientGrid = BlockGrid<Block>;
using QuantizedGrid = BlockGrid<IntBlock>;
using QuantizedImage = std::array<QuantizedGrid, 3>;

inline int blocks_for(int pixels) { return (pixels + kBlockSize - 1) / kBlockSize; }

/// Pads `plane` to a multiple of 8 by edge replication, splits it into 8x8
/// blocks and subtracts 128 from every sample.
CoefficientGrid partition_blocks(const Plane& plane, Channel channel = Channel::Y);
/// Inverse of partition_blocks: adds 128 back and drops the padding.
Plane assemble_blocks(const CoefficientGrid& grid);

/// Row u holds the orthonormal DCT-II basis c(u)/2 * cos((2x+1)u*pi/16).
const std::array<double, kBlockArea>& dct_matrix();

Block fdct_block(const Block& block);
Block idct_block(const Block& coeffs);

using QuantTable = std::array<int, kBlockArea>;  // natural order

struct QuantTablePair {
  QuantTable luma{};
  QuantTable chroma{};

  /// Throws InvalidArgument unless every entry lies in [1,255].
  void validate() const;
  bool operator==(const QuantTablePair&) const = default;
};

extern const QuantTable kAnnexKLuma;
extern const QuantTable kAnnexKChroma;

/// libjpeg-style quality scaling of the Annex K tables, quality in [1,100].
QuantTablePair quality_tables(int quality);

IntBlock quantize_block(const Block& coeffs, const QuantTable& table);
Block dequantize_block(const IntBlock& q, const QuantTable& table);

CoefficientGrid forward_dct(const CoefficientGrid& spatial);
CoefficientGrid inverse_dct(const CoefficientGrid& coeffs);
QuantizedGrid quantize(const CoefficientGrid& coeffs, const QuantTable& table);
CoefficientGrid dequantize(const QuantizedGrid& q, const QuantTable& table);

// Entropy coding / container ------------------------------------------------

using JfifBitstream = std::vector<std::uint8_t>;

/// Largest quantised magnitude the Annex K tables can code: AC values need
/// category <= 10, DC values are limited so every DC difference fits
/// category 11.
inline constexpr int kMaxAcMagnitude = 1023;
inline constexpr int kMaxDcMagnitude = 1023;

/// Serialises three 4:4:4 grids (Y, Cb, Cr) into a complete JFIF file
/// with the given tables in its DQT segments.  Throws InvalidArgument when a
/// coefficient is outside the codable range or the grids disagree in size.
JfifBitstream entropy_encode(const QuantizedImage& grids, const QuantTablePair& tables);

struct DecodedJpeg {
  int width = 0;
  int height = 0;
  QuantizedImage grids;
  /// Quantisation table referenced by each component.
  std::array<QuantTable, 3> component_tables{};

  /// Y table as luma, Cb table as chroma.
  QuantTablePair tables() const { return {component_tables[0], component_tables[1]}; }
};

/// Parses a baseline 4:4:4 JFIF/JPEG stream.  Every rejection is a
/// FormatError naming the offending marker.
DecodedJpeg entropy_decode(std::span<const std::uint8_t> bytes);

JfifBitstream encode_baseline(const RgbImage& img, const QuantTablePair& tables);
RgbImage decode_baseline(std::span<const std::uint8_t> bytes);
/// Reconstructs pixels from already-parsed coefficients.
RgbImage reconstruct(const DecodedJpeg& decoded);
/// Luma/chroma planes (unrounded, unclamped) from an RGB image, blocked and
/// transformed; the shared front half of encode_baseline.
std::array<CoefficientGrid, 3> image_coefficients(const RgbImage& img);

struct Segment {
  std::uint8_t marker = 0;   // second byte of 0xFFxx
  std::size_t offset = 0;    // position of the 0xFF byte
  std::size_t length = 0;    // declared payload length incl. the 2 length bytes; 0 if none
};

/// Walks the marker structure of a stream, checking SOI/EOI framing and
/// that every declared segment length fits the file.  Throws FormatError.
std::vector<Segment> scan_segments(std::span<const std::uint8_t> bytes);

std::string marker_name(std::uint8_t marker);

inline double bits_per_pixel(std::size_t bytes, int width, int height) {
  return 8.0 * static_cast<double>(bytes) / (static_cast<double>(width) * height);
}

}  // namespace ljpg
