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

// Differentiable twin of the baseline codec.
//
// Learnable tables are stored as theta in [s, 255 s].  The effective
// integer-domain table is theta / s and the quantiser multiplies
// coefficients by its reciprocal s / theta, so theta = s * Q reproduces a
// standard table Q exactly.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ljpg/codec.hpp"
#include "ljpg/neural_edit.hpp"

namespace ljpg {

struct LearnableQTables {
  Tensor luma;    // theta_L: [8, 8]
  Tensor chroma;  // theta_C: [8, 8]
  double scale = 1e-4;

  double lower() const { return scale; }
  double upper() const { return 255.0 * scale; }

  /// Reciprocal multipliers s / theta, [8, 8].
  Tensor multipliers(Channel ch) const;
  /// Integer-domain divisors theta / s, [8, 8].
  Tensor divisors(Channel ch) const;
  const Tensor& theta(Channel ch) const { return ch == Channel::Y ? luma : chroma; }

  /// Clamps both tables into [s, 255 s] in place.
  void clamp();
  /// theta = s * Q for a standard integer pair.
  static LearnableQTables from_tables(const QuantTablePair& tables, double scale);
};

/// Entries i.i.d. uniform on [s, 2s].  Throws InvalidArgument for s <= 0.
LearnableQTables init_qtables(double scale, std::uint64_t seed);

/// round(theta / s) clamped to [1, 255].
QuantTablePair export_qtables(const LearnableQTables& q);

struct ModelConfig {
  std::size_t hidden = 64;
  std::size_t k = 32;
  int steps = 3;
  /// With lr 1e-3, Adam moves a table entry by roughly lr / s integer units
  /// per step.
  double scale = 1e-4;
  /// kResidualFirst has a non-positive derivative, which reverses the
  /// gradient through quantisation; kept selectable.
  ad::RoundingSign rounding_sign = ad::RoundingSign::kInputFirst;
};

/// All trainable state: stem, the shared SM-RNN cell and the tables.
struct Model {
  ModelConfig config;
  VisionStem stem;
  Smrnn cell;
  LearnableQTables tables;

  static Model init(const ModelConfig& config, std::uint64_t seed);
  /// Every trainable tensor under its checkpoint name.
  std::vector<std::pair<std::string, Tensor>> named() const;
  /// True for the quantisation-table parameters.
  static bool is_qtable(const std::string& name);
};

/// An image converted once into the constant tensors the pipeline needs.
struct PreparedImage {
  int width = 0;
  int height = 0;
  int blocks_wide = 0;
  int blocks_high = 0;
  Tensor rgb01;                  // [3, Hp, Wp] padded by edge replication, in [0,1]
  Tensor target01;               // [3, H, W] in [0,1]
  std::array<Tensor, 3> coeffs;  // DCT coefficients per channel, [blocks, 64]

  std::size_t blocks() const { return static_cast<std::size_t>(blocks_wide) * blocks_high; }
};

PreparedImage prepare_image(const RgbImage& img);

enum class Rounding { kSoft, kHard };

/// Z = round~(F .* c .* Qbar) per channel; c_L drives Y, c_C drives Cb and Cr.
std::array<Tensor, 3> neural_encode(const std::array<Tensor, 3>& coeffs, const EditScores& scores,
                                    const LearnableQTables& tables, Rounding rounding,
                                    ad::RoundingSign sign = ad::RoundingSign::kResidualFirst);

/// Dequantised coefficients [blocks, 64] per channel -> RGB [3, H, W] in
/// [0, 255].  The decoder-side edit uses `cell`; passing a zero cell gives
/// the plain inverse-DCT path.
Tensor decode_coefficients(const std::array<Tensor, 3>& dequantized, const PreparedImage& geometry,
                           const Smrnn& cell, std::size_t k, int steps);

/// Dequantises Z with theta / s, then decode_coefficients.
Tensor neural_decode(const std::array<Tensor, 3>& zhat, const LearnableQTables& tables,
                     const PreparedImage& geometry, const Smrnn& cell, std::size_t k, int steps);

struct PipelineOutput {
  Tensor image;                // [3, H, W] in [0, 255]
  std::array<Tensor, 3> zhat;  // [blocks, 64] per channel
  EditScores scores;
  std::optional<double> bpp;
};

struct ForwardOptions {
  Rounding rounding = Rounding::kSoft;
  bool measure_bpp = false;
};

PipelineOutput forward(const Model& model, const PreparedImage& img,
                       const ForwardOptions& options = {});

/// Hard-rounded coefficients quantised with the exported integer tables,
/// clipped to the baseline coefficient range, as the codec consumes them.
QuantizedImage export_coefficients(const Model& model, const PreparedImage& img);

/// Bits per pixel of the real Huffman bitstream for the given coefficients.
double measure_bpp(const QuantizedImage& coeffs, const QuantTablePair& tables, int width,
                   int height);

/// Standard JFIF bitstream for the neural encoder's output.
JfifBitstream encode_neural(const Model& model, const RgbImage& img);

/// Learned reconstruction of the exported integer coefficients: the decoder
/// edit applied to what a stock decoder would dequantise.
RgbImage reconstruct_neural(const Model& model, const RgbImage& img);

/// Constant 64x64 matrix M with block_pixels = M * block_coefficients
/// (natural 8x8 order, orthonormal inverse DCT).
const std::vector<double>& idct_matrix64();

}  // namespace ljpg
