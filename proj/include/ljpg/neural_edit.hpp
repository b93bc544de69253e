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

// Per-block edit scores: a stride-8 convolutional stem turns the image
// into one 128-vector per 8x8 block, which is split into a luma and a
// chroma 8x8 map.  A sparse multiplicative RNN refines each map for K
// steps and k-winners-take-all keeps the strongest entries.
//
// Tensor layouts: images are [3, H, W]; per-block quantities are
// [blocks, 64] with blocks in raster order and the 64 entries in natural
// 8x8 order.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ljpg/tensor.hpp"

namespace ljpg {

using ad::Tensor;

/// Deterministic generator shared by all initialisers (SplitMix64).  Unlike
/// the standard distributions its output does not depend on the standard
/// library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

/// Three stride-2 3x3 convolutions (3->32->64->256, tanh) followed by a
/// 1x1 reduction to 128 channels and a sigmoid.
struct VisionStem {
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor conv3_w, conv3_b;
  Tensor reduce_w, reduce_b;

  static constexpr std::size_t kSiteChannels = 128;

  /// Glorot-uniform convolutions; the 1x1 reduction starts from orthonormal rows.
  static VisionStem init(Rng& rng);
  static VisionStem zeros();
  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix = "stem.") const;
};

/// image: [3, H, W] with H, W multiples of 8 and values in [0,1].
/// Returns [blocks, 128] site features in (0,1).
Tensor stem_forward(const Tensor& image, const VisionStem& stem);

struct EditMaps {
  Tensor luma;    // H_L: [blocks, 64]
  Tensor chroma;  // H_C: [blocks, 64]
};

/// Splits stem sites into the luma (channels 0-63) and chroma (64-127) maps.
EditMaps split_edit_maps(const Tensor& sites);

/// Weights of the multiplicative recurrent cell; input size n, hidden size h.
///   f_k = (W_f x) .* (V_f z_{k-1})
///   z_k = tanh(V_z f_k + W_z x)
/// and the readout U z_K.
struct Smrnn {
  Tensor wf;  // [h, n]
  Tensor vf;  // [h, h]
  Tensor vz;  // [h, h]
  Tensor wz;  // [h, n]
  Tensor u;   // [n, h]

  static Smrnn init(std::size_t hidden, std::size_t input, Rng& rng);
  static Smrnn zeros(std::size_t hidden, std::size_t input);
  std::size_t hidden() const { return wf.dim(0); }
  std::size_t input() const { return wf.dim(1); }
  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix = "smrnn.") const;
};

/// Runs `steps` refinement iterations for every row of `maps` ([rows, n])
/// from the initial state z0 ([rows, h]) and returns z_K.
Tensor smrnn_refine(const Tensor& maps, const Tensor& z0, const Smrnn& cell, int steps);

/// kWTA over a plain vector: keeps the k largest values (ties favour the
/// lower index) and zeroes everything else.
std::vector<double> kwta(std::span<const double> v, std::size_t k);

struct EditScores {
  Tensor luma;    // c_L: [blocks, 64]
  Tensor chroma;  // c_C: [blocks, 64]
};

/// kWTA(U z_K, k) for each row of `maps`, starting from z0 = 0.
Tensor edit_branch(const Tensor& maps, const Smrnn& cell, std::size_t k, int steps);

/// Full encoder-side editor: stem -> split -> SM-RNN -> kWTA, run
/// independently on the luma and chroma maps with the same cell.
EditScores edit_scores(const Tensor& image, const VisionStem& stem, const Smrnn& cell,
                       std::size_t k, int steps);

}  // namespace ljpg
