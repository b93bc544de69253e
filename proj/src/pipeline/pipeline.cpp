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

#include "ljpg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ljpg/errors.hpp"

namespace ljpg {

using namespace ad;

namespace {

constexpr double kDecoderInputScale = 1.0 / 1024.0;
constexpr int kMaxExportMagnitude = 1023;

Tensor table_tensor(const QuantTable& t, double scale) {
  std::vector<double> v(kBlockArea);
  for (int i = 0; i < kBlockArea; ++i) v[i] = scale * t[i];
  return Tensor::parameter({8, 8}, std::move(v));
}

// [1, 64] row repeated for every block -> [blocks, 64].
Tensor tile_rows(const Tensor& row64, std::size_t blocks) {
  return matmul(Tensor::full({blocks, 1}, 1.0), reshape(row64, {1, kBlockArea}));
}

void check_coeff_shapes(const std::array<Tensor, 3>& t, std::size_t blocks, const char* what) {
  for (const Tensor& c : t)
    if (c.shape() != Shape{blocks, static_cast<std::size_t>(kBlockArea)})
      throw ShapeError(std::string(what) + ": expected [" + std::to_string(blocks) +
                       ",64] coefficients, got " + shape_str(c.shape()));
}

// Index map from the stacked [3 * blocks, 64] block-pixel tensor into the
// cropped [3, H * W] planes.
std::shared_ptr<const std::vector<std::size_t>> unblock_index(const PreparedImage& g) {
  const std::size_t plane = static_cast<std::size_t>(g.width) * g.height;
  const std::size_t per_channel = g.blocks() * kBlockArea;
  auto index = std::make_shared<std::vector<std::size_t>>(3 * plane);
  for (std::size_t c = 0; c < 3; ++c)
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x) {
        const std::size_t block = static_cast<std::size_t>(y / 8) * g.blocks_wide + x / 8;
        (*index)[c * plane + static_cast<std::size_t>(y) * g.width + x] =
            c * per_channel + block * kBlockArea + (y % 8) * 8 + (x % 8);
      }
  return index;
}

const Tensor& ycc_to_rgb_matrix() {
  static const Tensor m = Tensor::constant(
      {3, 3}, {1.0, 0.0, 1.402, 1.0, -0.344136, -0.714136, 1.0, 1.772, 0.0});
  return m;
}

}  // namespace

// Tables ---------------------------------------------------------------------

Tensor LearnableQTables::multipliers(Channel ch) const {
  return scalar_mul(reciprocal(theta(ch)), scale);
}

Tensor LearnableQTables::divisors(Channel ch) const { return scalar_mul(theta(ch), 1.0 / scale); }

void LearnableQTables::clamp() {
  for (Tensor* t : {&luma, &chroma})
    for (double& v : t->mutable_values()) v = std::clamp(v, lower(), upper());
}

LearnableQTables LearnableQTables::from_tables(const QuantTablePair& tables, double scale) {
  if (!(scale > 0.0)) throw InvalidArgument("table scale s must be positive");
  tables.validate();
  return {table_tensor(tables.luma, scale), table_tensor(tables.chroma, scale), scale};
}

LearnableQTables init_qtables(double scale, std::uint64_t seed) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw InvalidArgument("init_qtables: s must be positive and finite, got " + std::to_string(scale));
  Rng rng(seed);
  auto draw = [&] {
    std::vector<double> v(kBlockArea);
    for (double& x : v) x = rng.uniform(scale, 2.0 * scale);
    return Tensor::parameter({8, 8}, std::move(v));
  };
  LearnableQTables q;
  q.luma = draw();
  q.chroma = draw();
  q.scale = scale;
  return q;
}

QuantTablePair export_qtables(const LearnableQTables& q) {
  auto one = [&](const Tensor& t) {
    QuantTable out{};
    const auto v = t.values();
    for (int i = 0; i < kBlockArea; ++i) {
      const double r = std::round(v[i] / q.scale);
      out[i] = std::isfinite(r) ? static_cast<int>(std::clamp(r, 1.0, 255.0)) : 255;
    }
    return out;
  };
  return {one(q.luma), one(q.chroma)};
}

// Model ----------------------------------------------------------------------

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  if (config.k > static_cast<std::size_t>(kBlockArea))
    throw InvalidArgument("kWTA k must be at most 64, got " + std::to_string(config.k));
  if (config.steps < 0) throw InvalidArgument("refinement steps must be >= 0");
  Rng rng(seed);
  Model m;
  m.config = config;
  m.stem = VisionStem::init(rng);
  m.cell = Smrnn::init(config.hidden, kBlockArea, rng);
  m.tables = init_qtables(config.scale, rng.next());
  return m;
}

std::vector<std::pair<std::string, Tensor>> Model::named() const {
  auto out = stem.named();
  for (auto& p : cell.named()) out.push_back(std::move(p));
  out.emplace_back("qtable.luma", tables.luma);
  out.emplace_back("qtable.chroma", tables.chroma);
  return out;
}

bool Model::is_qtable(const std::string& name) { return name.rfind("qtable.", 0) == 0; }

// Pipeline -------------------------------------------------------------------

const std::vector<double>& idct_matrix64() {
  static const std::vector<double> m = [] {
    std::vector<double> out(kBlockArea * kBlockArea);
    for (int j = 0; j < kBlockArea; ++j) {
      Block e{};
      e[j] = 1.0;
      const Block col = idct_block(e);
      for (int i = 0; i < kBlockArea; ++i) out[i * kBlockArea + j] = col[i];
    }
    return out;
  }();
  return m;
}

PreparedImage prepare_image(const RgbImage& img) {
  if (img.width <= 0 || img.height <= 0) throw InvalidArgument("prepare_image: empty image");
  PreparedImage p;
  p.width = img.width;
  p.height = img.height;
  p.blocks_wide = blocks_for(img.width);
  p.blocks_high = blocks_for(img.height);
  const std::size_t wp = static_cast<std::size_t>(p.blocks_wide) * 8;
  const std::size_t hp = static_cast<std::size_t>(p.blocks_high) * 8;

  std::vector<double> padded(3 * hp * wp);
  std::vector<double> target(3 * img.pixel_count());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < hp; ++y)
      for (std::size_t x = 0; x < wp; ++x) {
        const int sx = std::min(static_cast<int>(x), img.width - 1);
        const int sy = std::min(static_cast<int>(y), img.height - 1);
        const double v = img.at(sx, sy, static_cast<int>(c)) / 255.0;
        padded[(c * hp + y) * wp + x] = v;
        if (static_cast<int>(x) < img.width && static_cast<int>(y) < img.height)
          target[(c * img.height + y) * img.width + x] = v;
      }
  p.rgb01 = Tensor::constant({3, hp, wp}, std::move(padded));
  p.target01 = Tensor::constant(
      {3, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)},
      std::move(target));

  const auto grids = image_coefficients(img);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> v;
    v.reserve(p.blocks() * kBlockArea);
    for (const Block& b : grids[c].blocks) v.insert(v.end(), b.begin(), b.end());
    p.coeffs[c] = Tensor::constant({p.blocks(), static_cast<std::size_t>(kBlockArea)}, std::move(v));
  }
  return p;
}

std::array<Tensor, 3> neural_encode(const std::array<Tensor, 3>& coeffs, const EditScores& scores,
                                    const LearnableQTables& tables, Rounding rounding,
                                    RoundingSign sign) {
  const std::size_t blocks = coeffs[0].dim(0);
  check_coeff_shapes(coeffs, blocks, "neural_encode");
  check_coeff_shapes({scores.luma, scores.chroma, scores.chroma}, blocks, "neural_encode scores");
  const Tensor qbar_l = tile_rows(tables.multipliers(Channel::Y), blocks);
  const Tensor qbar_c = tile_rows(tables.multipliers(Channel::Cb), blocks);
  std::array<Tensor, 3> out;
  for (int c = 0; c < 3; ++c) {
    const bool luma = c == 0;
    const Tensor scaled = mul(mul(coeffs[c], luma ? scores.luma : scores.chroma), luma ? qbar_l : qbar_c);
    out[c] = rounding == Rounding::kSoft ? soft_round(scaled, sign) : hard_round(scaled);
  }
  return out;
}

Tensor decode_coefficients(const std::array<Tensor, 3>& dequantized, const PreparedImage& geometry,
                           const Smrnn& cell, std::size_t k, int steps) {
  const std::size_t blocks = geometry.blocks();
  check_coeff_shapes(dequantized, blocks, "decode_coefficients");
  static const Tensor idct_t = transpose(Tensor::constant({64, 64}, idct_matrix64()));

  std::vector<Tensor> channels;
  channels.reserve(3);
  for (const Tensor& deq : dequantized) {
    const Tensor pixels = matmul(deq, idct_t);  // level-shifted block pixels
    const Tensor edit = edit_branch(scalar_mul(deq, kDecoderInputScale), cell, k, steps);
    channels.push_back(mul(pixels, add_scalar(edit, 1.0)));
  }
  const std::size_t plane = static_cast<std::size_t>(geometry.width) * geometry.height;
  const Tensor centred = gather(concat(channels, 0), unblock_index(geometry), {3, plane});
  const Tensor rgb = clamp(add_scalar(matmul(ycc_to_rgb_matrix(), centred), 128.0), 0.0, 255.0);
  return reshape(rgb, {3, static_cast<std::size_t>(geometry.height),
                       static_cast<std::size_t>(geometry.width)});
}

Tensor neural_decode(const std::array<Tensor, 3>& zhat, const LearnableQTables& tables,
                     const PreparedImage& geometry, const Smrnn& cell, std::size_t k, int steps) {
  const std::size_t blocks = geometry.blocks();
  check_coeff_shapes(zhat, blocks, "neural_decode");
  const Tensor q_l = tile_rows(tables.divisors(Channel::Y), blocks);
  const Tensor q_c = tile_rows(tables.divisors(Channel::Cb), blocks);
  return decode_coefficients({mul(zhat[0], q_l), mul(zhat[1], q_c), mul(zhat[2], q_c)}, geometry,
                             cell, k, steps);
}

PipelineOutput forward(const Model& model, const PreparedImage& img, const ForwardOptions& options) {
  const ModelConfig& cfg = model.config;
  PipelineOutput out;
  out.scores = edit_scores(img.rgb01, model.stem, model.cell, cfg.k, cfg.steps);
  out.zhat = neural_encode(img.coeffs, out.scores, model.tables, options.rounding, cfg.rounding_sign);
  out.image = neural_decode(out.zhat, model.tables, img, model.cell, cfg.k, cfg.steps);
  if (options.measure_bpp)
    out.bpp = measure_bpp(export_coefficients(model, img), export_qtables(model.tables), img.width,
                          img.height);
  return out;
}

namespace {

QuantizedImage quantize_exported(const PreparedImage& img, const EditScores& scores,
                                 const QuantTablePair& tables) {
  QuantizedImage q;
  for (int c = 0; c < 3; ++c) {
    QuantizedGrid& g = q[c];
    g.channel = static_cast<Channel>(c);
    g.width = img.width;
    g.height = img.height;
    g.blocks_wide = img.blocks_wide;
    g.blocks_high = img.blocks_high;
    g.blocks.resize(img.blocks());
    const QuantTable& table = c == 0 ? tables.luma : tables.chroma;
    const auto f = img.coeffs[c].values();
    const auto e = (c == 0 ? scores.luma : scores.chroma).values();
    for (std::size_t b = 0; b < img.blocks(); ++b)
      for (int i = 0; i < kBlockArea; ++i) {
        const std::size_t j = b * kBlockArea + i;
        const double r = std::round(f[j] * e[j] / table[i]);
        if (!std::isfinite(r)) throw NumericError("export: non-finite coefficient");
        g.blocks[b][i] = static_cast<int>(
            std::clamp(r, -static_cast<double>(kMaxExportMagnitude), double{kMaxExportMagnitude}));
      }
  }
  return q;
}

}  // namespace

QuantizedImage export_coefficients(const Model& model, const PreparedImage& img) {
  NoGradGuard no_grad;
  const EditScores scores =
      edit_scores(img.rgb01, model.stem, model.cell, model.config.k, model.config.steps);
  return quantize_exported(img, scores, export_qtables(model.tables));
}

double measure_bpp(const QuantizedImage& coeffs, const QuantTablePair& tables, int width,
                   int height) {
  return bits_per_pixel(entropy_encode(coeffs, tables).size(), width, height);
}

JfifBitstream encode_neural(const Model& model, const RgbImage& img) {
  const PreparedImage p = prepare_image(img);
  return entropy_encode(export_coefficients(model, p), export_qtables(model.tables));
}

RgbImage reconstruct_neural(const Model& model, const RgbImage& img) {
  NoGradGuard no_grad;
  const PreparedImage p = prepare_image(img);
  const QuantTablePair tables = export_qtables(model.tables);
  const QuantizedImage q = export_coefficients(model, p);
  std::array<Tensor, 3> deq;
  for (int c = 0; c < 3; ++c) {
    const QuantTable& t = c == 0 ? tables.luma : tables.chroma;
    std::vector<double> v;
    v.reserve(p.blocks() * kBlockArea);
    for (const IntBlock& b : q[c].blocks)
      for (int i = 0; i < kBlockArea; ++i) v.push_back(static_cast<double>(b[i]) * t[i]);
    deq[c] = Tensor::constant({p.blocks(), static_cast<std::size_t>(kBlockArea)}, std::move(v));
  }
  const Tensor rgb =
      decode_coefficients(deq, p, model.cell, model.config.k, model.config.steps);
  RgbImage out(img.width, img.height);
  const auto v = rgb.values();
  const std::size_t plane = img.pixel_count();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out.data[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::round(v[c * plane + i]), 0.0, 255.0));
  return out;
}

}  // namespace ljpg
