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

// End-to-end acceptance suite.  Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conformance.hpp"
#include "ljpg/codec.hpp"
#include "ljpg/errors.hpp"
#include "ljpg/metrics.hpp"
#include "ljpg/neural_edit.hpp"
#include "ljpg/pipeline.hpp"
#include "ljpg/trainer.hpp"
#include "reference_jpeg.hpp"
#include "test_support.hpp"

using namespace ljpg;
using ljpg::testing::data_path;
using ljpg::testing::load_fixture;

namespace {

// Tolerances and budgets.
constexpr double kConformanceSeconds = 10.0;
constexpr double kDctTolerance = 1e-10;
constexpr double kDctSeconds = 1.0;
constexpr double kOpGradTolerance = 1e-4;
constexpr double kPipelineGradTolerance = 1e-3;
constexpr double kGradEps = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kSoftRoundBound = 0.125;
constexpr double kSoftRoundSlopeTolerance = 1e-10;
constexpr double kSmokeDropRatio = 0.8;
constexpr double kSmokeSeconds = 300.0;
constexpr int kSmokeSteps = 200;
constexpr int kSmoothingWindow = 20;
constexpr double kPsnrAtUnitMse = 48.1308;
constexpr double kPsnrTolerance = 1e-3;
constexpr double kMsssimIdentityTolerance = 1e-9;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++g_failures;
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> uniform(std::size_t n, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Codec --------------------------------------------------------------------------

Outcome codec_conformance() {
  const auto t0 = Clock::now();
  std::ostringstream detail;
  bool ok = true;
  int worst_sample = 0;
  long tie_pixels = 0;
  for (const char* name : {"astronaut.ppm", "chelsea.ppm", "coffee.ppm"}) {
    const RgbImage img = load_fixture(name);
    for (int q : {10, 50, 90}) {
      const auto r = ljpg::testing::check_conformance(encode_baseline(img, quality_tables(q)));
      ok = ok && r.ok() && r.max_diff_off_tie <= 1;
      worst_sample = std::max(worst_sample, r.max_sample_diff);
      tie_pixels += r.tie_exceptions;
      if (!r.ok())
        detail << name << "@q" << q << " max " << r.max_diff << " violations " << r.violations << "; ";
    }
  }
  const double secs = seconds_since(t0);
  detail << fmt("9 streams, Y/Cb/Cr samples max diff %d, RGB max diff 1 except %ld pixels "
                "at exact rounding ties (2), %.2f s",
                worst_sample, tie_pixels, secs);
  return {ok && secs < kConformanceSeconds, detail.str()};
}

Outcome dct_round_trip() {
  std::mt19937 rng(7);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Block b;
    const auto v = uniform(kBlockArea, rng, -128.0, 127.0);
    std::copy(v.begin(), v.end(), b.begin());
    const Block back = idct_block(fdct_block(b));
    for (int k = 0; k < kBlockArea; ++k) worst = std::max(worst, std::abs(back[k] - b[k]));
  }
  const double secs = seconds_since(t0);
  return {worst < kDctTolerance && secs < kDctSeconds,
          fmt("max error %.3g over 1000 blocks, %.3f s", worst, secs)};
}

// Autodiff -----------------------------------------------------------------------

using ad::ScalarFn;
using ad::Shape;

ScalarFn weighted(std::function<Tensor(const Tensor&)> op, const Shape& out_shape, std::mt19937& rng) {
  const Tensor w = Tensor::constant(out_shape, uniform(ad::shape_size(out_shape), rng));
  return [op = std::move(op), w](const Tensor& x) { return ad::reduce_sum(ad::mul(op(x), w)); };
}

// Keeps samples off the kinks of rounding, clamping and |x|, and off the
// flat points of the cubic where central differences lose relative accuracy.
double nudge(double x, const std::string& op) {
  const double frac = std::abs(std::abs(x - std::trunc(x)) - 0.5);
  if ((op.starts_with("soft_round") || op == "hard_round") && frac < 1e-3) x += 0.01;
  if (op.starts_with("soft_round") && std::abs(x - std::round(x)) < 0.1) x += 0.2;
  if ((op == "reduce_l1" || op == "reciprocal") && std::abs(x) < 0.25) x += x < 0 ? -0.25 : 0.25;
  if (op == "clamp" && std::abs(std::abs(x) - 1.0) < 1e-3) x *= 1.01;
  return x;
}

struct OpCase {
  std::string name;
  Shape in;
  Shape out;
  std::function<Tensor(const Tensor&)> op;
};

std::vector<OpCase> op_cases(std::mt19937& rng) {
  using namespace ljpg::ad;
  const Tensor b34 = Tensor::constant({3, 4}, uniform(12, rng));
  const Tensor b42 = Tensor::constant({4, 2}, uniform(8, rng));
  const Tensor cw = Tensor::constant({2, 2, 3, 3}, uniform(36, rng));
  const Tensor cb = Tensor::constant({2}, uniform(2, rng));
  const Tensor cx = Tensor::constant({2, 6, 6}, uniform(72, rng));
  const Tensor other = Tensor::constant({2, 3}, uniform(6, rng));
  auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{5, 0, 0, 3, 2, 1, 4, 4});
  return {
      {"add", {3, 4}, {3, 4}, [b34](const Tensor& x) { return add(x, b34); }},
      {"sub", {3, 4}, {3, 4}, [b34](const Tensor& x) { return sub(b34, x); }},
      {"mul", {3, 4}, {3, 4}, [](const Tensor& x) { return mul(x, x); }},
      {"matmul", {3, 4}, {3, 2}, [b42](const Tensor& x) { return matmul(x, b42); }},
      {"transpose", {3, 4}, {4, 3}, [](const Tensor& x) { return transpose(x); }},
      {"conv2d_input", {2, 6, 6}, {2, 3, 3}, [cw, cb](const Tensor& x) { return conv2d(x, cw, cb, 2, 1); }},
      {"conv2d_weight", {2, 2, 3, 3}, {2, 6, 6}, [cx, cb](const Tensor& w) { return conv2d(cx, w, cb, 1, 1); }},
      {"conv2d_bias", {2}, {2, 4, 4}, [cx, cw](const Tensor& b) { return conv2d(cx, cw, b, 1, 0); }},
      {"avg_pool2d", {2, 4, 4}, {2, 2, 2}, [](const Tensor& x) { return avg_pool2d(x, 2); }},
      {"sigmoid", {3, 4}, {3, 4}, [](const Tensor& x) { return sigmoid(x); }},
      {"tanh", {3, 4}, {3, 4}, [](const Tensor& x) { return ad::tanh(x); }},
      {"reduce_mean", {3, 4}, {}, [](const Tensor& x) { return reduce_mean(x); }},
      {"reduce_sum", {3, 4}, {}, [](const Tensor& x) { return reduce_sum(x); }},
      {"reduce_l1", {3, 4}, {}, [](const Tensor& x) { return reduce_l1(x); }},
      {"clamp", {3, 4}, {3, 4}, [](const Tensor& x) { return clamp(x, -1.0, 1.0); }},
      {"scalar_mul", {3, 4}, {3, 4}, [](const Tensor& x) { return scalar_mul(x, -2.5); }},
      {"add_scalar", {3, 4}, {3, 4}, [](const Tensor& x) { return add_scalar(x, 0.7); }},
      {"reciprocal", {3, 4}, {3, 4}, [](const Tensor& x) { return reciprocal(x); }},
      {"reshape", {3, 4}, {2, 6}, [](const Tensor& x) { return reshape(x, {2, 6}); }},
      {"concat", {2, 3}, {2, 6}, [other](const Tensor& x) { return concat({other, x}, 1); }},
      {"gather", {2, 3}, {8}, [idx](const Tensor& x) { return gather(x, idx, {8}); }},
      {"soft_round", {3, 4}, {3, 4}, [](const Tensor& x) { return soft_round(x); }},
      {"soft_round_input_first", {3, 4}, {3, 4},
       [](const Tensor& x) { return soft_round(x, RoundingSign::kInputFirst); }},
      {"hard_round", {3, 4}, {3, 4}, [](const Tensor& x) { return hard_round(x); }},
      {"kwta", {3, 8}, {3, 8}, [](const Tensor& x) { return kwta(x, 3); }},
  };
}

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  std::mt19937 rng(2024);
  double worst_op = 0.0;
  std::string worst_name;
  for (const OpCase& c : op_cases(rng)) {
    const ScalarFn fn = weighted(c.op, c.out, rng);
    for (int trial = 0; trial < 10; ++trial) {
      auto v = uniform(ad::shape_size(c.in), rng);
      for (double& x : v) x = nudge(x, c.name);
      const double e = ad::grad_check(fn, Tensor::constant(c.in, v), kGradEps);
      if (e > worst_op) {
        worst_op = e;
        worst_name = c.name;
      }
    }
  }

  // d(total loss)/d(table) through the whole pipeline, in integer-table
  // units u = theta / s where a step of eps is meaningful.
  const PreparedImage img = prepare_image(load_fixture("astronaut.ppm").crop(260, 240, 16, 16));
  Model model = Model::init({}, 21);
  model.tables = LearnableQTables::from_tables(quality_tables(75), model.config.scale);
  const LossConfig loss;
  double worst_pipe = 0.0;
  for (Channel ch : {Channel::Y, Channel::Cb}) {
    const auto fn = [&](const Tensor& u) {
      Model local = model;
      (ch == Channel::Y ? local.tables.luma : local.tables.chroma) = ad::scalar_mul(u, model.tables.scale);
      return sample_loss(local, img, loss).total;
    };
    worst_pipe = std::max(worst_pipe, ad::grad_check(fn, model.tables.divisors(ch).detach(), kGradEps));
  }
  const double secs = seconds_since(t0);
  return {worst_op < kOpGradTolerance && worst_pipe < kPipelineGradTolerance && secs < kGradSeconds,
          fmt("ops max rel err %.3g (%s), pipeline %.3g, %.1f s", worst_op, worst_name.c_str(),
              worst_pipe, secs)};
}

Outcome soft_round_sweep() {
  constexpr std::size_t n = 1'000'000;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = -20.0 + 40.0 * (static_cast<double>(i) + 0.5) / n;
  const Tensor x = Tensor::parameter({n}, v);
  const Tensor s = ad::soft_round(x);
  ad::backward(ad::reduce_sum(s));
  const auto sv = s.values();
  const auto g = x.grad();
  double worst_gap = 0.0, worst_slope = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::round(v[i]);
    worst_gap = std::max(worst_gap, std::abs(sv[i] - r));
    worst_slope = std::max(worst_slope, std::abs(g[i] + 3.0 * (r - v[i]) * (r - v[i])));
  }
  bool exact = true;
  std::vector<double> ints;
  for (int k = -50; k <= 50; ++k) ints.push_back(k);
  const Tensor at_ints = ad::soft_round(Tensor::constant({ints.size()}, ints));
  for (std::size_t i = 0; i < ints.size(); ++i) exact = exact && at_ints.values()[i] == ints[i];
  return {exact && worst_gap <= kSoftRoundBound && worst_slope <= kSoftRoundSlopeTolerance,
          fmt("exact at integers %s, max |soft-hard| %.6f, max slope error %.3g", exact ? "yes" : "no",
              worst_gap, worst_slope)};
}

Outcome kwta_oracle() {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> ks(0, 64);
  std::uniform_int_distribution<int> levels(-4, 4);
  long mismatches = 0, tie_vectors = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> v = uniform(64, rng);
    if (t % 4 == 0) {  // heavy ties from a coarse grid
      for (double& x : v) x = 0.25 * levels(rng);
      ++tie_vectors;
    }
    const auto k = static_cast<std::size_t>(ks(rng));
    std::vector<std::size_t> idx(64);
    std::iota(idx.begin(), idx.end(), 0);
    // larger value wins, lower index breaks ties
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    const std::set<std::size_t> support(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    const auto out = kwta(v, k);
    for (std::size_t i = 0; i < 64; ++i)
      if (out[i] != (support.count(i) ? v[i] : 0.0)) {
        ++mismatches;
        break;
      }
  }
  return {mismatches == 0,
          fmt("%ld mismatching vectors of 10000 (%ld with ties)", mismatches, tie_vectors)};
}

Outcome baseline_equivalence() {
  std::mt19937 rng(11);
  constexpr std::size_t blocks = 100;
  std::vector<Block> coeffs(blocks);
  std::vector<double> flat;
  for (Block& b : coeffs) {
    Block spatial;
    const auto v = uniform(kBlockArea, rng, -128.0, 127.0);
    std::copy(v.begin(), v.end(), spatial.begin());
    b = fdct_block(spatial);
    flat.insert(flat.end(), b.begin(), b.end());
  }
  const Tensor c = Tensor::constant({blocks, kBlockArea}, flat);
  const EditScores ones{Tensor::full({blocks, kBlockArea}, 1.0), Tensor::full({blocks, kBlockArea}, 1.0)};
  long mismatches = 0;
  for (int q : {25, 50, 90}) {
    const QuantTablePair tables = quality_tables(q);
    const auto z = neural_encode({c, c, c}, ones, LearnableQTables::from_tables(tables, 1e-4), Rounding::kHard);
    for (int ch = 0; ch < 3; ++ch) {
      const auto zv = z[static_cast<std::size_t>(ch)].values();
      for (std::size_t b = 0; b < blocks; ++b) {
        const IntBlock ref = quantize_block(coeffs[b], ch == 0 ? tables.luma : tables.chroma);
        for (int i = 0; i < kBlockArea; ++i)
          mismatches += zv[b * kBlockArea + static_cast<std::size_t>(i)] != static_cast<double>(ref[i]);
      }
    }
  }
  return {mismatches == 0, fmt("%ld differing coefficients over 100 blocks x 3 channels x 3 qualities", mismatches)};
}

// Training ---------------------------------------------------------------------

struct SmokeRun {
  std::vector<StepStats> steps;
  bool clamp_held = true;
  double seconds = 0.0;
  Model model;
};

TrainConfig smoke_config(double alpha) {
  TrainConfig c;
  c.patch_size = 64;
  c.patches = 8;
  c.batch_size = 8;
  c.steps = kSmokeSteps;
  c.seed = 1;
  c.loss.alpha = alpha;
  return c;
}

// Training images exclude chelsea, which supplies the held-out patch.
std::vector<RgbImage> smoke_patches(const TrainConfig& c) {
  const ljpg::testing::TempDir dir;
  for (const char* name : {"astronaut.ppm", "coffee.ppm"})
    std::filesystem::copy_file(data_path(name), dir / name);
  return load_patches(dir.path(), c.patch_size, c.patches, c.seed);
}

SmokeRun run_smoke(double alpha) {
  const TrainConfig cfg = smoke_config(alpha);
  SmokeRun run;
  const auto t0 = Clock::now();
  Trainer tr(cfg, smoke_patches(cfg));
  while (!tr.done()) {
    run.steps.push_back(tr.step());
    const LearnableQTables& t = tr.model().tables;
    for (const Tensor* q : {&t.luma, &t.chroma})
      for (double v : q->values()) run.clamp_held = run.clamp_held && v >= t.lower() && v <= t.upper();
  }
  run.seconds = seconds_since(t0);
  run.model = tr.model();
  return run;
}

double smoothed_final(const SmokeRun& r) {
  double sum = 0.0;
  for (std::size_t i = r.steps.size() - kSmoothingWindow; i < r.steps.size(); ++i) sum += r.steps[i].loss;
  return sum / kSmoothingWindow;
}

double multiplier_l1(const Model& m) {
  double sum = 0.0;
  for (Channel ch : {Channel::Y, Channel::Cb}) {
    const Tensor mult = m.tables.multipliers(ch);
    for (double v : mult.values()) sum += std::abs(v);
  }
  return sum;
}

double heldout_bpp(const Model& m) {
  const RgbImage patch = load_fixture("chelsea.ppm").crop(200, 120, 64, 64);
  return bits_per_pixel(encode_neural(m, patch).size(), patch.width, patch.height);
}

Outcome training_smoke(const SmokeRun& a, const SmokeRun& b) {
  const double first = a.steps.front().loss;
  const double last = smoothed_final(a);
  bool identical = a.steps.size() == b.steps.size();
  for (std::size_t i = 0; identical && i < a.steps.size(); ++i)
    identical = a.steps[i].loss == b.steps[i].loss && a.steps[i].d == b.steps[i].d &&
                a.steps[i].r == b.steps[i].r && a.steps[i].al == b.steps[i].al;
  const bool ok = last <= kSmokeDropRatio * first && a.clamp_held && b.clamp_held && identical &&
                  a.seconds < kSmokeSeconds;
  return {ok, fmt("step-1 loss %.6f, last-%d mean %.6f (ratio %.3f), clamp %s, repeat %s, %.1f s",
                  first, kSmoothingWindow, last, last / first, a.clamp_held && b.clamp_held ? "held" : "BROKEN",
                  identical ? "bit-exact" : "DIFFERS", a.seconds)};
}

Outcome rate_lever(const SmokeRun& base, const SmokeRun& heavy) {
  const double l1_base = multiplier_l1(base.model), l1_heavy = multiplier_l1(heavy.model);
  const double bpp_base = heldout_bpp(base.model), bpp_heavy = heldout_bpp(heavy.model);
  return {l1_heavy < l1_base && bpp_heavy < bpp_base,
          fmt("alpha 1e-3 -> 1e-2: table L1 %.4f -> %.4f, held-out bpp %.4f -> %.4f", l1_base, l1_heavy,
              bpp_base, bpp_heavy)};
}

// Metrics and interop ------------------------------------------------------------

Outcome metric_values() {
  const double p = psnr_from_mse(1.0);
  const RgbImage img = load_fixture("coffee.ppm");
  const double ms = msssim(img, img);
  const double db = msssim_db(0.9);
  return {std::abs(p - kPsnrAtUnitMse) <= kPsnrTolerance && std::abs(ms - 1.0) <= kMsssimIdentityTolerance &&
              db == 10.0,
          fmt("PSNR(MSE=1) %.6f dB, MS-SSIM(x,x) 1%+.3g, msssim_db(0.9) %.17g", p, ms - 1.0, db)};
}

Outcome interop(const Model& trained) {
  const RgbImage img = load_fixture("chelsea.ppm");
  const JfifBitstream bs = encode_neural(trained, img);
  const auto segments = scan_segments(bs);
  std::vector<std::uint8_t> markers;
  for (const Segment& s : segments) markers.push_back(s.marker);
  const auto has = [&](std::uint8_t m) { return std::find(markers.begin(), markers.end(), m) != markers.end(); };
  const bool framing = markers.front() == 0xD8 && markers.back() == 0xD9 && has(0xC0) && has(0xDB) &&
                       has(0xC4) && has(0xDA) && !has(0xC2);
  const auto ref = ljpg::testing::reference_decode(bs);
  const bool dims = ref.width == img.width && ref.height == img.height && ref.components == 3;
  return {framing && dims && ref.warnings == 0,
          fmt("%zu segments, SOI..EOI %s, libjpeg %dx%dx%d with %d warnings", segments.size(),
              framing ? "ok" : "BAD", ref.width, ref.height, ref.components, ref.warnings)};
}

}  // namespace

int main() {
  report("codec conformance", codec_conformance);
  report("dct round trip", dct_round_trip);
  report("gradient integrity", gradient_integrity);
  report("soft-round surrogate", soft_round_sweep);
  report("kwta oracle", kwta_oracle);
  report("baseline equivalence", baseline_equivalence);

  SmokeRun base, repeat, heavy;
  report("training smoke", [&] {
    base = run_smoke(1e-3);
    repeat = run_smoke(1e-3);
    return training_smoke(base, repeat);
  });
  report("rate lever", [&] {
    heavy = run_smoke(1e-2);
    return rate_lever(base, heavy);
  });
  report("metrics", metric_values);
  report("interop", [&] { return interop(base.steps.empty() ? Model::init({}, 1) : base.model); });

  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
