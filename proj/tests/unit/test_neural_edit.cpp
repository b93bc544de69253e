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
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "ljpg/errors.hpp"
#include "ljpg/neural_edit.hpp"

using namespace ljpg;
using ljpg::ad::Shape;

namespace {

Tensor random_image01(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(3 * h * w);
  for (double& x : v) x = rng.uniform();
  return Tensor::constant({3, h, w}, std::move(v));
}

Tensor random_constant(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::constant(std::move(shape), std::move(v));
}

Tensor scalar_param(double v) { return Tensor::parameter({1, 1}, {v}); }

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Straight-line evaluation of the recurrence for one input row.
std::vector<double> manual_refine(std::span<const double> x, std::vector<double> z, const Smrnn& c,
                                  int steps) {
  const std::size_t h = c.hidden(), n = c.input();
  const auto wf = c.wf.values(), vf = c.vf.values(), vz = c.vz.values(), wz = c.wz.values();
  for (int k = 0; k < steps; ++k) {
    std::vector<double> f(h), next(h);
    for (std::size_t i = 0; i < h; ++i) {
      double gate = 0.0, rec = 0.0;
      for (std::size_t j = 0; j < n; ++j) gate += wf[i * n + j] * x[j];
      for (std::size_t j = 0; j < h; ++j) rec += vf[i * h + j] * z[j];
      f[i] = gate * rec;
    }
    for (std::size_t i = 0; i < h; ++i) {
      double a = 0.0;
      for (std::size_t j = 0; j < h; ++j) a += vz[i * h + j] * f[j];
      for (std::size_t j = 0; j < n; ++j) a += wz[i * n + j] * x[j];
      next[i] = std::tanh(a);
    }
    z = std::move(next);
  }
  return z;
}

// Indices of the k largest entries by a full sort (stable on ties).
std::set<std::size_t> top_k_support(std::span<const double> v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(k, v.size()))};
}

}  // namespace

TEST_SUITE("rng") {
  TEST_CASE("same seed, same stream") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next();
      CHECK(x == b.next());
      CHECK(x != c.next());
    }
  }

  TEST_CASE("uniform and below stay in range") {
    Rng r(7);
    for (int i = 0; i < 10000; ++i) {
      const double u = r.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      CHECK(r.below(13) < 13u);
    }
  }
}

TEST_SUITE("stem") {
  TEST_CASE("zero weights give one half everywhere") {
    const Tensor sites = stem_forward(random_image01(16, 24, 1), VisionStem::zeros());
    CHECK(sites.shape() == Shape{6, VisionStem::kSiteChannels});
    for (double v : sites.values()) CHECK(v == 0.5);
  }

  TEST_CASE("16x16 image gives four sites with two 8x8 maps each") {
    Rng rng(3);
    const VisionStem stem = VisionStem::init(rng);
    const EditMaps maps = split_edit_maps(stem_forward(random_image01(16, 16, 2), stem));
    CHECK(maps.luma.shape() == Shape{4, 64});
    CHECK(maps.chroma.shape() == Shape{4, 64});
  }

  TEST_CASE("maps are bounded by [0,1] for random weights and inputs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const VisionStem stem = VisionStem::init(rng);
      const Tensor sites = stem_forward(random_image01(24, 32, seed + 10), stem);
      const auto [lo, hi] = std::minmax_element(sites.values().begin(), sites.values().end());
      CHECK(*lo >= 0.0);
      CHECK(*hi <= 1.0);
    }
  }

  TEST_CASE("split takes the first and second halves of each site") {
    std::vector<double> v(2 * 128);
    std::iota(v.begin(), v.end(), 0.0);
    const EditMaps maps = split_edit_maps(Tensor::constant({2, 128}, v));
    CHECK(maps.luma[0] == 0.0);
    CHECK(maps.luma[63] == 63.0);
    CHECK(maps.chroma[0] == 64.0);
    CHECK(maps.chroma[64] == 192.0);
  }

  TEST_CASE("dimensions must be block multiples") {
    CHECK_THROWS_AS(stem_forward(random_image01(12, 16, 1), VisionStem::zeros()), ShapeError);
  }

  TEST_CASE("named parameters") {
    Rng rng(0);
    const auto named = VisionStem::init(rng).named();
    CHECK(named.size() == 8);
    CHECK(named.front().first == "stem.conv1.w");
    CHECK(named.front().second.shape() == Shape{32, 3, 3, 3});
    CHECK(named[6].second.shape() == Shape{128, 256, 1, 1});
  }
}

TEST_SUITE("smrnn") {
  TEST_CASE("zero weights give a zero state") {
    const Smrnn cell = Smrnn::zeros(16, 64);
    Rng rng(1);
    const Tensor x = random_constant({5, 64}, rng, 0.0, 1.0);
    const Tensor z0 = random_constant({5, 16}, rng, -1.0, 1.0);
    for (int k : {1, 2, 3, 7}) {
      const Tensor z = smrnn_refine(x, z0, cell, k);
      for (double v : z.values()) CHECK(v == 0.0);
    }
  }

  TEST_CASE("scalar hand evaluation") {
    Smrnn cell;
    cell.wf = scalar_param(1.0);
    cell.vf = scalar_param(1.0);
    cell.vz = scalar_param(1.0);
    cell.wz = scalar_param(0.0);
    cell.u = scalar_param(1.0);
    const Tensor z1 = smrnn_refine(Tensor::constant({1, 1}, {0.5}), Tensor::constant({1, 1}, {1.0}), cell, 1);
    CHECK(z1.item() == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
    CHECK(z1.item() == doctest::Approx(0.46212).epsilon(1e-5));
  }

  TEST_CASE("zero steps return the initial state") {
    Rng rng(2);
    const Smrnn cell = Smrnn::init(8, 64, rng);
    const Tensor z0 = random_constant({3, 8}, rng, -1.0, 1.0);
    CHECK(to_vector(smrnn_refine(random_constant({3, 64}, rng, 0.0, 1.0), z0, cell, 0)) == to_vector(z0));
  }

  TEST_CASE("matches a straight-line evaluation") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      Rng rng(seed);
      const Smrnn cell = Smrnn::init(64, 64, rng);
      const Tensor x = random_constant({6, 64}, rng, 0.0, 1.0);
      const Tensor z0 = random_constant({6, 64}, rng, -1.0, 1.0);
      for (int steps : {1, 3, 5}) {
        const Tensor z = smrnn_refine(x, z0, cell, steps);
        double worst = 0.0;
        for (std::size_t r = 0; r < 6; ++r) {
          const auto expect = manual_refine(x.values().subspan(r * 64, 64),
                                            {z0.values().begin() + r * 64, z0.values().begin() + (r + 1) * 64},
                                            cell, steps);
          for (std::size_t i = 0; i < 64; ++i) worst = std::max(worst, std::abs(z[r * 64 + i] - expect[i]));
        }
        CHECK(worst <= 1e-12);
      }
    }
  }

  TEST_CASE("shape mismatches and negative steps are rejected") {
    Rng rng(0);
    const Smrnn cell = Smrnn::init(8, 64, rng);
    CHECK_THROWS_AS(smrnn_refine(Tensor::zeros({2, 32}), Tensor::zeros({2, 8}), cell, 1), ShapeError);
    CHECK_THROWS_AS(smrnn_refine(Tensor::zeros({2, 64}), Tensor::zeros({3, 8}), cell, 1), ShapeError);
    CHECK_THROWS_AS(smrnn_refine(Tensor::zeros({2, 64}), Tensor::zeros({2, 8}), cell, -1), InvalidArgument);
  }

  TEST_CASE("named parameters") {
    Rng rng(0);
    const auto named = Smrnn::init(64, 64, rng).named();
    std::vector<std::string> names;
    for (const auto& [n, t] : named) names.push_back(n);
    CHECK(names == std::vector<std::string>{"smrnn.Wf", "smrnn.Vf", "smrnn.Vz", "smrnn.Wz", "smrnn.U"});
  }
}

TEST_SUITE("kwta") {
  TEST_CASE("examples") {
    const std::vector<double> v = {0.1, 0.9, 0.5, 0.3};
    CHECK(kwta(v, 2) == std::vector<double>{0.0, 0.9, 0.5, 0.0});
    CHECK(kwta(v, 0) == std::vector<double>(4, 0.0));
    CHECK(kwta(v, 9) == v);
    CHECK(kwta(std::vector<double>(8, 0.0), 3) == std::vector<double>(8, 0.0));
  }

  TEST_CASE("support matches a sort-based oracle") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::uniform_int_distribution<int> ks(0, 64);
    for (int t = 0; t < 2000; ++t) {
      std::vector<double> v(64);
      for (double& x : v) x = d(rng);
      if (t % 7 == 0) std::fill(v.begin() + 10, v.begin() + 30, 0.25);  // ties
      const std::size_t k = static_cast<std::size_t>(ks(rng));
      const auto out = kwta(v, k);
      const auto support = top_k_support(v, k);
      for (std::size_t i = 0; i < 64; ++i) REQUIRE(out[i] == (support.count(i) ? v[i] : 0.0));
    }
  }
}

TEST_SUITE("edit scores") {
  TEST_CASE("zero weights give zero scores") {
    const EditScores s =
        edit_scores(random_image01(16, 16, 4), VisionStem::zeros(), Smrnn::zeros(64, 64), 32, 3);
    for (double v : s.luma.values()) CHECK(v == 0.0);
    for (double v : s.chroma.values()) CHECK(v == 0.0);
  }

  TEST_CASE("at most k nonzeros per block, exactly k for generic inputs") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(seed);
      const VisionStem stem = VisionStem::init(rng);
      const Smrnn cell = Smrnn::init(64, 64, rng);
      for (std::size_t k : {std::size_t{1}, std::size_t{8}, std::size_t{32}}) {
        const EditScores s = edit_scores(random_image01(24, 16, seed), stem, cell, k, 3);
        for (const Tensor* t : {&s.luma, &s.chroma}) {
          REQUIRE(t->shape() == Shape{6, 64});
          for (std::size_t b = 0; b < 6; ++b) {
            const auto row = t->values().subspan(b * 64, 64);
            const auto nnz = std::count_if(row.begin(), row.end(), [](double v) { return v != 0.0; });
            CHECK(static_cast<std::size_t>(nnz) == k);
          }
        }
      }
    }
  }

  TEST_CASE("deterministic for a fixed seed") {
    auto run = [] {
      Rng rng(11);
      const VisionStem stem = VisionStem::init(rng);
      const Smrnn cell = Smrnn::init(64, 64, rng);
      const EditScores s = edit_scores(random_image01(16, 16, 9), stem, cell, 32, 3);
      return std::pair{to_vector(s.luma), to_vector(s.chroma)};
    };
    CHECK(run() == run());
  }

  TEST_CASE("both branches read the same cell") {
    Rng rng(12);
    const VisionStem stem = VisionStem::init(rng);
    Smrnn cell = Smrnn::init(64, 64, rng);
    const Tensor img = random_image01(16, 16, 1);
    const Tensor z_before = edit_scores(img, stem, cell, 64, 2).luma;
    const Smrnn alias = cell;  // shares the parameter tensors
    cell.u.mutable_values()[0] += 0.5;
    CHECK(alias.u.values()[0] == cell.u.values()[0]);
    const EditScores after = edit_scores(img, stem, alias, 64, 2);
    CHECK(to_vector(after.luma) != to_vector(z_before));
    // the chroma branch on the luma maps reproduces the luma scores
    const EditMaps maps = split_edit_maps(stem_forward(img, stem));
    CHECK(to_vector(edit_branch(maps.luma, alias, 64, 2)) == to_vector(after.luma));
    CHECK(to_vector(edit_branch(maps.chroma, alias, 64, 2)) == to_vector(after.chroma));
  }

  TEST_CASE("gradients reach every parameter") {
    Rng rng(13);
    const VisionStem stem = VisionStem::init(rng);
    const Smrnn cell = Smrnn::init(16, 64, rng);
    const EditScores s = edit_scores(random_image01(16, 16, 2), stem, cell, 16, 3);
    ad::backward(ad::add(ad::reduce_sum(s.luma), ad::reduce_sum(s.chroma)));
    for (const auto& [name, t] : stem.named()) {
      CAPTURE(name);
      CHECK(t.has_grad());
    }
    for (const auto& [name, t] : cell.named()) {
      CAPTURE(name);
      const auto g = t.grad();
      CHECK(std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; }));
    }
  }
}
