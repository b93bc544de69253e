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

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ljpg/codec.hpp"
#include "ljpg/errors.hpp"
#include "ljpg/metrics.hpp"
#include "ljpg/trainer.hpp"
#include "test_support.hpp"

using namespace ljpg;
using ljpg::testing::crop;
using ljpg::testing::load_fixture;
using ljpg::testing::random_image;
using ljpg::testing::TempDir;

namespace {

TrainConfig small_config(int steps = 4) {
  TrainConfig c;
  c.patch_size = 32;
  c.batch_size = 2;
  c.patches = 4;
  c.steps = steps;
  c.seed = 11;
  c.model.hidden = 8;
  c.model.k = 16;
  return c;
}

std::vector<RgbImage> small_pool(int n = 4) {
  std::vector<RgbImage> pool;
  for (int i = 0; i < n; ++i) pool.push_back(random_image(32, 32, 100 + i));
  return pool;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

bool window_matches(const RgbImage& src, const RgbImage& win, int x0, int y0) {
  for (int y = 0; y < win.height; ++y)
    for (int x = 0; x < win.width; ++x)
      for (int c = 0; c < 3; ++c)
        if (src.at(x0 + x, y0 + y, c) != win.at(x, y, c)) return false;
  return true;
}

bool contains_window(const RgbImage& src, const RgbImage& win) {
  for (int y0 = 0; y0 + win.height <= src.height; ++y0)
    for (int x0 = 0; x0 + win.width <= src.width; ++x0)
      if (window_matches(src, win, x0, y0)) return true;
  return false;
}

Tensor param_with_grad(std::vector<double> values, double g) {
  const std::size_t n = values.size();
  Tensor p = Tensor::parameter({n}, std::move(values));
  backward(scalar_mul(reduce_sum(p), g));
  return p;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("json round trip") {
    TrainConfig c = small_config();
    c.loss.alpha = 0.01;
    c.model.rounding_sign = ad::RoundingSign::kResidualFirst;
    const TrainConfig back = TrainConfig::from_json(c.to_json());
    CHECK(back == c);
    CHECK(back.loss.alpha == 0.01);
    CHECK(back.model.rounding_sign == ad::RoundingSign::kResidualFirst);
  }

  TEST_CASE("missing keys keep defaults") {
    const TrainConfig c = TrainConfig::from_json(R"({"steps": 7, "loss": {"alpha": 0.5}})");
    CHECK(c.steps == 7);
    CHECK(c.loss.alpha == 0.5);
    CHECK(c.loss.lambda == 0.9);
    CHECK(c.patch_size == 256);
    CHECK(c.batch_size == 32);
    CHECK(c.lr_start == 1e-3);
    CHECK(c.lr_end == 1e-8);
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"stepz": 1})"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"loss": {"alpah": 1}})"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"steps": "ten"})"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::from_json("{"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"patch_size": 12})"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"batch_size": 0})"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"lr_start": 1e-9})"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"model": {"rounding_sign": "sideways"}})"),
                    InvalidArgument);
  }

  TEST_CASE("validation names the field") {
    TrainConfig c;
    c.patch_size = 30;
    try {
      c.validate();
      FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("patch_size") != std::string::npos);
    }
  }
}

TEST_SUITE("load_patches") {
  TEST_CASE("crops lie inside one 512x512 image and match it exactly") {
    TempDir dir;
    const RgbImage src = load_fixture("astronaut.ppm");
    REQUIRE(src.width == 512);
    write_ppm(dir / "a.ppm", src);
    const auto crops = load_patches(dir.path(), 256, 4, 3);
    REQUIRE(crops.size() == 4);
    for (const RgbImage& c : crops) {
      CHECK(c.width == 256);
      CHECK(c.height == 256);
    }
    for (const RgbImage& c : crops) CHECK(contains_window(src, c));
  }

  TEST_CASE("same seed gives the same crops") {
    TempDir dir;
    write_ppm(dir / "a.ppm", random_image(80, 60, 1));
    write_ppm(dir / "b.ppm", random_image(70, 90, 2));
    const auto a = load_patches(dir.path(), 32, 6, 9);
    const auto b = load_patches(dir.path(), 32, 6, 9);
    const auto c = load_patches(dir.path(), 32, 6, 10);
    REQUIRE(a.size() == 6);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].data == b[i].data);
      differs = differs || a[i].data != c[i].data;
    }
    CHECK(differs);
  }

  TEST_CASE("unusable files are skipped with a warning") {
    TempDir dir;
    write_ppm(dir / "tiny.ppm", random_image(16, 16, 1));
    {
      std::ofstream(dir / "broken.ppm") << "P6\n4 4\n255\nxx";
    }
    write_ppm(dir / "ok.ppm", random_image(40, 40, 2));
    std::vector<std::string> warnings;
    const auto crops =
        load_patches(dir.path(), 32, 2, 1, [&](const std::string& w) { warnings.push_back(w); });
    CHECK(crops.size() == 2);
    CHECK(warnings.size() == 2);
  }

  TEST_CASE("nothing usable is an error") {
    TempDir dir;
    write_ppm(dir / "tiny.ppm", random_image(16, 16, 1));
    CHECK_THROWS_AS(load_patches(dir.path(), 32, 2, 1), InvalidArgument);
    CHECK_THROWS_AS(load_patches(dir / "missing", 32, 2, 1), Error);
  }
}

TEST_SUITE("poly_decay") {
  TEST_CASE("endpoints and midpoint") {
    CHECK(poly_decay(1e-3, 1e-8, 0, 100, 1.0) == 1e-3);
    CHECK(poly_decay(1e-3, 1e-8, 100, 100, 1.0) == 1e-8);
    CHECK(poly_decay(1e-3, 1e-8, 250, 100, 2.0) == 1e-8);
    CHECK(poly_decay(1.0, 1e-8, 50, 100, 1.0) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(poly_decay(1.0, 0.0, 50, 100, 2.0) == doctest::Approx(0.25));
  }

  TEST_CASE("monotone non-increasing") {
    double prev = poly_decay(0.1, 1e-6, 0, 40, 1.5);
    for (long s = 1; s <= 40; ++s) {
      const double lr = poly_decay(0.1, 1e-6, s, 40, 1.5);
      CHECK(lr <= prev);
      prev = lr;
    }
  }
}

TEST_SUITE("adam") {
  TEST_CASE("first step with unit gradient moves each value by lr") {
    Tensor p = param_with_grad({0.5, -2.0, 3.0}, 1.0);
    AdamState st;
    adam_step({{"p", p}}, st, 0.1);
    // m_hat = 1, v_hat = 1, so the update is 0.1 / (1 + 1e-8).
    const double step = 0.1 / (1.0 + 1e-8);
    CHECK(p.values()[0] == doctest::Approx(0.5 - step).epsilon(1e-14));
    CHECK(p.values()[1] == doctest::Approx(-2.0 - step).epsilon(1e-14));
    CHECK(p.values()[2] == doctest::Approx(3.0 - step).epsilon(1e-14));
    CHECK(st.step == 1);
    CHECK(st.m.at("p")[0] == doctest::Approx(0.1));
    CHECK(st.v.at("p")[0] == doctest::Approx(1e-3));
  }

  TEST_CASE("zero gradient after a step leaves moments decaying") {
    AdamState st;
    Tensor p = param_with_grad({1.0, 2.0}, 1.0);
    adam_step({{"p", p}}, st, 0.1);
    const auto m0 = st.m.at("p");
    const auto v0 = st.v.at("p");
    p.zero_grad();
    adam_step({{"p", p}}, st, 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(st.m.at("p")[i] == doctest::Approx(0.9 * m0[i]).epsilon(1e-15));
      CHECK(st.v.at("p")[i] == doctest::Approx(0.999 * v0[i]).epsilon(1e-15));
    }
  }

  TEST_CASE("zero gradient on fresh state leaves params unchanged") {
    Tensor p = param_with_grad({1.0, 2.0}, 0.0);
    AdamState st;
    adam_step({{"p", p}}, st, 0.1);
    CHECK(p.values()[0] == 1.0);
    CHECK(p.values()[1] == 2.0);
  }

  TEST_CASE("bounded parameters clamp exactly") {
    const double s = 1e-4;
    Tensor q = param_with_grad({1.5 * s, 200.0 * s}, 1.0);
    Tensor w = param_with_grad({1.5 * s}, 1.0);
    AdamState st;
    adam_step({{"qtable.luma", q}, {"w", w}}, st, 0.1, ParamBounds{&Model::is_qtable, s, 255.0 * s});
    CHECK(q.values()[0] == s);
    CHECK(q.values()[1] == s);
    CHECK(w.values()[0] < 0.0);

    Tensor up = param_with_grad({254.0 * s}, -1.0);
    adam_step({{"qtable.chroma", up}}, st, 0.1, ParamBounds{&Model::is_qtable, s, 255.0 * s});
    CHECK(up.values()[0] == 255.0 * s);
  }

  TEST_CASE("non-finite gradient names the parameter and changes nothing") {
    Tensor a = param_with_grad({1.0}, 1.0);
    Tensor b = param_with_grad({2.0}, std::nan(""));
    AdamState st;
    try {
      adam_step({{"a", a}, {"cell.U", b}}, st, 0.1);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("cell.U") != std::string::npos);
    }
    CHECK(a.values()[0] == 1.0);
    CHECK(st.step == 0);
    CHECK(st.m.empty());
  }
}

TEST_CASE("qtable parameter names") {
  const Model m = Model::init(small_config().model, 1);
  int tables = 0;
  for (const auto& [name, t] : m.named()) tables += Model::is_qtable(name);
  CHECK(tables == 2);
}

TEST_SUITE("checkpoint") {
  TEST_CASE("serialization round trip is bit-exact") {
    Trainer tr(small_config(), small_pool());
    tr.step();
    tr.step();
    const Checkpoint c = tr.checkpoint();
    const auto bytes = serialize_checkpoint(c);
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(back.step == 2);
    CHECK(back.config == c.config);
    CHECK(back.params == c.params);
    CHECK(back.adam == c.adam);
    CHECK(serialize_checkpoint(back) == bytes);

    TempDir dir;
    save_checkpoint(dir / "c.ckpt", c);
    CHECK(serialize_checkpoint(load_checkpoint(dir / "c.ckpt")) == bytes);
  }

  TEST_CASE("model rebuilds from checkpoint tensors") {
    Trainer tr(small_config(), small_pool());
    tr.step();
    const Checkpoint c = tr.checkpoint();
    const Model m = model_from_checkpoint(c);
    const auto a = tr.model().named();
    const auto b = m.named();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(std::ranges::equal(a[i].second.values(), b[i].second.values()));
    }
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    Trainer tr(small_config(), small_pool());
    Checkpoint c = tr.checkpoint();
    auto bytes = serialize_checkpoint(c);
    CHECK_THROWS_AS(deserialize_checkpoint(std::span(bytes).first(bytes.size() / 2)), FormatError);
    bytes.resize(bytes.size() - 10);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), FormatError);
    c.params.pop_back();
    CHECK_THROWS_AS(model_from_checkpoint(c), FormatError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("fixed seed gives a bit-identical trajectory") {
    Trainer a(small_config(), small_pool());
    Trainer b(small_config(), small_pool());
    for (int i = 0; i < 3; ++i) {
      const StepStats sa = a.step();
      const StepStats sb = b.step();
      CHECK(sa.loss == sb.loss);
      CHECK(sa.d == sb.d);
      CHECK(sa.r == sb.r);
      CHECK(sa.al == sb.al);
      CHECK(sa.step == i + 1);
    }
    CHECK(serialize_checkpoint(a.checkpoint()) == serialize_checkpoint(b.checkpoint()));
  }

  TEST_CASE("resumed run matches the uninterrupted one") {
    const TrainConfig cfg = small_config(6);
    Trainer full(cfg, small_pool());
    Trainer head(cfg, small_pool());
    for (int i = 0; i < 3; ++i) {
      full.step();
      head.step();
    }
    Trainer resumed(deserialize_checkpoint(serialize_checkpoint(head.checkpoint())), small_pool());
    CHECK(resumed.current_step() == 3);
    while (!full.done()) {
      const StepStats a = full.step();
      const StepStats b = resumed.step();
      CHECK(a.loss == b.loss);
      CHECK(a.lr == b.lr);
    }
    CHECK(resumed.done());
    CHECK(serialize_checkpoint(full.checkpoint()) == serialize_checkpoint(resumed.checkpoint()));
  }

  TEST_CASE("learning-rate schedule hits the configured endpoints") {
    TrainConfig cfg = small_config(3);
    cfg.lr_start = 2e-3;
    cfg.lr_end = 1e-6;
    Trainer tr(cfg, small_pool());
    CHECK(tr.step().lr == 2e-3);
    tr.step();
    const StepStats last = tr.step();
    CHECK(last.lr == doctest::Approx((2e-3 - 1e-6) / 3.0 + 1e-6));
    CHECK(poly_decay(cfg.lr_start, cfg.lr_end, cfg.steps, cfg.steps, cfg.decay_power) == 1e-6);
  }

  TEST_CASE("tables stay in range under a large learning rate") {
    TrainConfig cfg = small_config(5);
    cfg.lr_start = 0.5;
    Trainer tr(cfg, small_pool());
    while (!tr.done()) {
      tr.step();
      const LearnableQTables& t = tr.model().tables;
      for (const Tensor* q : {&t.luma, &t.chroma})
        for (double v : q->values()) {
          CHECK(v >= t.lower());
          CHECK(v <= t.upper());
        }
    }
  }

  TEST_CASE("train logs every step and writes a loadable checkpoint") {
    TempDir dir;
    write_ppm(dir / "img.ppm", random_image(48, 40, 5));
    TrainConfig cfg = small_config(3);
    std::vector<std::string> log;
    const Checkpoint c =
        train(cfg, dir.path(), dir / "out.ckpt", [&](const std::string& l) { log.push_back(l); });
    REQUIRE(log.size() == 4);
    CHECK(log[0] == "step,loss,d,r,al,lr");
    CHECK(log[1].rfind("1,", 0) == 0);
    CHECK(log[3].rfind("3,", 0) == 0);
    std::size_t commas = 0;
    for (char ch : log[2]) commas += ch == ',';
    CHECK(commas == 5);
    CHECK(c.step == 3);
    CHECK(serialize_checkpoint(load_checkpoint(dir / "out.ckpt")) == serialize_checkpoint(c));
  }

  TEST_CASE("unwritable checkpoint path is an error") {
    TempDir dir;
    write_ppm(dir / "img.ppm", random_image(40, 40, 5));
    CHECK_THROWS_AS(train(small_config(1), dir.path(), dir / "no" / "such" / "x.ckpt"), IoError);
  }
}

TEST_SUITE("evaluate") {
  TEST_CASE("two rows per image with the fixed schema") {
    TempDir data;
    TempDir out;
    const RgbImage coffee = crop(load_fixture("coffee.ppm"), 40, 30, 176, 176);
    const RgbImage chelsea = crop(load_fixture("chelsea.ppm"), 100, 50, 64, 48);
    write_ppm(data / "coffee.ppm", coffee);
    write_ppm(data / "chelsea.ppm", chelsea);
    const Model model = Model::init(small_config().model, 3);
    std::vector<std::string> warnings;
    const auto rows = evaluate(model, data.path(), out / "eval.csv", 50,
                               [&](const std::string& w) { warnings.push_back(w); });
    REQUIRE(rows.size() == 4);
    CHECK(warnings.size() == 1);  // chelsea is below the MS-SSIM minimum
    for (const EvalRow& r : rows) CHECK(r.bpp > 0.0);

    const auto lines = read_lines(out / "eval.csv");
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "image_id,bpp,psnr_db,ssim,msssim,msssim_db,mse");
    CHECK(lines[1].rfind("chelsea/neural,", 0) == 0);
    CHECK(lines[2].rfind("chelsea/jpeg_q50,", 0) == 0);
    CHECK(lines[3].rfind("coffee/neural,", 0) == 0);

    const RgbImage direct = decode_baseline(encode_baseline(coffee, quality_tables(50)));
    CHECK(rows[3].image_id == "coffee/jpeg_q50");
    CHECK(rows[3].psnr_db == psnr(coffee, direct));
    CHECK(std::isnan(rows[0].msssim));
    CHECK(std::isfinite(rows[2].msssim));
  }

  TEST_CASE("matched quality is the nearest in bpp") {
    const RgbImage img = crop(load_fixture("coffee.ppm"), 0, 0, 64, 64);
    auto bpp = [&](int q) {
      return bits_per_pixel(encode_baseline(img, quality_tables(q)).size(), img.width, img.height);
    };
    const double target = bpp(37);
    const int q = matching_quality(img, target);
    CHECK(std::abs(bpp(q) - target) == 0.0);
    const double mid = 0.5 * (bpp(20) + bpp(80));
    const int qm = matching_quality(img, mid);
    for (int k = 1; k <= 100; ++k) CHECK(std::abs(bpp(qm) - mid) <= std::abs(bpp(k) - mid));
  }

  TEST_CASE("csv rows round-trip their numbers") {
    EvalRow r{"x/neural", 0.375, 31.5, 0.9, 0.95, 13.0102999566398, 45.25};
    const std::string line = format_csv_row(r);
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    CHECK(field == "x/neural");
    for (double expect : {r.bpp, r.psnr_db, r.ssim, r.msssim, r.msssim_db, r.mse}) {
      std::getline(ss, field, ',');
      CHECK(std::stod(field) == expect);
    }
  }
}
