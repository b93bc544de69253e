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

#include "learnjpeg.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "ljpg/codec.hpp"
#include "ljpg/errors.hpp"
#include "ljpg/metrics.hpp"
#include "ljpg/trainer.hpp"

struct ljpg_image {
  ljpg::RgbImage img;
};

struct ljpg_model {
  ljpg::Model model;
};

namespace {

thread_local std::string g_last_error;

ljpg_status fail(ljpg_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
ljpg_status guarded(F&& f) {
  try {
    f();
    return LJPG_OK;
  } catch (const ljpg::InvalidArgument& e) {
    return fail(LJPG_E_USAGE, e.what());
  } catch (const ljpg::IoError& e) {
    return fail(LJPG_E_IO, e.what());
  } catch (const ljpg::FormatError& e) {
    return fail(LJPG_E_FORMAT, e.what());
  } catch (const ljpg::NumericError& e) {
    return fail(LJPG_E_NUMERIC, e.what());
  } catch (const std::bad_alloc&) {
    return fail(LJPG_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(LJPG_E_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw ljpg::InvalidArgument(what);
}

void export_buffer(const std::vector<std::uint8_t>& bytes, uint8_t** data, size_t* size) {
  auto* p = static_cast<uint8_t*>(std::malloc(bytes.empty() ? 1 : bytes.size()));
  if (!p) throw std::bad_alloc();
  if (!bytes.empty()) std::memcpy(p, bytes.data(), bytes.size());
  *data = p;
  *size = bytes.size();
}

ljpg::LogFn to_log(ljpg_log_fn log, void* user) {
  if (!log) return {};
  return [log, user](const std::string& line) { log(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* ljpg_version(void) { return "0.1.0"; }

const char* ljpg_last_error(void) { return g_last_error.c_str(); }

ljpg_status ljpg_image_create(int width, int height, const uint8_t* rgb, ljpg_image** out) {
  return guarded([&] {
    require(out && rgb, "ljpg_image_create: null argument");
    require(width > 0 && height > 0, "ljpg_image_create: dimensions must be positive");
    const std::size_t n = static_cast<std::size_t>(width) * height * 3;
    *out = new ljpg_image{ljpg::RgbImage(width, height, std::vector<std::uint8_t>(rgb, rgb + n))};
  });
}

ljpg_status ljpg_image_read_ppm(const char* path, ljpg_image** out) {
  return guarded([&] {
    require(path && out, "ljpg_image_read_ppm: null argument");
    *out = new ljpg_image{ljpg::read_ppm(path)};
  });
}

ljpg_status ljpg_image_write_ppm(const ljpg_image* img, const char* path) {
  return guarded([&] {
    require(img && path, "ljpg_image_write_ppm: null argument");
    ljpg::write_ppm(path, img->img);
  });
}

int ljpg_image_width(const ljpg_image* img) { return img ? img->img.width : 0; }
int ljpg_image_height(const ljpg_image* img) { return img ? img->img.height : 0; }
const uint8_t* ljpg_image_data(const ljpg_image* img) { return img ? img->img.data.data() : nullptr; }
void ljpg_image_free(ljpg_image* img) { delete img; }

ljpg_status ljpg_read_file(const char* path, uint8_t** data, size_t* size) {
  return guarded([&] {
    require(path && data && size, "ljpg_read_file: null argument");
    export_buffer(ljpg::read_file(path), data, size);
  });
}

ljpg_status ljpg_write_file(const char* path, const uint8_t* data, size_t size) {
  return guarded([&] {
    require(path && (data || size == 0), "ljpg_write_file: null argument");
    ljpg::write_file(path, std::span<const std::uint8_t>(data, size));
  });
}

void ljpg_buffer_free(uint8_t* data) { std::free(data); }

ljpg_status ljpg_encode_quality(const ljpg_image* img, int quality, uint8_t** data, size_t* size) {
  return guarded([&] {
    require(img && data && size, "ljpg_encode_quality: null argument");
    export_buffer(ljpg::encode_baseline(img->img, ljpg::quality_tables(quality)), data, size);
  });
}

ljpg_status ljpg_encode_model(const ljpg_model* model, const ljpg_image* img, uint8_t** data,
                              size_t* size) {
  return guarded([&] {
    require(model && img && data && size, "ljpg_encode_model: null argument");
    export_buffer(ljpg::encode_neural(model->model, img->img), data, size);
  });
}

ljpg_status ljpg_decode(const uint8_t* data, size_t size, ljpg_image** out) {
  return guarded([&] {
    require(data && out, "ljpg_decode: null argument");
    *out = new ljpg_image{ljpg::decode_baseline(std::span<const std::uint8_t>(data, size))};
  });
}

ljpg_status ljpg_psnr(const ljpg_image* a, const ljpg_image* b, double* out) {
  return guarded([&] {
    require(a && b && out, "ljpg_psnr: null argument");
    *out = ljpg::psnr(a->img, b->img);
  });
}

ljpg_status ljpg_model_load(const char* checkpoint_path, ljpg_model** out) {
  return guarded([&] {
    require(checkpoint_path && out, "ljpg_model_load: null argument");
    *out = new ljpg_model{ljpg::model_from_checkpoint(ljpg::load_checkpoint(checkpoint_path))};
  });
}

void ljpg_model_free(ljpg_model* model) { delete model; }

ljpg_status ljpg_model_qtables(const ljpg_model* model, int luma[64], int chroma[64]) {
  return guarded([&] {
    require(model && luma && chroma, "ljpg_model_qtables: null argument");
    const ljpg::QuantTablePair t = ljpg::export_qtables(model->model.tables);
    std::copy(t.luma.begin(), t.luma.end(), luma);
    std::copy(t.chroma.begin(), t.chroma.end(), chroma);
  });
}

ljpg_status ljpg_train(const char* config_path, const char* data_dir, const char* out_path,
                       ljpg_log_fn log, void* user) {
  return guarded([&] {
    require(data_dir && out_path, "ljpg_train: null argument");
    ljpg::TrainConfig config;
    if (config_path) {
      const auto bytes = ljpg::read_file(config_path);
      config = ljpg::TrainConfig::from_json(std::string(bytes.begin(), bytes.end()));
    }
    ljpg::train(config, data_dir, out_path, to_log(log, user));
  });
}

ljpg_status ljpg_evaluate(const ljpg_model* model, const char* data_dir, const char* csv_path,
                          int baseline_quality, ljpg_log_fn log, void* user) {
  return guarded([&] {
    require(model && data_dir && csv_path, "ljpg_evaluate: null argument");
    std::optional<int> q;
    if (baseline_quality != 0) q = baseline_quality;
    ljpg::evaluate(model->model, data_dir, csv_path, q, to_log(log, user));
  });
}

}  // extern "C"
