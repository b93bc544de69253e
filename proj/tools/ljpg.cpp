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

// ljpg: command-line front end over the learnjpeg C API.
//
// Exit codes: 0 success, 1 usage, 2 I/O, 3 format/data.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "learnjpeg.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitData = 3;

struct ImageDeleter {
  void operator()(ljpg_image* p) const { ljpg_image_free(p); }
};
struct ModelDeleter {
  void operator()(ljpg_model* p) const { ljpg_model_free(p); }
};
struct BufferDeleter {
  void operator()(uint8_t* p) const { ljpg_buffer_free(p); }
};
using ImagePtr = std::unique_ptr<ljpg_image, ImageDeleter>;
using ModelPtr = std::unique_ptr<ljpg_model, ModelDeleter>;
using BufferPtr = std::unique_ptr<uint8_t, BufferDeleter>;

// Thrown to unwind with the exit code of a failed C call.
struct Failure {
  int code;
};

void check(ljpg_status s) {
  if (s == LJPG_OK) return;
  std::fprintf(stderr, "ljpg: error: %s\n", ljpg_last_error());
  switch (s) {
    case LJPG_E_USAGE: throw Failure{kExitUsage};
    case LJPG_E_IO: throw Failure{kExitIo};
    default: throw Failure{kExitData};
  }
}

ImagePtr read_image(const std::string& path) {
  ljpg_image* img = nullptr;
  check(ljpg_image_read_ppm(path.c_str(), &img));
  return ImagePtr(img);
}

ModelPtr load_model(const std::string& path) {
  ljpg_model* m = nullptr;
  check(ljpg_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

void print_line(const char* line, void*) {
  std::FILE* out = std::strncmp(line, "warning:", 8) == 0 ? stderr : stdout;
  std::fprintf(out, "%s\n", line);
  std::fflush(out);
}

struct EncodeArgs {
  std::string input, output, checkpoint;
  int quality = 0;
};

void cmd_encode(const EncodeArgs& a) {
  const ImagePtr img = read_image(a.input);
  ModelPtr model;
  if (!a.checkpoint.empty()) model = load_model(a.checkpoint);

  uint8_t* raw = nullptr;
  size_t size = 0;
  const auto t0 = std::chrono::steady_clock::now();
  check(model ? ljpg_encode_model(model.get(), img.get(), &raw, &size)
              : ljpg_encode_quality(img.get(), a.quality, &raw, &size));
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  const BufferPtr buf(raw);
  check(ljpg_write_file(a.output.c_str(), buf.get(), size));

  const int w = ljpg_image_width(img.get()), h = ljpg_image_height(img.get());
  std::printf("%s: %dx%d, %zu bytes, %.4f bpp, encode %.1f ms\n", a.output.c_str(), w, h, size,
              8.0 * static_cast<double>(size) / (static_cast<double>(w) * h), ms);
}

struct DecodeArgs {
  std::string input, output, reference;
};

void cmd_decode(const DecodeArgs& a) {
  uint8_t* raw = nullptr;
  size_t size = 0;
  check(ljpg_read_file(a.input.c_str(), &raw, &size));
  const BufferPtr buf(raw);
  ljpg_image* decoded = nullptr;
  check(ljpg_decode(buf.get(), size, &decoded));
  const ImagePtr img(decoded);
  check(ljpg_image_write_ppm(img.get(), a.output.c_str()));
  std::printf("%s: %dx%d\n", a.output.c_str(), ljpg_image_width(img.get()),
              ljpg_image_height(img.get()));
  if (!a.reference.empty()) {
    const ImagePtr ref = read_image(a.reference);
    double db = 0.0;
    check(ljpg_psnr(ref.get(), img.get(), &db));
    std::printf("PSNR %.4f dB\n", db);
  }
}

struct TrainArgs {
  std::string data, config, out;
};

void cmd_train(const TrainArgs& a) {
  check(ljpg_train(a.config.empty() ? nullptr : a.config.c_str(), a.data.c_str(), a.out.c_str(),
                   print_line, nullptr));
  std::printf("checkpoint written to %s\n", a.out.c_str());
}

struct EvalArgs {
  std::string checkpoint, data, csv;
  int baseline_quality = 0;
};

void cmd_eval(const EvalArgs& a) {
  const ModelPtr model = load_model(a.checkpoint);
  check(ljpg_evaluate(model.get(), a.data.c_str(), a.csv.c_str(), a.baseline_quality, print_line,
                      nullptr));
  std::printf("metrics written to %s\n", a.csv.c_str());
}

void cmd_qtable(const std::string& checkpoint) {
  const ModelPtr model = load_model(checkpoint);
  int luma[64], chroma[64];
  check(ljpg_model_qtables(model.get(), luma, chroma));
  for (const auto& [name, table] : {std::pair{"luma", luma}, std::pair{"chroma", chroma}}) {
    std::printf("%s\n", name);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) std::printf("%4d%s", table[r * 8 + c], c == 7 ? "\n" : "");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learnjpeg: baseline JPEG codec with a learned, differentiable twin"};
  app.require_subcommand(1);

  EncodeArgs enc;
  auto* encode = app.add_subcommand("encode", "PPM -> JPEG with quality tables or a trained model");
  encode->add_option("--input", enc.input, "P6 PPM image")->required();
  encode->add_option("--output", enc.output, "JPEG file to write")->required();
  auto* quality = encode->add_option("--quality", enc.quality, "Annex K quality, 1..100")
                      ->check(CLI::Range(1, 100));
  auto* ckpt = encode->add_option("--checkpoint", enc.checkpoint, "trained checkpoint");
  quality->excludes(ckpt);

  DecodeArgs dec;
  auto* decode = app.add_subcommand("decode", "baseline JPEG -> PPM");
  decode->add_option("--input", dec.input, "JPEG file")->required();
  decode->add_option("--output", dec.output, "P6 PPM to write")->required();
  decode->add_option("--reference", dec.reference, "original PPM; prints PSNR");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train tables and edit networks");
  train->add_option("--data", tr.data, "directory of P6 PPM images")->required();
  train->add_option("--config", tr.config, "JSON training config (defaults when omitted)");
  train->add_option("--out", tr.out, "checkpoint to write")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "neural vs baseline metrics as CSV");
  eval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")->required();
  eval->add_option("--data", ev.data, "directory of P6 PPM images")->required();
  eval->add_option("--csv", ev.csv, "CSV file to write")->required();
  eval->add_option("--baseline-quality", ev.baseline_quality,
                   "fixed baseline quality (default: nearest bpp)")
      ->check(CLI::Range(1, 100));

  std::string qt_ckpt;
  auto* qtable = app.add_subcommand("qtable", "print the exported quantisation tables");
  qtable->add_option("--checkpoint", qt_ckpt, "trained checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*encode) {
      if (enc.checkpoint.empty() && quality->count() == 0) {
        std::fprintf(stderr, "ljpg: error: encode needs --quality or --checkpoint\n");
        return kExitUsage;
      }
      cmd_encode(enc);
    } else if (*decode) {
      cmd_decode(dec);
    } else if (*train) {
      cmd_train(tr);
    } else if (*eval) {
      cmd_eval(ev);
    } else if (*qtable) {
      cmd_qtable(qt_ckpt);
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return kExitOk;
}
