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

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "ljpg/errors.hpp"
#include "ljpg/image.hpp"

namespace ljpg {

RgbImage::RgbImage(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw InvalidArgument("image dimensions must be positive");
  data.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

RgbImage::RgbImage(int w, int h, std::vector<std::uint8_t> pixels)
    : width(w), height(h), data(std::move(pixels)) {
  if (w <= 0 || h <= 0) throw InvalidArgument("image dimensions must be positive");
  if (data.size() != static_cast<std::size_t>(w) * h * 3)
    throw InvalidArgument("pixel buffer size does not match " + std::to_string(w) + "x" +
                          std::to_string(h) + "x3");
}

RgbImage RgbImage::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > width || y0 + h > height)
    throw InvalidArgument("crop region outside image");
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    auto src = data.begin() + (static_cast<std::ptrdiff_t>(y0 + y) * width + x0) * 3;
    std::copy(src, src + w * 3, out.data.begin() + static_cast<std::ptrdiff_t>(y) * w * 3);
  }
  return out;
}

namespace {

class PpmReader {
 public:
  explicit PpmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_]))
      throw FormatError("", "PPM header: expected a decimal number");
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (value > (1 << 24)) throw FormatError("", "PPM header: value too large");
    }
    return static_cast<int>(value);
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

RgbImage parse_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw FormatError("", "not a binary PPM (missing P6 magic)");
  PpmReader reader(bytes.subspan(2));
  const int w = reader.next_int();
  const int h = reader.next_int();
  const int maxval = reader.next_int();
  if (w <= 0 || h <= 0) throw FormatError("", "PPM has zero width or height");
  if (maxval != 255) throw FormatError("", "only maxval 255 PPM files are supported");
  // exactly one whitespace byte separates the header from the raster
  reader.advance();
  const std::size_t start = 2 + reader.pos();
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (start > bytes.size() || bytes.size() - start < need)
    throw FormatError("", "PPM raster truncated");
  return RgbImage(w, h, std::vector<std::uint8_t>(bytes.begin() + start, bytes.begin() + start + need));
}

RgbImage read_ppm(const std::filesystem::path& path) { return parse_ppm(read_file(path)); }

std::vector<std::uint8_t> format_ppm(const RgbImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  write_file(path, format_ppm(img));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace ljpg
