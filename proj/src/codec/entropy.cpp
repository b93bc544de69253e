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
#include <cstdio>
#include <cstdlib>
#include <optional>

#include "ljpg/codec.hpp"
#include "ljpg/errors.hpp"

namespace ljpg {
namespace {

constexpr std::uint8_t kSOI = 0xD8, kEOI = 0xD9, kSOF0 = 0xC0, kSOF1 = 0xC1, kSOF2 = 0xC2,
                       kDHT = 0xC4, kDQT = 0xDB, kDRI = 0xDD, kSOS = 0xDA, kAPP0 = 0xE0,
                       kCOM = 0xFE;

struct HuffmanSpec {
  std::array<std::uint8_t, 16> counts;  // codes of length 1..16
  std::vector<std::uint8_t> symbols;
};

// Annex K, tables K.3 - K.6.
const HuffmanSpec kDcLuma = {{0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0},
                             {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
const HuffmanSpec kDcChroma = {{0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0},
                               {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
const HuffmanSpec kAcLuma = {
    {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d},
    {0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61,
     0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52,
     0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25,
     0x26, 0x27, 0x28, 0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45,
     0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64,
     0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83,
     0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99,
     0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6,
     0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3,
     0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8,
     0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa}};
const HuffmanSpec kAcChroma = {
    {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77},
    {0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61,
     0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33,
     0x52, 0xf0, 0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18,
     0x19, 0x1a, 0x26, 0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44,
     0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63,
     0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a,
     0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97,
     0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4,
     0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca,
     0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7,
     0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa}};

// Canonical code assignment (Annex C).
struct EncodeTable {
  std::array<std::uint16_t, 256> code{};
  std::array<std::uint8_t, 256> length{};
};

EncodeTable build_encode_table(const HuffmanSpec& spec) {
  EncodeTable t;
  std::uint32_t code = 0;
  std::size_t k = 0;
  for (int len = 1; len <= 16; ++len) {
    for (int i = 0; i < spec.counts[len - 1]; ++i, ++k) {
      t.code[spec.symbols[k]] = static_cast<std::uint16_t>(code++);
      t.length[spec.symbols[k]] = static_cast<std::uint8_t>(len);
    }
    code <<= 1;
  }
  return t;
}

int magnitude_category(int v) {
  int a = std::abs(v);
  int n = 0;
  while (a) {
    ++n;
    a >>= 1;
  }
  return n;
}

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void put(std::uint32_t bits, int count) {
    for (int i = count - 1; i >= 0; --i) {
      acc_ = static_cast<std::uint8_t>((acc_ << 1) | ((bits >> i) & 1u));
      if (++filled_ == 8) emit();
    }
  }

  void flush() {
    while (filled_ != 0) put(1, 1);  // pad with ones
  }

 private:
  void emit() {
    out_.push_back(acc_);
    if (acc_ == 0xFF) out_.push_back(0x00);
    acc_ = 0;
    filled_ = 0;
  }

  std::vector<std::uint8_t>& out_;
  std::uint8_t acc_ = 0;
  int filled_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, int v) {
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_marker(std::vector<std::uint8_t>& out, std::uint8_t m) {
  out.push_back(0xFF);
  out.push_back(m);
}

void write_app0(std::vector<std::uint8_t>& out) {
  put_marker(out, kAPP0);
  put_u16(out, 16);
  for (char c : {'J', 'F', 'I', 'F', '\0'}) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(1);  // version 1.01
  out.push_back(1);
  out.push_back(0);  // no density units
  put_u16(out, 1);
  put_u16(out, 1);
  out.push_back(0);  // no thumbnail
  out.push_back(0);
}

void write_dqt(std::vector<std::uint8_t>& out, const QuantTable& table, int id) {
  put_marker(out, kDQT);
  put_u16(out, 2 + 1 + kBlockArea);
  out.push_back(static_cast<std::uint8_t>(id));  // 8-bit precision
  for (int k = 0; k < kBlockArea; ++k) out.push_back(static_cast<std::uint8_t>(table[kZigzag[k]]));
}

void write_dht(std::vector<std::uint8_t>& out) {
  const std::array<std::pair<const HuffmanSpec*, std::uint8_t>, 4> tables = {
      {{&kDcLuma, 0x00}, {&kAcLuma, 0x10}, {&kDcChroma, 0x01}, {&kAcChroma, 0x11}}};
  int length = 2;
  for (const auto& [spec, id] : tables) length += 1 + 16 + static_cast<int>(spec->symbols.size());
  put_marker(out, kDHT);
  put_u16(out, length);
  for (const auto& [spec, id] : tables) {
    out.push_back(id);
    out.insert(out.end(), spec->counts.begin(), spec->counts.end());
    out.insert(out.end(), spec->symbols.begin(), spec->symbols.end());
  }
}

void write_sof0(std::vector<std::uint8_t>& out, int width, int height) {
  put_marker(out, kSOF0);
  put_u16(out, 8 + 3 * 3);
  out.push_back(8);
  put_u16(out, height);
  put_u16(out, width);
  out.push_back(3);
  for (int c = 0; c < 3; ++c) {
    out.push_back(static_cast<std::uint8_t>(c + 1));
    out.push_back(0x11);                           // 1x1 sampling
    out.push_back(static_cast<std::uint8_t>(c == 0 ? 0 : 1));
  }
}

void write_sos(std::vector<std::uint8_t>& out) {
  put_marker(out, kSOS);
  put_u16(out, 6 + 2 * 3);
  out.push_back(3);
  for (int c = 0; c < 3; ++c) {
    out.push_back(static_cast<std::uint8_t>(c + 1));
    out.push_back(c == 0 ? 0x00 : 0x11);
  }
  out.push_back(0);   // Ss
  out.push_back(63);  // Se
  out.push_back(0);   // Ah/Al
}

void check_grids(const QuantizedImage& grids) {
  const auto& y = grids[0];
  if (y.width <= 0 || y.height <= 0 || y.width > 65535 || y.height > 65535)
    throw InvalidArgument("entropy_encode: image dimensions must be in [1,65535]");
  for (const auto& g : grids) {
    if (g.width != y.width || g.height != y.height || g.blocks_wide != blocks_for(y.width) ||
        g.blocks_high != blocks_for(y.height) ||
        g.blocks.size() != static_cast<std::size_t>(g.blocks_wide) * g.blocks_high)
      throw InvalidArgument("entropy_encode: component grids must share the padded block layout");
  }
}

void encode_block(BitWriter& bw, const IntBlock& block, int& dc_pred, const EncodeTable& dc,
                  const EncodeTable& ac) {
  const int dc_value = block[0];
  if (std::abs(dc_value) > 2047)
    throw InvalidArgument("entropy_encode: DC coefficient " + std::to_string(dc_value) +
                          " exceeds the 12-bit range");
  const int diff = dc_value - dc_pred;
  dc_pred = dc_value;
  const int dc_cat = magnitude_category(diff);
  if (dc_cat > 11)
    throw InvalidArgument("entropy_encode: DC difference " + std::to_string(diff) +
                          " needs category " + std::to_string(dc_cat) + " (max 11)");
  bw.put(dc.code[dc_cat], dc.length[dc_cat]);
  if (dc_cat) bw.put(static_cast<std::uint32_t>(diff < 0 ? diff - 1 : diff), dc_cat);

  int run = 0;
  for (int k = 1; k < kBlockArea; ++k) {
    const int v = block[kZigzag[k]];
    if (v == 0) {
      ++run;
      continue;
    }
    if (std::abs(v) > 1023)
      throw InvalidArgument("entropy_encode: AC coefficient " + std::to_string(v) +
                            " exceeds the baseline 10-bit range");
    while (run > 15) {
      bw.put(ac.code[0xF0], ac.length[0xF0]);
      run -= 16;
    }
    const int cat = magnitude_category(v);
    const int symbol = (run << 4) | cat;
    bw.put(ac.code[symbol], ac.length[symbol]);
    bw.put(static_cast<std::uint32_t>(v < 0 ? v - 1 : v), cat);
    run = 0;
  }
  if (run > 0) bw.put(ac.code[0x00], ac.length[0x00]);
}

}  // namespace

std::string marker_name(std::uint8_t m) {
  switch (m) {
    case kSOI: return "SOI";
    case kEOI: return "EOI";
    case kSOS: return "SOS";
    case kDQT: return "DQT";
    case kDHT: return "DHT";
    case kDRI: return "DRI";
    case kCOM: return "COM";
    case 0xCC: return "DAC";
    case 0xDC: return "DNL";
    default: break;
  }
  char buf[16];
  if (m >= 0xC0 && m <= 0xCF) {
    std::snprintf(buf, sizeof buf, "SOF%d", m - 0xC0);
  } else if (m >= 0xE0 && m <= 0xEF) {
    std::snprintf(buf, sizeof buf, "APP%d", m - 0xE0);
  } else if (m >= 0xD0 && m <= 0xD7) {
    std::snprintf(buf, sizeof buf, "RST%d", m - 0xD0);
  } else {
    std::snprintf(buf, sizeof buf, "0xFF%02X", m);
  }
  return buf;
}

JfifBitstream entropy_encode(const QuantizedImage& grids, const QuantTablePair& tables) {
  tables.validate();
  check_grids(grids);
  static const EncodeTable dc_luma = build_encode_table(kDcLuma);
  static const EncodeTable ac_luma = build_encode_table(kAcLuma);
  static const EncodeTable dc_chroma = build_encode_table(kDcChroma);
  static const EncodeTable ac_chroma = build_encode_table(kAcChroma);

  JfifBitstream out;
  out.reserve(1024 + grids[0].blocks.size() * 3 * 8);
  put_marker(out, kSOI);
  write_app0(out);
  write_dqt(out, tables.luma, 0);
  write_dqt(out, tables.chroma, 1);
  write_sof0(out, grids[0].width, grids[0].height);
  write_dht(out);
  write_sos(out);

  BitWriter bw(out);
  std::array<int, 3> pred{0, 0, 0};
  for (std::size_t i = 0; i < grids[0].blocks.size(); ++i) {
    encode_block(bw, grids[0].blocks[i], pred[0], dc_luma, ac_luma);
    encode_block(bw, grids[1].blocks[i], pred[1], dc_chroma, ac_chroma);
    encode_block(bw, grids[2].blocks[i], pred[2], dc_chroma, ac_chroma);
  }
  bw.flush();
  put_marker(out, kEOI);
  return out;
}

// Decoding ------------------------------------------------------------------

namespace {

struct DecodeTable {
  bool defined = false;
  std::array<std::int32_t, 18> maxcode{};
  std::array<std::int32_t, 17> mincode{};
  std::array<std::int32_t, 17> valptr{};
  std::vector<std::uint8_t> symbols;
};

DecodeTable build_decode_table(const std::array<std::uint8_t, 16>& counts,
                               std::vector<std::uint8_t> symbols) {
  DecodeTable t;
  t.defined = true;
  t.symbols = std::move(symbols);
  std::int32_t code = 0;
  std::int32_t k = 0;
  for (int len = 1; len <= 16; ++len) {
    const int n = counts[len - 1];
    if (n == 0) {
      t.maxcode[len] = -1;
    } else {
      t.valptr[len] = k;
      t.mincode[len] = code;
      code += n;
      k += n;
      t.maxcode[len] = code - 1;
    }
    if (code > (1 << len)) throw FormatError("DHT", "Huffman code lengths overflow the code space");
    code <<= 1;
  }
  t.maxcode[17] = 0x7FFFFFFF;
  return t;
}

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string marker)
      : bytes_(bytes), marker_(std::move(marker)) {}

  std::uint8_t u8() {
    if (pos_ >= bytes_.size()) throw FormatError(marker_, "segment truncated");
    return bytes_[pos_++];
  }
  int u16() {
    const int hi = u8();
    return (hi << 8) | u8();
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& marker() const { return marker_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string marker_;
};

class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

  int bit() {
    if (left_ == 0) fill();
    --left_;
    return (cur_ >> left_) & 1;
  }

  int bits(int n) {
    int v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | bit();
    return v;
  }

  int decode(const DecodeTable& t) {
    std::int32_t code = 0;
    for (int len = 1; len <= 16; ++len) {
      code = (code << 1) | bit();
      if (t.maxcode[len] >= 0 && code <= t.maxcode[len]) {
        const std::size_t idx = static_cast<std::size_t>(t.valptr[len] + code - t.mincode[len]);
        if (idx >= t.symbols.size()) break;
        return t.symbols[idx];
      }
    }
    throw FormatError("SOS", "invalid Huffman code in entropy-coded data");
  }

  // JPEG sign extension of an n-bit magnitude field.
  int receive_extend(int n) {
    if (n == 0) return 0;
    const int v = bits(n);
    return v < (1 << (n - 1)) ? v - (1 << n) + 1 : v;
  }

  std::size_t pos() const { return pos_; }

 private:
  void fill() {
    if (pos_ >= data_.size())
      throw FormatError("SOS", "entropy-coded data truncated before all blocks were decoded");
    std::uint8_t b = data_[pos_];
    if (b == 0xFF) {
      if (pos_ + 1 >= data_.size())
        throw FormatError("SOS", "entropy-coded data truncated before all blocks were decoded");
      const std::uint8_t next = data_[pos_ + 1];
      if (next != 0x00)
        throw FormatError("SOS", "entropy-coded data ended at marker " + marker_name(next) +
                                     " before all blocks were decoded");
      pos_ += 2;
    } else {
      pos_ += 1;
    }
    cur_ = b;
    left_ = 8;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::uint8_t cur_ = 0;
  int left_ = 0;
};

struct FrameComponent {
  int id = 0;
  int table = 0;
};

struct DecoderState {
  std::array<std::optional<QuantTable>, 4> qtables;
  std::array<DecodeTable, 4> dc, ac;
  bool have_frame = false;
  int width = 0, height = 0;
  std::array<FrameComponent, 3> comps{};
  std::array<bool, 3> scanned{};
  DecodedJpeg result;
};

void parse_dqt(ByteReader& r, DecoderState& st) {
  while (r.remaining() > 0) {
    const int pq_tq = r.u8();
    const int precision = pq_tq >> 4;
    const int id = pq_tq & 15;
    if (precision > 1) throw FormatError("DQT", "invalid table precision");
    if (id > 3) throw FormatError("DQT", "table id out of range");
    QuantTable t{};
    for (int k = 0; k < kBlockArea; ++k) {
      const int v = precision ? r.u16() : r.u8();
      if (v == 0) throw FormatError("DQT", "zero quantisation step");
      t[kZigzag[k]] = v;
    }
    st.qtables[id] = t;
  }
}

void parse_dht(ByteReader& r, DecoderState& st) {
  while (r.remaining() > 0) {
    const int tc_th = r.u8();
    const int cls = tc_th >> 4;
    const int id = tc_th & 15;
    if (cls > 1 || id > 3) throw FormatError("DHT", "invalid table class or id");
    std::array<std::uint8_t, 16> counts{};
    int total = 0;
    for (auto& c : counts) {
      c = r.u8();
      total += c;
    }
    if (total > 256) throw FormatError("DHT", "more than 256 Huffman symbols");
    std::vector<std::uint8_t> symbols(static_cast<std::size_t>(total));
    for (auto& s : symbols) s = r.u8();
    (cls == 0 ? st.dc : st.ac)[id] = build_decode_table(counts, std::move(symbols));
  }
}

void parse_sof(ByteReader& r, DecoderState& st) {
  if (st.have_frame) throw FormatError(r.marker(), "multiple frame headers");
  const int precision = r.u8();
  if (precision != 8) throw FormatError(r.marker(), "only 8-bit samples are supported");
  st.height = r.u16();
  st.width = r.u16();
  if (st.width == 0 || st.height == 0)
    throw FormatError(r.marker(), "zero image dimension (DNL is not supported)");
  const int nf = r.u8();
  if (nf != 3)
    throw FormatError(r.marker(), "unsupported component count " + std::to_string(nf) +
                                      " (expected 3)");
  for (int c = 0; c < 3; ++c) {
    st.comps[c].id = r.u8();
    const int sampling = r.u8();
    if (sampling != 0x11)
      throw FormatError(r.marker(), "chroma subsampling " + std::to_string(sampling >> 4) + "x" +
                                        std::to_string(sampling & 15) +
                                        " is not supported (4:4:4 only)");
    st.comps[c].table = r.u8();
    if (st.comps[c].table > 3) throw FormatError(r.marker(), "quantisation table id out of range");
  }
  st.have_frame = true;
  st.result.width = st.width;
  st.result.height = st.height;
  for (int c = 0; c < 3; ++c) {
    auto& g = st.result.grids[c];
    g.channel = static_cast<Channel>(c);
    g.width = st.width;
    g.height = st.height;
    g.blocks_wide = blocks_for(st.width);
    g.blocks_high = blocks_for(st.height);
    g.blocks.assign(static_cast<std::size_t>(g.blocks_wide) * g.blocks_high, IntBlock{});
  }
}

void decode_block(BitReader& br, IntBlock& block, int& pred, const DecodeTable& dc,
                  const DecodeTable& ac) {
  const int cat = br.decode(dc);
  if (cat > 11) throw FormatError("SOS", "DC magnitude category out of range");
  pred += br.receive_extend(cat);
  block[0] = pred;
  for (int k = 1; k < kBlockArea;) {
    const int rs = br.decode(ac);
    const int run = rs >> 4;
    const int size = rs & 15;
    if (size == 0) {
      if (run == 15) {
        k += 16;
        continue;
      }
      break;  // EOB
    }
    k += run;
    if (k >= kBlockArea) throw FormatError("SOS", "AC coefficient index out of range");
    block[kZigzag[k]] = br.receive_extend(size);
    ++k;
  }
}

// Returns the byte position just after the entropy-coded segment.
std::size_t decode_scan(std::span<const std::uint8_t> bytes, std::size_t header_pos,
                        std::size_t data_pos, DecoderState& st) {
  ByteReader r(bytes.subspan(header_pos, data_pos - header_pos), "SOS");
  if (!st.have_frame) throw FormatError("SOS", "scan before frame header");
  const int ns = r.u8();
  if (ns < 1 || ns > 3) throw FormatError("SOS", "invalid component count in scan");
  struct ScanComp {
    int index;
    int dc, ac;
  };
  std::vector<ScanComp> comps;
  for (int i = 0; i < ns; ++i) {
    const int id = r.u8();
    const int tables = r.u8();
    int index = -1;
    for (int c = 0; c < 3; ++c)
      if (st.comps[c].id == id) index = c;
    if (index < 0) throw FormatError("SOS", "scan references unknown component");
    const ScanComp sc{index, tables >> 4, tables & 15};
    if (sc.dc > 3 || sc.ac > 3 || !st.dc[sc.dc].defined || !st.ac[sc.ac].defined)
      throw FormatError("SOS", "scan references an undefined Huffman table");
    if (!st.qtables[st.comps[index].table])
      throw FormatError("SOS", "component references an undefined quantisation table");
    comps.push_back(sc);
  }
  const int ss = r.u8();
  const int se = r.u8();
  const int ahal = r.u8();
  if (ss != 0 || se != 63 || ahal != 0)
    throw FormatError("SOS", "spectral selection / successive approximation not supported");

  BitReader br(bytes, data_pos);
  std::array<int, 3> pred{0, 0, 0};
  const std::size_t nblocks = st.result.grids[0].blocks.size();
  for (std::size_t i = 0; i < nblocks; ++i) {
    for (const auto& sc : comps)
      decode_block(br, st.result.grids[sc.index].blocks[i], pred[sc.index], st.dc[sc.dc],
                   st.ac[sc.ac]);
  }
  for (const auto& sc : comps) st.scanned[sc.index] = true;
  return br.pos();
}

}  // namespace

DecodedJpeg entropy_decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 0xFF || bytes[1] != kSOI)
    throw FormatError("SOI", "missing start-of-image marker");
  DecoderState st;
  std::size_t pos = 2;
  for (;;) {
    // skip anything up to the next marker (fill bytes, stray padding)
    while (pos < bytes.size() && bytes[pos] != 0xFF) ++pos;
    while (pos < bytes.size() && bytes[pos] == 0xFF) ++pos;
    if (pos >= bytes.size()) throw FormatError("EOI", "stream ended without end-of-image marker");
    const std::uint8_t m = bytes[pos++];
    const std::string name = marker_name(m);
    if (m == kEOI) break;
    if (m >= 0xD0 && m <= 0xD7) throw FormatError(name, "restart markers are not supported");
    if (m == kSOI) throw FormatError("SOI", "unexpected second start-of-image marker");

    if (pos + 2 > bytes.size()) throw FormatError(name, "segment length truncated");
    const std::size_t len = (static_cast<std::size_t>(bytes[pos]) << 8) | bytes[pos + 1];
    if (len < 2) throw FormatError(name, "invalid segment length");
    if (pos + len > bytes.size()) throw FormatError(name, "segment truncated");
    ByteReader seg(bytes.subspan(pos + 2, len - 2), name);
    const std::size_t seg_end = pos + len;

    if ((m >= 0xE0 && m <= 0xEF) || m == kCOM) {
      // application data and comments are ignored
    } else if (m == kDQT) {
      parse_dqt(seg, st);
    } else if (m == kDHT) {
      parse_dht(seg, st);
    } else if (m == kSOF0 || m == kSOF1) {
      parse_sof(seg, st);
    } else if (m == kSOF2) {
      throw FormatError(name, "progressive JPEG is not supported");
    } else if (m == 0xC3 || (m >= 0xC5 && m <= 0xC7)) {
      throw FormatError(name, "only baseline sequential Huffman frames are supported");
    } else if (m >= 0xC9 && m <= 0xCF) {
      throw FormatError(name, "arithmetic coding is not supported");
    } else if (m == kDRI) {
      if (seg.u16() != 0) throw FormatError(name, "restart intervals are not supported");
    } else if (m == kSOS) {
      pos = decode_scan(bytes, pos + 2, seg_end, st);
      continue;
    } else {
      throw FormatError(name, "unsupported marker");
    }
    pos = seg_end;
  }
  if (!st.have_frame) throw FormatError("SOF0", "no frame header before end of image");
  for (int c = 0; c < 3; ++c) {
    if (!st.scanned[c]) throw FormatError("SOS", "component " + std::to_string(c) + " missing from scans");
    st.result.component_tables[c] = *st.qtables[st.comps[c].table];
  }
  return std::move(st.result);
}

std::vector<Segment> scan_segments(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 0xFF || bytes[1] != kSOI)
    throw FormatError("SOI", "missing start-of-image marker");
  if (bytes[bytes.size() - 2] != 0xFF || bytes[bytes.size() - 1] != kEOI)
    throw FormatError("EOI", "stream does not end with end-of-image marker");
  std::vector<Segment> segs{{kSOI, 0, 0}};
  std::size_t pos = 2;
  bool in_scan = false;
  while (pos + 1 < bytes.size()) {
    if (bytes[pos] != 0xFF) {
      if (!in_scan) throw FormatError("", "garbage between marker segments");
      ++pos;
      continue;
    }
    const std::uint8_t m = bytes[pos + 1];
    if (in_scan && (m == 0x00 || (m >= 0xD0 && m <= 0xD7))) {
      pos += 2;
      continue;
    }
    if (m == 0xFF) {
      ++pos;
      continue;
    }
    if (m == kEOI) {
      segs.push_back({m, pos, 0});
      if (pos + 2 != bytes.size()) throw FormatError("EOI", "data after end-of-image marker");
      return segs;
    }
    if (pos + 4 > bytes.size()) throw FormatError(marker_name(m), "segment length truncated");
    const std::size_t len = (static_cast<std::size_t>(bytes[pos + 2]) << 8) | bytes[pos + 3];
    if (len < 2 || pos + 2 + len > bytes.size())
      throw FormatError(marker_name(m), "declared length exceeds the stream");
    segs.push_back({m, pos, len});
    pos += 2 + len;
    in_scan = (m == kSOS);
  }
  throw FormatError("EOI", "stream does not end with end-of-image marker");
}

}  // namespace ljpg
