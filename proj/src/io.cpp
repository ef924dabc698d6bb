// Copyright 2026 The massact Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "massact/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "massact/error.hpp"

namespace massact::io {
namespace {

constexpr std::size_t kHeaderBytes = 6;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::size_t size() const { return bytes_.size(); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    auto b = take(4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> span(std::size_t from, std::size_t to) const {
    return bytes_.subspan(from, to - from);
  }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (remaining() < n) fail(ErrorKind::kIo, "MADF stream truncated at byte " + std::to_string(pos_));
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string record_label(std::size_t index, std::uint8_t stream, std::uint16_t layer,
                         std::uint16_t timestep) {
  return "record " + std::to_string(index) + " (stream=" + std::to_string(stream) +
         ", layer=" + std::to_string(layer) + ", timestep=" + std::to_string(timestep) + ")";
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string() + " for reading");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "read failed for " + path.string());
  return data;
}

void spit(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(data, static_cast<std::streamsize>(size));
  out.flush();
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(bytes.size() - off, std::numeric_limits<uInt>::max()));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_dump(std::span<const DumpRecord> records) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kVersion);
  for (const auto& r : records) {
    if (!r.data.all_finite()) {
      fail(ErrorKind::kNumeric, "refusing to dump non-finite data in " +
                                    record_label(0, r.stream, r.layer, r.timestep));
    }
    if (r.data.rows() > UINT32_MAX || r.data.cols() > UINT32_MAX) {
      fail(ErrorKind::kShape, "record dimensions exceed u32");
    }
    const std::size_t begin = w.size();
    w.u8(r.stream);
    w.u16(r.layer);
    w.u16(r.timestep);
    w.u32(static_cast<std::uint32_t>(r.data.rows()));
    w.u32(static_cast<std::uint32_t>(r.data.cols()));
    for (float v : r.data.values()) w.f32(v);
    const auto& bytes = w.bytes();
    w.u32(crc32(std::span<const std::uint8_t>(bytes).subspan(begin, w.size() - begin)));
  }
  return std::move(w.bytes());
}

std::vector<DumpRecord> decode_dump(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < kHeaderBytes) fail(ErrorKind::kIo, "MADF stream shorter than its header");
  for (char c : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) fail(ErrorKind::kIo, "bad MADF magic");
  }
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    fail(ErrorKind::kVersion, "unsupported MADF version " + std::to_string(version));
  }
  std::vector<DumpRecord> out;
  while (!r.done()) {
    const std::size_t begin = r.pos();
    DumpRecord rec;
    rec.stream = r.u8();
    rec.layer = r.u16();
    rec.timestep = r.u16();
    const std::uint64_t rows = r.u32();
    const std::uint64_t cols = r.u32();
    const std::string label = record_label(out.size(), rec.stream, rec.layer, rec.timestep);
    if (r.remaining() < 4 || (cols != 0 && rows > (r.remaining() - 4) / 4 / cols)) {
      fail(ErrorKind::kIo, label + " is truncated");
    }
    std::vector<float> values(static_cast<std::size_t>(rows * cols));
    for (float& v : values) v = r.f32();
    const std::size_t end = r.pos();
    const std::uint32_t stored = r.u32();
    if (stored != crc32(r.span(begin, end))) fail(ErrorKind::kCrc, "CRC mismatch in " + label);
    rec.data = Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(values));
    out.push_back(std::move(rec));
  }
  return out;
}

std::size_t write_dump(std::span<const DumpRecord> records, const std::filesystem::path& path) {
  const auto bytes = encode_dump(records);
  spit(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return bytes.size();
}

std::size_t write_dump(std::span<const ActivationTensor> activations,
                       const std::filesystem::path& path) {
  std::vector<DumpRecord> records;
  records.reserve(activations.size());
  for (const auto& a : activations) {
    records.push_back({static_cast<std::uint8_t>(a.stream), static_cast<std::uint16_t>(a.layer),
                       static_cast<std::uint16_t>(a.timestep), a.data});
  }
  return write_dump(records, path);
}

std::size_t write_dump(const Trajectory& trajectory, const std::filesystem::path& path) {
  return write_dump(trajectory_records(trajectory), path);
}

std::vector<DumpRecord> read_dump(const std::filesystem::path& path) {
  const auto data = slurp(path);
  try {
    return decode_dump(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<DumpRecord> trajectory_records(const Trajectory& trajectory) {
  std::vector<DumpRecord> records;
  Matrix prompt(1, trajectory.prompt.size());
  for (std::size_t i = 0; i < trajectory.prompt.size(); ++i) {
    prompt(0, i) = static_cast<float>(trajectory.prompt[i]);
  }
  records.push_back({kStreamPrompt, 0, 0, std::move(prompt)});
  for (std::size_t i = 0; i < trajectory.latents.size(); ++i) {
    records.push_back({kStreamLatent, 0, static_cast<std::uint16_t>(i), trajectory.latents[i]});
  }
  for (const auto& [key, act] : trajectory.captured) {
    records.push_back({static_cast<std::uint8_t>(key.stream), static_cast<std::uint16_t>(key.layer),
                       static_cast<std::uint16_t>(key.timestep), act.data});
  }
  return records;
}

Trajectory trajectory_from_records(std::span<const DumpRecord> records, const EngineConfig& config) {
  Trajectory t;
  t.config = config;
  for (const auto& r : records) {
    switch (r.stream) {
      case kStreamPrompt:
        for (float v : r.data.values()) t.prompt.push_back(static_cast<int>(v));
        break;
      case kStreamLatent:
        if (r.timestep != t.latents.size()) fail(ErrorKind::kIo, "latent records out of order");
        t.latents.push_back(r.data);
        break;
      case kStreamImage:
      case kStreamEncoder: {
        const auto stream = static_cast<Stream>(r.stream);
        const PointKey key{r.layer, r.timestep, stream};
        t.captured[key] = ActivationTensor{stream, key.layer, key.timestep, r.data};
        break;
      }
      default:
        fail(ErrorKind::kIo, "unknown record stream code " + std::to_string(r.stream));
    }
  }
  if (t.latents.empty()) fail(ErrorKind::kIo, "dump holds no latent records");
  t.initial_noise = t.latents.front();
  t.final_latent = t.latents.back();
  return t;
}

std::string encode_graymap(const Graymap& image) {
  std::ostringstream os;
  os << "P2\n" << image.grid.width << ' ' << image.grid.height << "\n255\n";
  for (int r = 0; r < image.grid.height; ++r) {
    for (int c = 0; c < image.grid.width; ++c) {
      if (c) os << ' ';
      os << image.values[static_cast<std::size_t>(r * image.grid.width + c)];
    }
    os << '\n';
  }
  return os.str();
}

Graymap decode_graymap(const std::string& text) {
  // Strip comments, then read whitespace-separated tokens.
  std::string cleaned;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    cleaned += line.substr(0, line.find('#'));
    cleaned += '\n';
  }
  std::istringstream in(cleaned);
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  if (!(in >> magic) || magic != "P2") fail(ErrorKind::kIo, "not a P2 graymap");
  if (!(in >> width >> height >> maxval) || width <= 0 || height <= 0 || maxval <= 0) {
    fail(ErrorKind::kIo, "bad P2 header");
  }
  Graymap g{{height, width}, {}};
  g.values.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int& v : g.values) {
    if (!(in >> v)) fail(ErrorKind::kIo, "P2 payload truncated");
    if (v < 0 || v > maxval) fail(ErrorKind::kIo, "P2 value outside [0, maxval]");
    if (maxval != 255) v = static_cast<int>(std::lround(255.0 * v / maxval));
  }
  return g;
}

void write_graymap(const Graymap& image, const std::filesystem::path& path) {
  write_text(path, encode_graymap(image));
}

Graymap read_graymap(const std::filesystem::path& path) {
  try {
    return decode_graymap(read_text(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

Graymap mask_graymap(const std::vector<std::uint8_t>& mask, GridShape grid) {
  if (mask.size() != static_cast<std::size_t>(grid.tokens())) {
    fail(ErrorKind::kShape, "mask length does not match grid");
  }
  Graymap g{grid, {}};
  g.values.reserve(mask.size());
  for (auto v : mask) g.values.push_back(v ? 255 : 0);
  return g;
}

Graymap heatmap_graymap(const std::vector<double>& values, GridShape grid) {
  if (values.size() != static_cast<std::size_t>(grid.tokens())) {
    fail(ErrorKind::kShape, "heatmap length does not match grid");
  }
  Graymap g{grid, std::vector<int>(values.size(), 0)};
  if (values.empty()) return g;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*hi == *lo) return g;
  for (std::size_t i = 0; i < values.size(); ++i) {
    g.values[i] = static_cast<int>(std::lround(255.0 * (values[i] - *lo) / (*hi - *lo)));
  }
  return g;
}

std::vector<std::uint8_t> graymap_to_mask(const Graymap& image) {
  std::vector<std::uint8_t> mask;
  mask.reserve(image.values.size());
  for (int v : image.values) mask.push_back(v > 127 ? 1 : 0);
  return mask;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  spit(path, text.data(), text.size());
}

std::string read_text(const std::filesystem::path& path) {
  const auto data = slurp(path);
  return {data.begin(), data.end()};
}

}  // namespace massact::io
