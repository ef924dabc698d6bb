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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "massact/engine.hpp"
#include "massact/spatial.hpp"

namespace massact::io {

// MADF container, little-endian throughout:
//   "MADF" u16 version
//   per record: u8 stream, u16 layer, u16 timestep, u32 rows, u32 cols,
//               rows*cols f32 payload (row-major), u32 CRC-32 of header+payload
inline constexpr char kMagic[4] = {'M', 'A', 'D', 'F'};
inline constexpr std::uint16_t kVersion = 1;

// Record stream codes. Activations use the Stream values; trajectory dumps add
// the latent sequence and the prompt token ids.
inline constexpr std::uint8_t kStreamImage = 0;
inline constexpr std::uint8_t kStreamEncoder = 1;
inline constexpr std::uint8_t kStreamLatent = 2;
inline constexpr std::uint8_t kStreamPrompt = 3;

struct DumpRecord {
  std::uint8_t stream = 0;
  std::uint16_t layer = 0;
  std::uint16_t timestep = 0;
  Matrix data;
};

std::vector<std::uint8_t> encode_dump(std::span<const DumpRecord> records);
std::vector<DumpRecord> decode_dump(std::span<const std::uint8_t> bytes);

// Returns the number of bytes written.
std::size_t write_dump(std::span<const DumpRecord> records, const std::filesystem::path& path);
std::size_t write_dump(std::span<const ActivationTensor> activations,
                       const std::filesystem::path& path);
std::size_t write_dump(const Trajectory& trajectory, const std::filesystem::path& path);

std::vector<DumpRecord> read_dump(const std::filesystem::path& path);

std::vector<DumpRecord> trajectory_records(const Trajectory& trajectory);
// Rebuilds a trajectory from its dump; `config` supplies the non-tensor fields.
Trajectory trajectory_from_records(std::span<const DumpRecord> records, const EngineConfig& config);

// Plain-text graymap (P2), maxval 255, row-major.
struct Graymap {
  GridShape grid;
  std::vector<int> values;
};

std::string encode_graymap(const Graymap& image);
Graymap decode_graymap(const std::string& text);
void write_graymap(const Graymap& image, const std::filesystem::path& path);
Graymap read_graymap(const std::filesystem::path& path);

Graymap mask_graymap(const std::vector<std::uint8_t>& mask, GridShape grid);
// Linear min-max map to 0..255; a constant field maps to 0.
Graymap heatmap_graymap(const std::vector<double>& values, GridShape grid);
// Pixels above 127 are foreground.
std::vector<std::uint8_t> graymap_to_mask(const Graymap& image);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace massact::io
