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

// Shared generators and helpers for the test binaries.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "massact/engine.hpp"
#include "massact/error.hpp"
#include "massact/tensor.hpp"

namespace massact::testing {

// Test-side generator; independent of the library Rng on purpose so oracles
// never share code with the implementation.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double gauss() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  bool coin() { return integer(0, 1) == 1; }
  std::uint64_t u64() { return rng_(); }

  Matrix matrix(std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (float& v : m.values()) v = static_cast<float>(gauss() * scale);
    return m;
  }

  // k distinct values from [0, n), ascending.
  std::vector<int> subset(int n, int k) {
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    std::shuffle(all.begin(), all.end(), rng_);
    all.resize(static_cast<std::size_t>(k));
    std::sort(all.begin(), all.end());
    return all;
  }

  std::vector<std::uint8_t> bits(std::size_t n) {
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(coin());
    return out;
  }

  // Small engine configs that still exercise every code path.
  EngineConfig engine_config() {
    EngineConfig c;
    c.heads = integer(1, 3);
    c.width = c.heads * integer(2, 5);
    c.depth = integer(3, 5);
    c.latent_h = integer(2, 4);
    c.latent_w = integer(2, 4);
    c.encoder_len = integer(1, 4);
    c.steps = integer(1, 3);
    c.vocab = integer(4, 16);
    c.seed = u64();
    c.variant = integer(0, 3) == 0 ? Variant::kSingleStream : Variant::kDualStream;
    return c;
  }

  std::vector<int> prompt(const EngineConfig& c) {
    std::vector<int> p(static_cast<std::size_t>(c.encoder_len));
    for (int& id : p) id = integer(0, c.vocab - 1);
    return p;
  }

 private:
  std::mt19937_64 rng_;
};

template <typename F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::runtime_error("expected a massact::Error");
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("massact_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace massact::testing
