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

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "massact/tensor.hpp"

namespace massact {

enum class Stream : std::uint8_t { kImage = 0, kEncoder = 1 };
enum class Variant { kDualStream, kSingleStream };

std::string_view to_string(Stream stream);
std::string_view to_string(Variant variant);
Stream parse_stream(std::string_view name);
Variant parse_variant(std::string_view name);

struct EngineConfig {
  int depth = 6;
  int width = 32;
  int heads = 4;
  int latent_h = 8;
  int latent_w = 8;
  int encoder_len = 8;
  int steps = 4;
  std::uint64_t seed = 0;
  Variant variant = Variant::kDualStream;
  int vocab = 64;

  int image_tokens() const noexcept { return latent_h * latent_w; }
  int tokens(Stream stream) const noexcept {
    return stream == Stream::kImage ? image_tokens() : encoder_len;
  }
  // Latent channels equal the hidden width (no patchify stage).
  int latent_channels() const noexcept { return width; }

  // Throws a config error naming the first violated invariant.
  void validate() const;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

// Identifies one intervention point of a sampling run.
struct PointKey {
  int layer = 0;
  int timestep = 0;
  Stream stream = Stream::kImage;

  friend auto operator<=>(const PointKey&, const PointKey&) = default;
};

std::string describe(const PointKey& key);

struct ActivationTensor {
  Stream stream = Stream::kImage;
  int layer = 0;
  int timestep = 0;
  Matrix data;

  PointKey key() const noexcept { return {layer, timestep, stream}; }
};

// Hooks receive the post-block activation of one stream and return its
// replacement, which must keep the shape and the point tags.
using HookFn = std::function<ActivationTensor(ActivationTensor)>;

struct CaptureSpec {
  bool all = false;
  std::set<PointKey> points;

  static CaptureSpec everything() { return {true, {}}; }
  static CaptureSpec nothing() { return {}; }
  bool wants(const PointKey& key) const { return all || points.contains(key); }
};

struct Trajectory {
  EngineConfig config;
  std::vector<int> prompt;
  Matrix initial_noise;
  std::vector<Matrix> latents;
  std::map<PointKey, ActivationTensor> captured;
  Matrix final_latent;

  // Throws a range error when the point was not captured.
  const ActivationTensor& at(const PointKey& key) const;
  bool bit_equal(const Trajectory& other) const;
};

struct StreamBlockWeights {
  Matrix mod_w;  // width x 6*width: shift/scale/gate for attention and MLP
  std::vector<float> mod_b;
  Matrix wq, wk, wv, wo;
  std::vector<float> bq, bk, bv, bo;
  Matrix mlp_in;
  std::vector<float> mlp_in_b;
  Matrix mlp_out;
  std::vector<float> mlp_out_b;

  friend bool operator==(const StreamBlockWeights&, const StreamBlockWeights&) = default;
};

struct BlockWeights {
  // One entry per parameter set: [image, encoder] for dual stream, a single
  // shared set for single stream.
  std::vector<StreamBlockWeights> streams;

  friend bool operator==(const BlockWeights&, const BlockWeights&) = default;
};

struct EngineWeights {
  Matrix latent_in;
  std::vector<float> latent_in_b;
  Matrix image_pos;
  Matrix token_embed;
  Matrix time_in;
  std::vector<float> time_in_b;
  Matrix time_out;
  std::vector<float> time_out_b;
  std::vector<BlockWeights> blocks;
  Matrix final_mod;
  std::vector<float> final_mod_b;
  Matrix final_out;
  std::vector<float> final_out_b;

  // Normal(0, 1/sqrt(width)) matrices from a generator seeded by config.seed;
  // biases start at zero.
  static EngineWeights random(const EngineConfig& config);

  void zero_all();
  friend bool operator==(const EngineWeights&, const EngineWeights&) = default;
};

inline constexpr int kMlpRatio = 4;

// Miniature flow-matching transformer with joint attention over the image and
// encoder token streams. Immutable after construction; sample() may be called
// concurrently.
class Engine {
 public:
  explicit Engine(EngineConfig config);
  Engine(EngineConfig config, EngineWeights weights);

  const EngineConfig& config() const noexcept { return config_; }
  const EngineWeights& weights() const noexcept { return weights_; }

  std::vector<float> timestep_embedding(double t) const;

  // One transformer block. For single-stream engines the two streams are
  // concatenated and processed with the shared parameter set.
  std::pair<Matrix, Matrix> forward_block(int layer, const Matrix& image, const Matrix& encoder,
                                          std::span<const float> temb) const;

  // Depends only on config.seed, never on the prompt.
  Matrix initial_noise() const;

  // Time on the uniform grid from 1 down to 0.
  double time_at(int step) const noexcept;

  Trajectory sample(std::span<const int> prompt, const CaptureSpec& capture,
                    std::span<const HookFn> hooks = {}) const;

 private:
  Matrix velocity(const Matrix& latent, int step, const Matrix& encoder_embed,
                  const CaptureSpec& capture, std::span<const HookFn> hooks,
                  std::map<PointKey, ActivationTensor>& captured) const;
  Matrix embed_prompt(std::span<const int> prompt) const;

  EngineConfig config_;
  EngineWeights weights_;
};

Engine init_engine(const EngineConfig& config);

// Synthetic activations with a known foreground token set and known massive
// channel set, used as ground truth for the mask and selection pipelines.
struct PlantSpec {
  EngineConfig config;
  std::vector<int> foreground;  // token indices in [0, N_I)
  std::vector<int> channels;    // channel indices in [0, width)
  double amplitude = 10.0;
  double noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Planted activations at every (layer, timestep, stream): X[n,c] = amplitude
// for n in foreground and c in channels, N(0, noise^2) everywhere else. The
// encoder stream is pure noise. No transformer is run.
Trajectory planted_sample(const PlantSpec& plant);

// The planted block used by planted_sample for one image-stream point.
Matrix planted_image_block(const PlantSpec& plant, std::uint64_t seed);

// A regular engine whose image positional embedding carries the plant, so
// the residual stream of every block holds the massive channels.
Engine planted_engine(const PlantSpec& plant);

}  // namespace massact
