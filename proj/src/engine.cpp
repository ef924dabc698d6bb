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

#include "massact/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "massact/error.hpp"
#include "massact/rng.hpp"

namespace massact {
namespace {

constexpr std::uint64_t kWeightTag = 0x57454947ULL;  // "WEIG"
constexpr std::uint64_t kNoiseTag = 0x4e4f4953ULL;   // "NOIS"
constexpr float kLayerNormEps = 1e-6f;

void fill_normal(Matrix& m, Rng& rng, double scale) {
  for (float& v : m.values()) v = static_cast<float>(rng.normal() * scale);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  fill_normal(m, rng, scale);
  return m;
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

float gelu_tanh(float x) {
  constexpr float kAlpha = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(kAlpha * (x + 0.044715f * x * x * x)));
}

Matrix layer_norm(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (float v : xr) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : xr) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    auto orow = out.row(r);
    for (std::size_t c = 0; c < xr.size(); ++c) {
      orow[c] = static_cast<float>((xr[c] - mean) * inv);
    }
  }
  return out;
}

// x * (1 + scale) + shift, broadcast over rows.
void modulate(Matrix& x, std::span<const float> shift, std::span<const float> scale) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = row[c] * (1.0f + scale[c]) + shift[c];
  }
}

std::vector<float> row_vector_linear(std::span<const float> x, const Matrix& w,
                                     std::span<const float> b) {
  Matrix in(1, x.size(), std::vector<float>(x.begin(), x.end()));
  Matrix out = linear(in, w, b);
  auto v = out.values();
  return {v.begin(), v.end()};
}

// Softmax attention over the joint sequence, per head.
Matrix joint_attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads) {
  const std::size_t n = q.rows();
  const std::size_t width = q.cols();
  const std::size_t head_dim = width / static_cast<std::size_t>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Matrix out(n, width);
  std::vector<double> scores(n);
  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * head_dim;
    for (std::size_t i = 0; i < n; ++i) {
      auto qi = q.row(i).subspan(off, head_dim);
      double max_score = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        auto kj = k.row(j).subspan(off, head_dim);
        double dot = 0.0;
        for (std::size_t d = 0; d < head_dim; ++d) dot += static_cast<double>(qi[d]) * kj[d];
        scores[j] = dot * scale;
        max_score = std::max(max_score, scores[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        scores[j] = std::exp(scores[j] - max_score);
        denom += scores[j];
      }
      auto oi = out.row(i).subspan(off, head_dim);
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += scores[j] * v(j, off + d);
        oi[d] = static_cast<float>(acc / denom);
      }
    }
  }
  return out;
}

struct Modulation {
  std::vector<float> values;  // 6 * width
  std::size_t width;
  std::span<const float> part(int i) const {
    return std::span<const float>(values).subspan(static_cast<std::size_t>(i) * width, width);
  }
};

void check_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) fail(ErrorKind::kNumeric, std::string(what) + " contains non-finite values");
}

Matrix noise_for(const EngineConfig& config) {
  Rng rng(derive_seed(config.seed, {kNoiseTag}));
  return random_matrix(static_cast<std::size_t>(config.image_tokens()),
                       static_cast<std::size_t>(config.latent_channels()), rng, 1.0);
}

}  // namespace

std::string_view to_string(Stream stream) {
  return stream == Stream::kImage ? "image" : "encoder";
}

std::string_view to_string(Variant variant) {
  return variant == Variant::kDualStream ? "dual_stream" : "single_stream";
}

Stream parse_stream(std::string_view name) {
  if (name == "image") return Stream::kImage;
  if (name == "encoder") return Stream::kEncoder;
  fail(ErrorKind::kConfig, "unknown stream '" + std::string(name) + "'");
}

Variant parse_variant(std::string_view name) {
  if (name == "dual_stream") return Variant::kDualStream;
  if (name == "single_stream") return Variant::kSingleStream;
  fail(ErrorKind::kConfig, "unknown variant '" + std::string(name) + "'");
}

void EngineConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::kConfig, what);
  };
  require(depth >= 3, "depth >= 3 violated (three layer regimes must be non-empty)");
  require(width > 0, "width > 0 violated");
  require(heads > 0, "heads > 0 violated");
  require(width % heads == 0, "width mod heads != 0");
  require(latent_h > 0 && latent_w > 0, "latent_h, latent_w > 0 violated");
  require(encoder_len >= 0, "encoder_len >= 0 violated");
  require(steps >= 1, "steps >= 1 violated");
  require(vocab > 0, "vocab > 0 violated");
}

std::string describe(const PointKey& key) {
  return "(layer=" + std::to_string(key.layer) + ", timestep=" + std::to_string(key.timestep) +
         ", stream=" + std::string(to_string(key.stream)) + ")";
}

const ActivationTensor& Trajectory::at(const PointKey& key) const {
  auto it = captured.find(key);
  if (it == captured.end()) fail(ErrorKind::kRange, "point " + describe(key) + " was not captured");
  return it->second;
}

bool Trajectory::bit_equal(const Trajectory& other) const {
  if (!(config == other.config) || prompt != other.prompt) return false;
  if (!initial_noise.bit_equal(other.initial_noise) || !final_latent.bit_equal(other.final_latent)) {
    return false;
  }
  if (latents.size() != other.latents.size() || captured.size() != other.captured.size()) {
    return false;
  }
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (!latents[i].bit_equal(other.latents[i])) return false;
  }
  for (auto it = captured.begin(), jt = other.captured.begin(); it != captured.end(); ++it, ++jt) {
    if (it->first != jt->first || !it->second.data.bit_equal(jt->second.data)) return false;
  }
  return true;
}

EngineWeights EngineWeights::random(const EngineConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, {kWeightTag}));
  const auto d = static_cast<std::size_t>(config.width);
  const auto lat = static_cast<std::size_t>(config.latent_channels());
  const auto hidden = d * kMlpRatio;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  EngineWeights w;
  w.latent_in = random_matrix(lat, d, rng, scale);
  w.latent_in_b.assign(d, 0.0f);
  w.image_pos = random_matrix(static_cast<std::size_t>(config.image_tokens()), d, rng, scale);
  w.token_embed = random_matrix(static_cast<std::size_t>(config.vocab), d, rng, scale);
  w.time_in = random_matrix(d, d, rng, scale);
  w.time_in_b.assign(d, 0.0f);
  w.time_out = random_matrix(d, d, rng, scale);
  w.time_out_b.assign(d, 0.0f);

  const std::size_t sets = config.variant == Variant::kDualStream ? 2 : 1;
  w.blocks.resize(static_cast<std::size_t>(config.depth));
  for (auto& block : w.blocks) {
    block.streams.resize(sets);
    for (auto& s : block.streams) {
      s.mod_w = random_matrix(d, 6 * d, rng, scale);
      s.mod_b.assign(6 * d, 0.0f);
      s.wq = random_matrix(d, d, rng, scale);
      s.wk = random_matrix(d, d, rng, scale);
      s.wv = random_matrix(d, d, rng, scale);
      s.wo = random_matrix(d, d, rng, scale);
      s.bq.assign(d, 0.0f);
      s.bk.assign(d, 0.0f);
      s.bv.assign(d, 0.0f);
      s.bo.assign(d, 0.0f);
      s.mlp_in = random_matrix(d, hidden, rng, scale);
      s.mlp_in_b.assign(hidden, 0.0f);
      s.mlp_out = random_matrix(hidden, d, rng, scale);
      s.mlp_out_b.assign(d, 0.0f);
    }
  }
  w.final_mod = random_matrix(d, 2 * d, rng, scale);
  w.final_mod_b.assign(2 * d, 0.0f);
  w.final_out = random_matrix(d, lat, rng, scale);
  w.final_out_b.assign(lat, 0.0f);
  return w;
}

void EngineWeights::zero_all() {
  auto zero = [](auto&& x) {
    for (auto& v : x) v = 0.0f;
  };
  auto zero_m = [&](Matrix& m) { zero(m.values()); };
  zero_m(latent_in);
  zero(latent_in_b);
  zero_m(image_pos);
  zero_m(token_embed);
  zero_m(time_in);
  zero(time_in_b);
  zero_m(time_out);
  zero(time_out_b);
  for (auto& block : blocks) {
    for (auto& s : block.streams) {
      for (Matrix* m : {&s.mod_w, &s.wq, &s.wk, &s.wv, &s.wo, &s.mlp_in, &s.mlp_out}) zero_m(*m);
      for (auto* b : {&s.mod_b, &s.bq, &s.bk, &s.bv, &s.bo, &s.mlp_in_b, &s.mlp_out_b}) zero(*b);
    }
  }
  zero_m(final_mod);
  zero(final_mod_b);
  zero_m(final_out);
  zero(final_out_b);
}

Engine::Engine(EngineConfig config) : Engine(config, EngineWeights::random(config)) {}

Engine::Engine(EngineConfig config, EngineWeights weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  const auto d = static_cast<std::size_t>(config_.width);
  const std::size_t sets = config_.variant == Variant::kDualStream ? 2 : 1;
  bool ok = weights_.blocks.size() == static_cast<std::size_t>(config_.depth) &&
            weights_.image_pos.rows() == static_cast<std::size_t>(config_.image_tokens()) &&
            weights_.image_pos.cols() == d &&
            weights_.token_embed.rows() == static_cast<std::size_t>(config_.vocab) &&
            weights_.final_out.rows() == d;
  for (const auto& b : weights_.blocks) ok = ok && b.streams.size() >= sets;
  if (!ok) fail(ErrorKind::kConfig, "engine weights do not match the configuration");
}

Engine init_engine(const EngineConfig& config) { return Engine(config); }

std::vector<float> Engine::timestep_embedding(double t) const {
  const std::size_t d = static_cast<std::size_t>(config_.width);
  const std::size_t half = d / 2;
  std::vector<float> freq(d, 0.0f);
  for (std::size_t i = 0; i < half; ++i) {
    const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = 1000.0 * t * f;
    freq[i] = static_cast<float>(std::cos(arg));
    freq[half + i] = static_cast<float>(std::sin(arg));
  }
  auto h = row_vector_linear(freq, weights_.time_in, weights_.time_in_b);
  for (float& v : h) v = silu(v);
  return row_vector_linear(h, weights_.time_out, weights_.time_out_b);
}

std::pair<Matrix, Matrix> Engine::forward_block(int layer, const Matrix& image,
                                                const Matrix& encoder,
                                                std::span<const float> temb) const {
  const auto d = static_cast<std::size_t>(config_.width);
  if (layer < 0 || layer >= config_.depth) {
    fail(ErrorKind::kRange, "layer " + std::to_string(layer) + " outside [0, depth)");
  }
  if (image.rows() != static_cast<std::size_t>(config_.image_tokens()) || image.cols() != d) {
    fail(ErrorKind::kShape, "image stream must be N_I x width");
  }
  if (encoder.rows() != static_cast<std::size_t>(config_.encoder_len) ||
      (encoder.rows() > 0 && encoder.cols() != d)) {
    fail(ErrorKind::kShape, "encoder stream must be N_E x width");
  }
  if (temb.size() != d) fail(ErrorKind::kShape, "timestep embedding must have width entries");
  check_finite(image, "image stream input");
  check_finite(encoder, "encoder stream input");

  const auto& block = weights_.blocks[static_cast<std::size_t>(layer)];
  std::vector<float> cond(temb.begin(), temb.end());
  for (float& v : cond) v = silu(v);

  // Segments of the joint sequence, each with its own parameter set.
  struct Segment {
    Matrix x;
    const StreamBlockWeights* params;
    Modulation mod;
  };
  std::vector<Segment> segments;
  const bool dual = config_.variant == Variant::kDualStream;
  Matrix encoder_rows = encoder.rows() > 0 ? encoder : Matrix(0, d);
  if (dual) {
    segments.push_back({image, &block.streams[0], {}});
    segments.push_back({encoder_rows, &block.streams[1], {}});
  } else {
    segments.push_back({concat_rows(image, encoder_rows), &block.streams[0], {}});
  }

  Matrix q(0, d), k(0, d), v(0, d);
  for (auto& seg : segments) {
    seg.mod = {row_vector_linear(cond, seg.params->mod_w, seg.params->mod_b), d};
    Matrix h = layer_norm(seg.x);
    modulate(h, seg.mod.part(0), seg.mod.part(1));
    q = concat_rows(q, linear(h, seg.params->wq, seg.params->bq));
    k = concat_rows(k, linear(h, seg.params->wk, seg.params->bk));
    v = concat_rows(v, linear(h, seg.params->wv, seg.params->bv));
  }
  const Matrix attn = joint_attention(q, k, v, config_.heads);

  std::size_t offset = 0;
  for (auto& seg : segments) {
    const std::size_t n = seg.x.rows();
    Matrix o = linear(slice_rows(attn, offset, offset + n), seg.params->wo, seg.params->bo);
    offset += n;
    auto gate1 = seg.mod.part(2);
    for (std::size_t r = 0; r < n; ++r) {
      auto xr = seg.x.row(r);
      auto orow = o.row(r);
      for (std::size_t c = 0; c < d; ++c) xr[c] += gate1[c] * orow[c];
    }
    Matrix h = layer_norm(seg.x);
    modulate(h, seg.mod.part(3), seg.mod.part(4));
    Matrix hidden = linear(h, seg.params->mlp_in, seg.params->mlp_in_b);
    for (float& val : hidden.values()) val = gelu_tanh(val);
    Matrix m = linear(hidden, seg.params->mlp_out, seg.params->mlp_out_b);
    auto gate2 = seg.mod.part(5);
    for (std::size_t r = 0; r < n; ++r) {
      auto xr = seg.x.row(r);
      auto mr = m.row(r);
      for (std::size_t c = 0; c < d; ++c) xr[c] += gate2[c] * mr[c];
    }
  }

  std::pair<Matrix, Matrix> out;
  if (dual) {
    out = {std::move(segments[0].x), std::move(segments[1].x)};
  } else {
    const auto ni = image.rows();
    out = {slice_rows(segments[0].x, 0, ni),
           slice_rows(segments[0].x, ni, segments[0].x.rows())};
  }
  check_finite(out.first, "image stream output");
  check_finite(out.second, "encoder stream output");
  return out;
}

Matrix Engine::initial_noise() const { return noise_for(config_); }

double Engine::time_at(int step) const noexcept {
  return 1.0 - static_cast<double>(step) / static_cast<double>(config_.steps);
}

Matrix Engine::embed_prompt(std::span<const int> prompt) const {
  if (prompt.size() != static_cast<std::size_t>(config_.encoder_len)) {
    fail(ErrorKind::kShape, "prompt length " + std::to_string(prompt.size()) +
                                " != encoder_len " + std::to_string(config_.encoder_len));
  }
  const auto d = static_cast<std::size_t>(config_.width);
  Matrix out(prompt.size(), d);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    const int id = prompt[i];
    if (id < 0 || id >= config_.vocab) {
      fail(ErrorKind::kRange, "prompt token id " + std::to_string(id) + " outside [0, vocab)");
    }
    auto src = weights_.token_embed.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Engine::velocity(const Matrix& latent, int step, const Matrix& encoder_embed,
                        const CaptureSpec& capture, std::span<const HookFn> hooks,
                        std::map<PointKey, ActivationTensor>& captured) const {
  Matrix image = linear(latent, weights_.latent_in, weights_.latent_in_b);
  {
    auto iv = image.values();
    auto pv = weights_.image_pos.values();
    for (std::size_t i = 0; i < iv.size(); ++i) iv[i] += pv[i];
  }
  Matrix encoder = encoder_embed;
  const auto temb = timestep_embedding(time_at(step));

  for (int layer = 0; layer < config_.depth; ++layer) {
    auto [img, enc] = forward_block(layer, image, encoder, temb);
    image = std::move(img);
    encoder = std::move(enc);
    for (Stream stream : {Stream::kImage, Stream::kEncoder}) {
      Matrix& state = stream == Stream::kImage ? image : encoder;
      const PointKey key{layer, step, stream};
      if (!hooks.empty()) {
        ActivationTensor act{stream, layer, step, std::move(state)};
        const std::size_t rows = act.data.rows();
        const std::size_t cols = act.data.cols();
        for (const auto& hook : hooks) {
          act = hook(std::move(act));
          if (act.data.rows() != rows || act.data.cols() != cols || act.key() != key) {
            fail(ErrorKind::kIntervention,
                 "hook changed the shape or tags of the activation at " + describe(key));
          }
          if (!act.data.all_finite()) {
            fail(ErrorKind::kIntervention, "hook produced non-finite values at " + describe(key));
          }
        }
        state = std::move(act.data);
      }
      if (capture.wants(key)) captured[key] = ActivationTensor{stream, layer, step, state};
    }
  }

  const auto& w = weights_;
  std::vector<float> cond(temb.begin(), temb.end());
  for (float& v : cond) v = silu(v);
  const auto mod = row_vector_linear(cond, w.final_mod, w.final_mod_b);
  const auto d = static_cast<std::size_t>(config_.width);
  Matrix h = layer_norm(image);
  modulate(h, std::span<const float>(mod).subspan(0, d), std::span<const float>(mod).subspan(d, d));
  return linear(h, w.final_out, w.final_out_b);
}

Trajectory Engine::sample(std::span<const int> prompt, const CaptureSpec& capture,
                          std::span<const HookFn> hooks) const {
  for (const auto& key : capture.points) {
    if (key.layer < 0 || key.layer >= config_.depth || key.timestep < 0 ||
        key.timestep >= config_.steps) {
      fail(ErrorKind::kRange, "capture point " + describe(key) + " is out of range");
    }
  }
  Trajectory traj;
  traj.config = config_;
  traj.prompt.assign(prompt.begin(), prompt.end());
  const Matrix encoder_embed = embed_prompt(prompt);
  traj.initial_noise = initial_noise();
  traj.latents.reserve(static_cast<std::size_t>(config_.steps) + 1);
  traj.latents.push_back(traj.initial_noise);

  for (int step = 0; step < config_.steps; ++step) {
    const Matrix& x = traj.latents.back();
    const Matrix v = velocity(x, step, encoder_embed, capture, hooks, traj.captured);
    const auto dt = static_cast<float>(time_at(step + 1) - time_at(step));
    Matrix next = x;
    auto nv = next.values();
    auto vv = v.values();
    for (std::size_t i = 0; i < nv.size(); ++i) nv[i] += dt * vv[i];
    check_finite(next, "latent");
    traj.latents.push_back(std::move(next));
  }
  traj.final_latent = traj.latents.back();
  return traj;
}

void PlantSpec::validate() const {
  config.validate();
  for (int n : foreground) {
    if (n < 0 || n >= config.image_tokens()) {
      fail(ErrorKind::kConfig, "plant foreground token " + std::to_string(n) + " outside [0, N_I)");
    }
  }
  for (int c : channels) {
    if (c < 0 || c >= config.width) {
      fail(ErrorKind::kConfig, "plant channel " + std::to_string(c) + " outside [0, width)");
    }
  }
  if (!(amplitude > 0.0)) fail(ErrorKind::kConfig, "plant amplitude must be > 0");
  if (!(noise >= 0.0)) fail(ErrorKind::kConfig, "plant noise must be >= 0");
}

Matrix planted_image_block(const PlantSpec& plant, std::uint64_t seed) {
  const auto ni = static_cast<std::size_t>(plant.config.image_tokens());
  const auto d = static_cast<std::size_t>(plant.config.width);
  std::vector<char> fg(ni, 0), massive(d, 0);
  for (int n : plant.foreground) fg[static_cast<std::size_t>(n)] = 1;
  for (int c : plant.channels) massive[static_cast<std::size_t>(c)] = 1;
  Rng rng(seed);
  Matrix x(ni, d);
  for (std::size_t n = 0; n < ni; ++n) {
    for (std::size_t c = 0; c < d; ++c) {
      // Draw for every entry so the noise field does not depend on the plant sets.
      const double z = rng.normal();
      x(n, c) = (fg[n] && massive[c]) ? static_cast<float>(plant.amplitude)
                                      : static_cast<float>(plant.noise * z);
    }
  }
  return x;
}

Trajectory planted_sample(const PlantSpec& plant) {
  plant.validate();
  const EngineConfig& config = plant.config;
  Trajectory traj;
  traj.config = config;
  traj.prompt.assign(static_cast<std::size_t>(config.encoder_len), 0);
  traj.initial_noise = noise_for(config);
  traj.latents.assign(static_cast<std::size_t>(config.steps) + 1, traj.initial_noise);
  traj.final_latent = traj.initial_noise;
  const auto ne = static_cast<std::size_t>(config.encoder_len);
  const auto d = static_cast<std::size_t>(config.width);
  for (int layer = 0; layer < config.depth; ++layer) {
    for (int step = 0; step < config.steps; ++step) {
      const auto l = static_cast<std::uint64_t>(layer);
      const auto t = static_cast<std::uint64_t>(step);
      traj.captured[{layer, step, Stream::kImage}] = ActivationTensor{
          Stream::kImage, layer, step, planted_image_block(plant, derive_seed(plant.seed, {l, t, 0}))};
      Rng rng(derive_seed(plant.seed, {l, t, 1}));
      Matrix enc(ne, d);
      for (float& v : enc.values()) v = static_cast<float>(plant.noise * rng.normal());
      traj.captured[{layer, step, Stream::kEncoder}] =
          ActivationTensor{Stream::kEncoder, layer, step, std::move(enc)};
    }
  }
  return traj;
}

Engine planted_engine(const PlantSpec& plant) {
  plant.validate();
  EngineWeights w = EngineWeights::random(plant.config);
  w.image_pos = planted_image_block(plant, derive_seed(plant.seed, {0x504f53ULL}));
  return Engine(plant.config, std::move(w));
}

}  // namespace massact
