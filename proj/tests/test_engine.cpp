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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "massact/engine.hpp"
#include "massact/stats.hpp"
#include "support.hpp"

namespace massact {
namespace {

using testing::Gen;
using testing::error_kind_of;

// Straightforward double-precision block used as an oracle. Written from the
// architecture description, not from the library code.
using Dmat = std::vector<std::vector<double>>;

Dmat to_d(const Matrix& m) {
  Dmat out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

Dmat affine(const Dmat& x, const Matrix& w, const std::vector<float>& b) {
  Dmat out(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < w.cols(); ++o) {
      double acc = b.empty() ? 0.0 : b[o];
      for (std::size_t i = 0; i < w.rows(); ++i) acc += x[r][i] * w(i, o);
      out[r][o] = acc;
    }
  }
  return out;
}

Dmat norm_rows(const Dmat& x) {
  Dmat out = x;
  for (auto& row : out) {
    const double n = static_cast<double>(row.size());
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    for (double& v : row) v = (v - mean) / std::sqrt(var + 1e-6);
  }
  return out;
}

double silu_d(double x) { return x / (1.0 + std::exp(-x)); }
double gelu_d(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

std::pair<Matrix, Matrix> reference_block(const Engine& engine, int layer, const Matrix& image,
                                          const Matrix& encoder, const std::vector<float>& temb) {
  const auto& cfg = engine.config();
  const auto& block = engine.weights().blocks[static_cast<std::size_t>(layer)];
  const std::size_t d = static_cast<std::size_t>(cfg.width);
  Dmat cond(1, std::vector<double>(d));
  for (std::size_t i = 0; i < d; ++i) cond[0][i] = silu_d(temb[i]);

  std::vector<Dmat> xs;
  std::vector<const StreamBlockWeights*> ps;
  if (cfg.variant == Variant::kDualStream) {
    xs = {to_d(image), to_d(encoder)};
    ps = {&block.streams[0], &block.streams[1]};
  } else {
    Dmat joint = to_d(image);
    for (auto& r : to_d(encoder)) joint.push_back(r);
    xs = {joint};
    ps = {&block.streams[0]};
  }

  std::vector<std::vector<double>> mods;
  Dmat q, k, v;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    mods.push_back(affine(cond, ps[s]->mod_w, ps[s]->mod_b)[0]);
    Dmat h = norm_rows(xs[s]);
    for (auto& row : h)
      for (std::size_t c = 0; c < d; ++c) row[c] = row[c] * (1.0 + mods[s][d + c]) + mods[s][c];
    for (auto& r : affine(h, ps[s]->wq, ps[s]->bq)) q.push_back(r);
    for (auto& r : affine(h, ps[s]->wk, ps[s]->bk)) k.push_back(r);
    for (auto& r : affine(h, ps[s]->wv, ps[s]->bv)) v.push_back(r);
  }
  const std::size_t n = q.size();
  const std::size_t hd = d / static_cast<std::size_t>(cfg.heads);
  Dmat attn(n, std::vector<double>(d, 0.0));
  for (int head = 0; head < cfg.heads; ++head) {
    const std::size_t off = static_cast<std::size_t>(head) * hd;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> w(n);
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < hd; ++c) dot += q[i][off + c] * k[j][off + c];
        w[j] = dot / std::sqrt(static_cast<double>(hd));
      }
      const double mx = *std::max_element(w.begin(), w.end());
      double z = 0.0;
      for (double& x : w) z += (x = std::exp(x - mx));
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += w[j] * v[j][off + c];
        attn[i][off + c] = acc / z;
      }
    }
  }
  std::size_t offset = 0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    Dmat part(attn.begin() + static_cast<std::ptrdiff_t>(offset),
              attn.begin() + static_cast<std::ptrdiff_t>(offset + xs[s].size()));
    offset += xs[s].size();
    Dmat o = affine(part, ps[s]->wo, ps[s]->bo);
    for (std::size_t r = 0; r < xs[s].size(); ++r)
      for (std::size_t c = 0; c < d; ++c) xs[s][r][c] += mods[s][2 * d + c] * o[r][c];
    Dmat h = norm_rows(xs[s]);
    for (auto& row : h)
      for (std::size_t c = 0; c < d; ++c) row[c] = row[c] * (1.0 + mods[s][4 * d + c]) + mods[s][3 * d + c];
    Dmat hidden = affine(h, ps[s]->mlp_in, ps[s]->mlp_in_b);
    for (auto& row : hidden)
      for (double& x : row) x = gelu_d(x);
    Dmat m = affine(hidden, ps[s]->mlp_out, ps[s]->mlp_out_b);
    for (std::size_t r = 0; r < xs[s].size(); ++r)
      for (std::size_t c = 0; c < d; ++c) xs[s][r][c] += mods[s][5 * d + c] * m[r][c];
  }
  Dmat all;
  for (auto& x : xs)
    for (auto& r : x) all.push_back(r);
  auto back = [&](std::size_t begin, std::size_t count) {
    Matrix m(count, d);
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t c = 0; c < d; ++c) m(r, c) = static_cast<float>(all[begin + r][c]);
    return m;
  };
  return {back(0, image.rows()), back(image.rows(), encoder.rows())};
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    out = std::max(out, std::abs(static_cast<double>(a.values()[i]) - b.values()[i]));
  return out;
}

// Random weights scaled up so the attention and MLP branches matter.
EngineWeights lively_weights(const EngineConfig& c, Gen& gen) {
  EngineWeights w = EngineWeights::random(c);
  for (auto& block : w.blocks)
    for (auto& s : block.streams)
      for (float& v : s.mod_w.values()) v = static_cast<float>(gen.gauss());
  return w;
}

EngineConfig reference_config() {
  EngineConfig c;
  c.depth = 6;
  c.width = 32;
  c.heads = 4;
  c.latent_h = 8;
  c.latent_w = 8;
  c.encoder_len = 8;
  c.steps = 4;
  c.seed = 7;
  return c;
}

TEST(EngineConfig, ExampleConfigBuildsSixBlocks) {
  const Engine e = init_engine(reference_config());
  EXPECT_EQ(e.weights().blocks.size(), 6u);
  EXPECT_EQ(e.config().image_tokens(), 64);
  EXPECT_EQ(e.initial_noise().rows(), 64u);
  EXPECT_EQ(e.initial_noise().cols(), 32u);
}

TEST(EngineConfig, SameSeedGivesBitIdenticalWeights) {
  const EngineConfig c = reference_config();
  EXPECT_TRUE(EngineWeights::random(c) == EngineWeights::random(c));
  EngineConfig other = c;
  other.seed = 8;
  EXPECT_FALSE(EngineWeights::random(c) == EngineWeights::random(other));
}

TEST(EngineConfig, WidthMustDivideHeads) {
  EngineConfig c = reference_config();
  c.width = 30;
  try {
    init_engine(c);
    FAIL() << "expected a config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find("width mod heads"), std::string::npos);
  }
}

TEST(EngineConfig, RejectsOtherViolations) {
  for (auto mutate : std::vector<void (*)(EngineConfig&)>{
           [](EngineConfig& c) { c.depth = 2; }, [](EngineConfig& c) { c.steps = 0; },
           [](EngineConfig& c) { c.heads = 0; }, [](EngineConfig& c) { c.latent_w = 0; },
           [](EngineConfig& c) { c.vocab = 0; }, [](EngineConfig& c) { c.encoder_len = -1; }}) {
    EngineConfig c = reference_config();
    mutate(c);
    EXPECT_EQ(error_kind_of([&] { c.validate(); }), ErrorKind::kConfig);
  }
}

TEST(EngineConfig, RejectsMismatchedWeights) {
  const EngineConfig c = reference_config();
  EngineWeights w = EngineWeights::random(c);
  w.blocks.pop_back();
  EXPECT_EQ(error_kind_of([&] { Engine(c, w); }), ErrorKind::kConfig);
}

TEST(ForwardBlock, ZeroWeightsAreResidualIdentity) {
  Gen gen(1);
  for (Variant variant : {Variant::kDualStream, Variant::kSingleStream}) {
    EngineConfig c = reference_config();
    c.variant = variant;
    EngineWeights w = EngineWeights::random(c);
    w.zero_all();
    const Engine e(c, w);
    const Matrix img = gen.matrix(64, 32), enc = gen.matrix(8, 32);
    const auto temb = e.timestep_embedding(0.5);
    const auto [oi, oe] = e.forward_block(2, img, enc, temb);
    EXPECT_TRUE(oi.bit_equal(img));
    EXPECT_TRUE(oe.bit_equal(enc));
  }
}

TEST(ForwardBlock, MatchesDoublePrecisionReference) {
  Gen gen(2);
  for (int trial = 0; trial < 12; ++trial) {
    const EngineConfig c = gen.engine_config();
    const Engine e(c, lively_weights(c, gen));
    const Matrix img = gen.matrix(static_cast<std::size_t>(c.image_tokens()), static_cast<std::size_t>(c.width));
    const Matrix enc = gen.matrix(static_cast<std::size_t>(c.encoder_len), static_cast<std::size_t>(c.width));
    const auto temb = e.timestep_embedding(gen.real(0.0, 1.0));
    const int layer = gen.integer(0, c.depth - 1);
    const auto [oi, oe] = e.forward_block(layer, img, enc, temb);
    const auto [ri, re] = reference_block(e, layer, img, enc, temb);
    EXPECT_LT(max_abs_diff(oi, ri), 1e-4) << "trial " << trial;
    EXPECT_LT(max_abs_diff(oe, re), 1e-4) << "trial " << trial;
  }
}

TEST(ForwardBlock, EncoderPermutationPermutesOutputRows) {
  EngineConfig c = reference_config();
  c.encoder_len = 4;
  Gen gen(3);
  const Engine e(c, lively_weights(c, gen));
  const Matrix img = gen.matrix(64, 32), enc = gen.matrix(4, 32);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Matrix penc(4, 32);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t col = 0; col < 32; ++col) penc(r, col) = enc(perm[r], col);
  const auto temb = e.timestep_embedding(0.25);
  const auto [oi, oe] = e.forward_block(1, img, enc, temb);
  const auto [pi, pe] = e.forward_block(1, img, penc, temb);
  EXPECT_LT(max_abs_diff(oi, pi), 1e-5);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t col = 0; col < 32; ++col) EXPECT_NEAR(pe(r, col), oe(perm[r], col), 1e-5);
}

TEST(ForwardBlock, EmptyEncoderReducesToImageSelfAttention) {
  EngineConfig dual = reference_config();
  dual.encoder_len = 0;
  Gen gen(4);
  const EngineWeights dw = lively_weights(dual, gen);
  EngineConfig single = dual;
  single.variant = Variant::kSingleStream;
  EngineWeights sw = dw;
  for (auto& block : sw.blocks) block.streams.resize(1);
  const Engine de(dual, dw), se(single, sw);
  const Matrix img = gen.matrix(64, 32);
  const auto temb = de.timestep_embedding(0.75);
  const auto [a, ae] = de.forward_block(0, img, Matrix(0, 32), temb);
  const auto [b, be] = se.forward_block(0, img, Matrix(0, 32), temb);
  EXPECT_TRUE(a.bit_equal(b));
  EXPECT_EQ(ae.rows(), 0u);
  EXPECT_EQ(be.rows(), 0u);
}

TEST(ForwardBlock, ShapeAndNumericErrors) {
  const Engine e = init_engine(reference_config());
  const auto temb = e.timestep_embedding(0.5);
  EXPECT_EQ(error_kind_of([&] { e.forward_block(0, Matrix(63, 32), Matrix(8, 32), temb); }),
            ErrorKind::kShape);
  EXPECT_EQ(error_kind_of([&] { e.forward_block(0, Matrix(64, 32), Matrix(8, 31), temb); }),
            ErrorKind::kShape);
  Matrix bad(64, 32);
  bad(3, 4) = std::nanf("");
  EXPECT_EQ(error_kind_of([&] { e.forward_block(0, bad, Matrix(8, 32), temb); }), ErrorKind::kNumeric);
  EXPECT_EQ(error_kind_of([&] { e.forward_block(6, Matrix(64, 32), Matrix(8, 32), temb); }),
            ErrorKind::kRange);
}

TEST(Sample, OneStepGivesTwoLatents) {
  EngineConfig c = reference_config();
  c.steps = 1;
  c.depth = 3;
  const Engine e = init_engine(c);
  const Trajectory t = e.sample(std::vector<int>(8, 1), CaptureSpec::nothing());
  EXPECT_EQ(t.latents.size(), 2u);
  EXPECT_TRUE(t.latents.front().bit_equal(t.initial_noise));
  EXPECT_TRUE(t.latents.back().bit_equal(t.final_latent));
}

TEST(Sample, LatentCountIsStepsPlusOne) {
  Gen gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    const EngineConfig c = gen.engine_config();
    const Trajectory t = init_engine(c).sample(gen.prompt(c), CaptureSpec::nothing());
    EXPECT_EQ(t.latents.size(), static_cast<std::size_t>(c.steps) + 1);
  }
}

TEST(Sample, DeterministicAcrossRunsAndThreads) {
  Gen gen(6);
  for (int trial = 0; trial < 8; ++trial) {
    const EngineConfig c = gen.engine_config();
    const Engine e = init_engine(c);
    const auto prompt = gen.prompt(c);
    const Trajectory a = e.sample(prompt, CaptureSpec::everything());
    auto fut = std::async(std::launch::async, [&] { return e.sample(prompt, CaptureSpec::everything()); });
    const Trajectory b = init_engine(c).sample(prompt, CaptureSpec::everything());
    EXPECT_TRUE(a.bit_equal(b));
    EXPECT_TRUE(a.bit_equal(fut.get()));
  }
}

TEST(Sample, IdentityHookIsBitExact) {
  Gen gen(7);
  for (int trial = 0; trial < 6; ++trial) {
    const EngineConfig c = gen.engine_config();
    const Engine e = init_engine(c);
    const auto prompt = gen.prompt(c);
    const std::vector<HookFn> hooks{[](ActivationTensor x) { return x; }};
    const Trajectory a = e.sample(prompt, CaptureSpec::everything());
    const Trajectory b = e.sample(prompt, CaptureSpec::everything(), hooks);
    EXPECT_TRUE(a.bit_equal(b));
  }
}

TEST(Sample, CapturesEveryRequestedPoint) {
  const EngineConfig c = reference_config();
  const Engine e = init_engine(c);
  const Trajectory all = e.sample(std::vector<int>(8, 0), CaptureSpec::everything());
  EXPECT_EQ(all.captured.size(), static_cast<std::size_t>(2 * c.depth * c.steps));
  const PointKey key{2, 1, Stream::kEncoder};
  const Trajectory one = e.sample(std::vector<int>(8, 0), CaptureSpec{false, {key}});
  ASSERT_EQ(one.captured.size(), 1u);
  EXPECT_TRUE(one.at(key).data.bit_equal(all.at(key).data));
  EXPECT_EQ(error_kind_of([&] { one.at({0, 0, Stream::kImage}); }), ErrorKind::kRange);
  EXPECT_EQ(error_kind_of([&] { e.sample(std::vector<int>(8, 0), CaptureSpec{false, {{9, 0, Stream::kImage}}}); }),
            ErrorKind::kRange);
}

TEST(Sample, SharedNoiseAcrossPrompts) {
  const Engine e = init_engine(reference_config());
  std::vector<int> p1(8, 3), p2 = p1;
  p2[5] = 4;
  const Trajectory a = e.sample(p1, CaptureSpec::nothing());
  const Trajectory b = e.sample(p2, CaptureSpec::nothing());
  EXPECT_TRUE(a.initial_noise.bit_equal(b.initial_noise));
  EXPECT_FALSE(a.final_latent.bit_equal(b.final_latent));
}

TEST(Sample, EqualTokenIdsEmbedIdentically) {
  EngineConfig c = reference_config();
  c.encoder_len = 2;
  const Engine e = init_engine(c);
  const Trajectory t = e.sample(std::vector<int>{5, 5}, CaptureSpec::everything());
  // Without positional information on the encoder stream, equal ids stay equal.
  const Matrix& enc = t.at({c.depth - 1, c.steps - 1, Stream::kEncoder}).data;
  for (std::size_t col = 0; col < enc.cols(); ++col) EXPECT_EQ(enc(0, col), enc(1, col));
}

TEST(Sample, HookCompositionEqualsComposedHook) {
  Gen gen(8);
  const EngineConfig c = gen.engine_config();
  const Engine e = init_engine(c);
  const auto prompt = gen.prompt(c);
  const HookFn f = [](ActivationTensor x) {
    for (float& v : x.data.values()) v = v * 0.5f + 0.25f;
    return x;
  };
  const HookFn g = [](ActivationTensor x) {
    if (x.layer % 2 == 0 && x.data.cols() > 0)
      for (std::size_t r = 0; r < x.data.rows(); ++r) x.data(r, 0) = -x.data(r, 0);
    return x;
  };
  const std::vector<HookFn> pair{f, g};
  const std::vector<HookFn> composed{[&](ActivationTensor x) { return g(f(std::move(x))); }};
  const Trajectory a = e.sample(prompt, CaptureSpec::everything(), pair);
  const Trajectory b = e.sample(prompt, CaptureSpec::everything(), composed);
  EXPECT_TRUE(a.bit_equal(b));
  const std::vector<HookFn> reversed{g, f};
  EXPECT_FALSE(a.bit_equal(e.sample(prompt, CaptureSpec::everything(), reversed)));
}

TEST(Sample, CapturesArePostHook) {
  const EngineConfig c = reference_config();
  const Engine e = init_engine(c);
  const std::vector<HookFn> hooks{[](ActivationTensor x) {
    if (x.layer == 3 && x.timestep == 2 && x.stream == Stream::kImage)
      for (float& v : x.data.values()) v = 1.5f;
    return x;
  }};
  const Trajectory t = e.sample(std::vector<int>(8, 0), CaptureSpec::everything(), hooks);
  for (float v : t.at({3, 2, Stream::kImage}).data.values()) EXPECT_EQ(v, 1.5f);
}

TEST(Sample, ZeroFinalProjectionKeepsLatentsConstant) {
  const EngineConfig c = reference_config();
  EngineWeights w = EngineWeights::random(c);
  for (float& v : w.final_out.values()) v = 0.0f;
  const Trajectory t = Engine(c, w).sample(std::vector<int>(8, 2), CaptureSpec::nothing());
  for (const auto& x : t.latents) EXPECT_TRUE(x.bit_equal(t.initial_noise));
}

TEST(Sample, EulerIntegratesConstantVelocity) {
  // v = b everywhere, so x(0) = x(1) - b.
  const EngineConfig c = reference_config();
  EngineWeights w = EngineWeights::random(c);
  for (float& v : w.final_out.values()) v = 0.0f;
  Gen gen(9);
  for (float& b : w.final_out_b) b = static_cast<float>(gen.gauss());
  const Trajectory t = Engine(c, w).sample(std::vector<int>(8, 2), CaptureSpec::nothing());
  for (std::size_t n = 0; n < t.final_latent.rows(); ++n) {
    for (std::size_t d = 0; d < t.final_latent.cols(); ++d) {
      EXPECT_NEAR(t.final_latent(n, d), t.initial_noise(n, d) - w.final_out_b[d], 1e-5);
    }
  }
  // Each step moves by exactly dt * b.
  for (std::size_t s = 0; s + 1 < t.latents.size(); ++s)
    EXPECT_NEAR(t.latents[s + 1](0, 0) - t.latents[s](0, 0), -0.25 * w.final_out_b[0], 1e-6);
}

TEST(Sample, HookShapeChangeIsAnInterventionError) {
  const Engine e = init_engine(reference_config());
  const std::vector<HookFn> hooks{[](ActivationTensor x) {
    if (x.layer == 2 && x.timestep == 1 && x.stream == Stream::kEncoder) x.data = Matrix(3, 32);
    return x;
  }};
  try {
    e.sample(std::vector<int>(8, 0), CaptureSpec::nothing(), hooks);
    FAIL() << "expected an intervention error";
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kIntervention);
    EXPECT_NE(std::string(err.what()).find("(layer=2, timestep=1, stream=encoder)"), std::string::npos);
  }
  const std::vector<HookFn> nan_hook{[](ActivationTensor x) {
    x.data(0, 0) = std::nanf("");
    return x;
  }};
  EXPECT_EQ(error_kind_of([&] { e.sample(std::vector<int>(8, 0), CaptureSpec::nothing(), nan_hook); }),
            ErrorKind::kIntervention);
}

TEST(Sample, PromptValidation) {
  const Engine e = init_engine(reference_config());
  EXPECT_EQ(error_kind_of([&] { e.sample(std::vector<int>(7, 0), CaptureSpec::nothing()); }),
            ErrorKind::kShape);
  EXPECT_EQ(error_kind_of([&] { e.sample(std::vector<int>(8, 64), CaptureSpec::nothing()); }),
            ErrorKind::kRange);
}

TEST(Sample, NoiseDependsOnlyOnSeed) {
  EngineConfig a = reference_config(), b = reference_config();
  b.depth = 4;
  b.variant = Variant::kSingleStream;
  EXPECT_TRUE(init_engine(a).initial_noise().bit_equal(init_engine(b).initial_noise()));
  b.seed = 99;
  EXPECT_FALSE(init_engine(a).initial_noise().bit_equal(init_engine(b).initial_noise()));
}

TEST(Planted, NoiselessChannelMeansHaveClosedForm) {
  PlantSpec plant;
  plant.config = reference_config();
  plant.foreground = {0, 1, 2, 9, 10, 20};
  plant.channels = {3, 7, 30};
  plant.amplitude = 10.0;
  plant.noise = 0.0;
  const Trajectory t = planted_sample(plant);
  const double expected = 10.0 * 6.0 / 64.0;
  for (const auto& [key, act] : t.captured) {
    if (key.stream != Stream::kImage) continue;
    const ChannelScore s = channel_means(act);
    for (int d = 0; d < 32; ++d) {
      const bool massive = d == 3 || d == 7 || d == 30;
      EXPECT_DOUBLE_EQ(s.mu[static_cast<std::size_t>(d)], massive ? expected : 0.0);
    }
  }
  EXPECT_EQ(t.latents.size(), static_cast<std::size_t>(plant.config.steps) + 1);
  EXPECT_EQ(t.captured.size(), static_cast<std::size_t>(2 * plant.config.depth * plant.config.steps));
}

TEST(Planted, TopTwelveRecoversMassiveChannels) {
  Gen gen(10);
  for (int trial = 0; trial < 20; ++trial) {
    PlantSpec plant;
    plant.config = reference_config();
    plant.foreground = gen.subset(64, gen.integer(8, 56));
    plant.channels = gen.subset(32, 12);
    plant.noise = 0.1;
    plant.seed = gen.u64();
    const Trajectory t = planted_sample(plant);
    const ActivationTensor& act = t.at({2, 1, Stream::kImage});
    const ChannelScore s = channel_means(act);
    // Brute-force oracle: rank every channel by its score.
    std::vector<int> order(32);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return s.score[static_cast<std::size_t>(a)] > s.score[static_cast<std::size_t>(b)];
    });
    std::vector<int> top(order.begin(), order.begin() + 12);
    std::sort(top.begin(), top.end());
    EXPECT_EQ(top, plant.channels);
    EXPECT_EQ(select_channels(s, 12, ChannelCriterion::kTop).indices, plant.channels);
  }
}

TEST(Planted, OutOfRangeSetsAreConfigErrors) {
  PlantSpec plant;
  plant.config = reference_config();
  plant.foreground = {64};
  plant.channels = {0};
  EXPECT_EQ(error_kind_of([&] { planted_sample(plant); }), ErrorKind::kConfig);
  plant.foreground = {0};
  plant.channels = {32};
  EXPECT_EQ(error_kind_of([&] { planted_sample(plant); }), ErrorKind::kConfig);
  plant.channels = {0};
  plant.amplitude = 0.0;
  EXPECT_EQ(error_kind_of([&] { planted_sample(plant); }), ErrorKind::kConfig);
}

TEST(Planted, EngineCarriesPlantInResidualStream) {
  PlantSpec plant;
  plant.config = reference_config();
  plant.foreground = Gen(11).subset(64, 20);
  plant.channels = {1, 4, 5, 8, 11, 13, 17, 19, 22, 26, 28, 31};
  plant.amplitude = 100.0;
  plant.noise = 1.0;
  const Engine e = planted_engine(plant);
  const Trajectory t = e.sample(std::vector<int>(8, 0), CaptureSpec::everything());
  const ChannelScore s = channel_means(t.at({0, 0, Stream::kImage}));
  EXPECT_EQ(select_channels(s, 12, ChannelCriterion::kTop).indices, plant.channels);
}

}  // namespace
}  // namespace massact
