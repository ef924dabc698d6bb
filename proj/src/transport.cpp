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

#include "massact/transport.hpp"

#include <future>
#include <sstream>

#include "massact/error.hpp"
#include "massact/rng.hpp"

namespace massact {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::kShape, std::string(what) + ": target is " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + ", source is " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void require_keep(const ChannelIndicator& m, std::size_t width) {
  if (m.polarity != Polarity::kKeepSelected) {
    fail(ErrorKind::kConfig, "transport channel mask must have keep_selected polarity");
  }
  if (m.bits.size() != width) fail(ErrorKind::kShape, "channel mask length does not match width");
}

std::uint64_t point_seed(std::uint64_t seed, const PointKey& key, std::uint64_t tag) {
  return derive_seed(seed, {static_cast<std::uint64_t>(key.layer),
                            static_cast<std::uint64_t>(key.timestep),
                            static_cast<std::uint64_t>(key.stream), tag});
}

ChannelIndicator transport_channels(const Matrix& source_rows, int k, const ResolvedPlan& rp,
                                    const PointKey& key) {
  const ChannelScore score = channel_means(source_rows, key.layer, key.stream);
  std::optional<std::uint64_t> seed;
  if (rp.plan.channel_criterion == ChannelCriterion::kRandom) seed = point_seed(rp.plan.seed, key, 1);
  const ChannelSelection sel = select_channels(score, k, rp.plan.channel_criterion, seed);
  return make_indicator(sel, static_cast<int>(source_rows.cols()), Polarity::kKeepSelected);
}

std::vector<std::uint8_t> transport_tokens(const Trajectory& source, const ResolvedPlan& rp,
                                           const PointKey& key) {
  const auto ni = static_cast<std::size_t>(source.config.image_tokens());
  if (!rp.plan.use_spatial_mask) return std::vector<std::uint8_t>(ni, 1);
  const int timestep = rp.plan.mask_from == MaskFrom::kPerPoint ? key.timestep
                                                                : source.config.steps - 1;
  const ActivationTensor& from = source.at({key.layer, timestep, Stream::kImage});
  MaskOptions opts;
  opts.k = rp.mask_k;
  opts.mask_criterion = rp.plan.mask_criterion;
  opts.mask_seed = point_seed(rp.plan.seed, {key.layer, timestep, Stream::kImage}, 2);
  return extract_mask(from, GridShape::of(source.config), opts).p;
}

}  // namespace

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::kLower: return "lower";
    case Regime::kMiddle: return "middle";
    case Regime::kUpper: return "upper";
  }
  return "middle";
}

Regime parse_regime(std::string_view name) {
  if (name == "lower") return Regime::kLower;
  if (name == "middle") return Regime::kMiddle;
  if (name == "upper") return Regime::kUpper;
  fail(ErrorKind::kConfig, "unknown layer regime '" + std::string(name) + "'");
}

std::string_view to_string(MaskFrom from) {
  return from == MaskFrom::kPerPoint ? "per_point" : "last_step";
}

MaskFrom parse_mask_from(std::string_view name) {
  if (name == "per_point") return MaskFrom::kPerPoint;
  if (name == "last_step") return MaskFrom::kLastStep;
  fail(ErrorKind::kConfig, "unknown mask_from '" + std::string(name) + "'");
}

const LayerRange& LayerRegimes::get(Regime regime) const {
  switch (regime) {
    case Regime::kLower: return lower;
    case Regime::kMiddle: return middle;
    case Regime::kUpper: return upper;
  }
  return middle;
}

LayerRegimes layer_regimes(int depth) {
  if (depth < 3) fail(ErrorKind::kRange, "layer_regimes: depth must be >= 3");
  const int base = depth / 3;
  const int rem = depth % 3;
  // Groups 3 - rem .. 2 take one extra layer.
  int sizes[3];
  for (int g = 0; g < 3; ++g) sizes[g] = base + (g >= 3 - rem ? 1 : 0);
  LayerRegimes r;
  r.lower = {0, sizes[0] - 1};
  r.middle = {sizes[0], sizes[0] + sizes[1] - 1};
  r.upper = {sizes[0] + sizes[1], depth - 1};
  return r;
}

std::string TransportPlan::layers_label() const {
  if (all_layers) return "all";
  if (regime) return std::string(to_string(*regime));
  std::string out;
  for (int l : layers) {
    if (!out.empty()) out += ';';
    out += std::to_string(l);
  }
  return out;
}

ResolvedPlan resolve_plan(const TransportPlan& plan, const EngineConfig& config) {
  config.validate();
  ResolvedPlan rp;
  rp.plan = plan;
  if (plan.all_layers) {
    for (int l = 0; l < config.depth; ++l) rp.layers.insert(l);
  } else if (plan.regime) {
    const LayerRange range = layer_regimes(config.depth).get(*plan.regime);
    for (int l = range.first; l <= range.last; ++l) rp.layers.insert(l);
  } else {
    for (int l : plan.layers) {
      if (l < 0 || l >= config.depth) {
        fail(ErrorKind::kRange, "transport layer " + std::to_string(l) + " outside [0, depth)");
      }
      rp.layers.insert(l);
    }
  }
  if (plan.image_k < 0 || plan.encoder_k < 0 || plan.mask_k < 0) {
    fail(ErrorKind::kRange, "transport k values must be >= 0");
  }
  if (plan.encoder_k > config.width) {
    fail(ErrorKind::kRange, "encoder_k=" + std::to_string(plan.encoder_k) + " exceeds width " +
                                std::to_string(config.width));
  }
  rp.image_k = plan.image_k;
  if (rp.image_k > config.width) {
    rp.warnings.push_back("image_k=" + std::to_string(plan.image_k) + " clamped to width " +
                          std::to_string(config.width));
    rp.image_k = config.width;
  }
  rp.mask_k = plan.mask_k;
  if (rp.mask_k > config.width) {
    rp.warnings.push_back("mask_k=" + std::to_string(plan.mask_k) + " clamped to width " +
                          std::to_string(config.width));
    rp.mask_k = config.width;
  }
  rp.encoder_k = plan.encoder_k;
  return rp;
}

Matrix JointMask::materialize() const {
  Matrix out(p.size(), m.bits.size());
  for (std::size_t n = 0; n < p.size(); ++n) {
    for (std::size_t d = 0; d < m.bits.size(); ++d) out(n, d) = static_cast<float>(at(n, d));
  }
  return out;
}

Matrix replace_channels(const Matrix& target, const Matrix& source, const ChannelIndicator& m) {
  require_same_shape(target, source, "replace_channels");
  require_keep(m, target.cols());
  Matrix out = target;
  for (std::size_t n = 0; n < out.rows(); ++n) {
    auto orow = out.row(n);
    auto srow = source.row(n);
    for (std::size_t d = 0; d < orow.size(); ++d) {
      if (m.bits[d]) orow[d] = srow[d];
    }
  }
  return out;
}

ActivationTensor replace_channels(const ActivationTensor& target, const ActivationTensor& source,
                                  const ChannelIndicator& m) {
  return {target.stream, target.layer, target.timestep,
          replace_channels(target.data, source.data, m)};
}

Matrix replace_spatial(const Matrix& target, const Matrix& source, const JointMask& mask) {
  require_same_shape(target, source, "replace_spatial");
  require_keep(mask.m, target.cols());
  if (mask.p.size() != target.rows()) {
    fail(ErrorKind::kShape, "replace_spatial: token mask length does not match token count");
  }
  Matrix out = target;
  for (std::size_t n = 0; n < out.rows(); ++n) {
    if (!mask.p[n]) continue;
    auto orow = out.row(n);
    auto srow = source.row(n);
    for (std::size_t d = 0; d < orow.size(); ++d) {
      if (mask.m.bits[d]) orow[d] = srow[d];
    }
  }
  return out;
}

ActivationTensor replace_spatial(const ActivationTensor& target, const ActivationTensor& source,
                                 const JointMask& mask) {
  if (target.stream != Stream::kImage) {
    fail(ErrorKind::kStream, "spatial replacement applies to the image stream only");
  }
  return {target.stream, target.layer, target.timestep,
          replace_spatial(target.data, source.data, mask)};
}

Matrix latent_lerp(const Matrix& a, const Matrix& b, double alpha) {
  require_same_shape(a, b, "latent_lerp");
  Matrix out(a.rows(), a.cols());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    ov[i] = static_cast<float>((1.0 - alpha) * av[i] + alpha * bv[i]);
  }
  return out;
}

CaptureSpec transport_capture(const ResolvedPlan& plan, const EngineConfig& config) {
  CaptureSpec spec;
  for (int l : plan.layers) {
    for (int t = 0; t < config.steps; ++t) {
      spec.points.insert({l, t, Stream::kImage});
      spec.points.insert({l, t, Stream::kEncoder});
    }
  }
  return spec;
}

HookFn transport_hook(std::shared_ptr<const Trajectory> source, const ResolvedPlan& plan) {
  return [source = std::move(source), rp = plan](ActivationTensor x) {
    if (!rp.layers.contains(x.layer)) return x;
    const PointKey key = x.key();
    const bool single = source->config.variant == Variant::kSingleStream;

    if (!single) {
      if (x.stream == Stream::kImage) {
        if (rp.image_k == 0) return x;
        const ActivationTensor& src = source->at(key);
        JointMask mask{transport_tokens(*source, rp, key),
                       transport_channels(src.data, rp.image_k, rp, key)};
        x.data = replace_spatial(x.data, src.data, mask);
      } else {
        if (rp.encoder_k == 0 || x.data.rows() == 0) return x;
        const ActivationTensor& src = source->at(key);
        x.data = replace_channels(x.data, src.data, transport_channels(src.data, rp.encoder_k, rp, key));
      }
      return x;
    }

    // Single stream: every token belongs to one stream, so the channel
    // selection uses the whole source sequence and image_k.
    if (rp.image_k == 0 || x.data.rows() == 0) return x;
    const ActivationTensor& src_img = source->at({key.layer, key.timestep, Stream::kImage});
    const ActivationTensor& src_enc = source->at({key.layer, key.timestep, Stream::kEncoder});
    const PointKey joint_key{key.layer, key.timestep, Stream::kImage};
    ChannelIndicator m =
        transport_channels(concat_rows(src_img.data, src_enc.data), rp.image_k, rp, joint_key);
    if (x.stream == Stream::kImage) {
      JointMask mask{transport_tokens(*source, rp, key), std::move(m)};
      x.data = replace_spatial(x.data, src_img.data, mask);
    } else {
      x.data = replace_channels(x.data, src_enc.data, m);
    }
    return x;
  };
}

Trajectory run_merged(const Engine& engine, std::shared_ptr<const Trajectory> source,
                      const std::vector<int>& target_prompt, const ResolvedPlan& plan,
                      const CaptureSpec& capture) {
  if (!source->initial_noise.bit_equal(engine.initial_noise())) {
    fail(ErrorKind::kIntervention, "source trajectory does not share the engine's initial noise");
  }
  const std::vector<HookFn> hooks{transport_hook(std::move(source), plan)};
  return engine.sample(target_prompt, capture, hooks);
}

TransportResult run_transport(const Engine& engine, const std::vector<int>& source_prompt,
                              const std::vector<int>& target_prompt, const TransportPlan& plan) {
  const ResolvedPlan rp = resolve_plan(plan, engine.config());
  const CaptureSpec capture = transport_capture(rp, engine.config());
  auto source =
      std::make_shared<const Trajectory>(engine.sample(source_prompt, capture));

  auto target = std::async(std::launch::async,
                           [&] { return engine.sample(target_prompt, capture); });
  Trajectory merged = run_merged(engine, source, target_prompt, rp, capture);
  return {std::move(merged), *source, target.get(), rp.warnings};
}

std::vector<SweepRow> sweep_transport(const Engine& engine, const std::vector<PromptPair>& pairs,
                                      const std::vector<SweepPoint>& grid,
                                      const TransportPlan& base) {
  const EngineConfig& config = engine.config();
  TransportPlan everything = base;
  everything.all_layers = true;
  const CaptureSpec capture = transport_capture(resolve_plan(everything, config), config);

  struct PairRuns {
    std::shared_ptr<const Trajectory> source;
    Matrix target_final;
  };
  std::vector<PairRuns> runs;
  for (const auto& [src, tgt] : pairs) {
    runs.push_back({std::make_shared<const Trajectory>(engine.sample(src, capture)),
                    engine.sample(tgt, CaptureSpec::nothing()).final_latent});
  }

  std::vector<SweepRow> rows;
  for (const auto& point : grid) {
    TransportPlan plan = base;
    plan.all_layers = false;
    plan.regime = point.regime;
    plan.image_k = point.image_k;
    plan.encoder_k = point.encoder_k;
    const ResolvedPlan rp = resolve_plan(plan, config);

    SweepRow row;
    row.regime = std::string(to_string(point.regime));
    row.image_k = point.image_k;
    row.encoder_k = point.encoder_k;
    row.mask_criterion = plan.mask_criterion;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Trajectory merged =
          run_merged(engine, runs[i].source, pairs[i].second, rp, CaptureSpec::nothing());
      row.delta_source += rmse(merged.final_latent, runs[i].source->final_latent);
      row.delta_target += rmse(merged.final_latent, runs[i].target_final);
    }
    if (!pairs.empty()) {
      row.delta_source /= static_cast<double>(pairs.size());
      row.delta_target /= static_cast<double>(pairs.size());
    }
    row.delta_diff = row.delta_source - row.delta_target;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "regime,image_k,encoder_k,mask_criterion,delta_S,delta_T,delta_diff\n";
  for (const auto& r : rows) {
    os << r.regime << ',' << r.image_k << ',' << r.encoder_k << ',' << to_string(r.mask_criterion)
       << ',' << r.delta_source << ',' << r.delta_target << ',' << r.delta_diff << '\n';
  }
  return os.str();
}

}  // namespace massact
