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
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "massact/engine.hpp"
#include "massact/spatial.hpp"
#include "massact/stats.hpp"

namespace massact {

enum class Regime { kLower, kMiddle, kUpper };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view name);

// Inclusive block index range.
struct LayerRange {
  int first = 0;
  int last = -1;

  int size() const noexcept { return last - first + 1; }
  bool contains(int layer) const noexcept { return layer >= first && layer <= last; }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

struct LayerRegimes {
  LayerRange lower, middle, upper;

  const LayerRange& get(Regime regime) const;
};

// Contiguous near-equal thirds of [0, depth); the remainder goes to the later
// groups (depth 25 -> 8, 8, 9).
LayerRegimes layer_regimes(int depth);

enum class MaskFrom { kPerPoint, kLastStep };

std::string_view to_string(MaskFrom from);
MaskFrom parse_mask_from(std::string_view name);

inline constexpr int kDefaultImageK = 1024;
inline constexpr int kCompactImageK = 512;

struct TransportPlan {
  // Layer selection: a regime, every layer, or an explicit list.
  std::optional<Regime> regime = Regime::kMiddle;
  bool all_layers = false;
  std::vector<int> layers;

  int image_k = kDefaultImageK;
  int encoder_k = 0;
  ChannelCriterion channel_criterion = ChannelCriterion::kTop;
  MaskCriterion mask_criterion = MaskCriterion::kMax;
  bool use_spatial_mask = true;
  int mask_k = kDefaultMaskChannels;
  MaskFrom mask_from = MaskFrom::kPerPoint;
  std::uint64_t seed = 0;  // random channel / mask criteria only

  std::string layers_label() const;
};

// A plan bound to one engine configuration.
struct ResolvedPlan {
  TransportPlan plan;
  std::set<int> layers;
  int image_k = 0;
  int encoder_k = 0;
  int mask_k = 0;
  std::vector<std::string> warnings;
};

// Validates the plan against `config`. image_k and mask_k above the width are
// clamped with a warning; everything else out of range is a range error.
ResolvedPlan resolve_plan(const TransportPlan& plan, const EngineConfig& config);

struct JointMask {
  std::vector<std::uint8_t> p;  // token mask, length N_I
  ChannelIndicator m;           // keep_selected channel mask, length D

  std::uint8_t at(std::size_t n, std::size_t d) const { return p[n] & m.bits[d]; }
  Matrix materialize() const;
};

// target ⊙ (1 - m) + source ⊙ m, realized as an entry-wise pick.
Matrix replace_channels(const Matrix& target, const Matrix& source, const ChannelIndicator& m);
ActivationTensor replace_channels(const ActivationTensor& target, const ActivationTensor& source,
                                  const ChannelIndicator& m);

// target ⊙ (1 - p mᵀ) + source ⊙ p mᵀ, without materializing the mask.
Matrix replace_spatial(const Matrix& target, const Matrix& source, const JointMask& mask);
ActivationTensor replace_spatial(const ActivationTensor& target, const ActivationTensor& source,
                                 const JointMask& mask);

Matrix latent_lerp(const Matrix& a, const Matrix& b, double alpha = 0.5);

// Hook that injects the frozen source trajectory's activations at the plan's
// layers. The source must outlive the hook and must hold captures for both
// streams at every plan layer and timestep.
HookFn transport_hook(std::shared_ptr<const Trajectory> source, const ResolvedPlan& plan);

// Capture points the source run must record for `plan`.
CaptureSpec transport_capture(const ResolvedPlan& plan, const EngineConfig& config);

struct TransportResult {
  Trajectory merged;
  Trajectory source;
  Trajectory target;
  std::vector<std::string> warnings;
};

TransportResult run_transport(const Engine& engine, const std::vector<int>& source_prompt,
                              const std::vector<int>& target_prompt, const TransportPlan& plan);

// Merged run only, against an already frozen source.
Trajectory run_merged(const Engine& engine, std::shared_ptr<const Trajectory> source,
                      const std::vector<int>& target_prompt, const ResolvedPlan& plan,
                      const CaptureSpec& capture);

struct SweepPoint {
  Regime regime = Regime::kMiddle;
  int image_k = 0;
  int encoder_k = 0;
};

struct SweepRow {
  std::string regime;
  int image_k = 0;
  int encoder_k = 0;
  MaskCriterion mask_criterion = MaskCriterion::kMax;
  double delta_source = 0.0;  // rmse(merged, source final), mean over pairs
  double delta_target = 0.0;  // rmse(merged, target final), mean over pairs
  double delta_diff = 0.0;    // delta_source - delta_target
};

using PromptPair = std::pair<std::vector<int>, std::vector<int>>;  // (source, target)

// Grid points override regime, image_k and encoder_k of `base`.
std::vector<SweepRow> sweep_transport(const Engine& engine, const std::vector<PromptPair>& pairs,
                                      const std::vector<SweepPoint>& grid,
                                      const TransportPlan& base = {});

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace massact
