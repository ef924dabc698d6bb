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
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "massact/engine.hpp"
#include "massact/stats.hpp"

namespace massact {

enum class StreamTarget { kImage, kEncoder, kBoth };

std::string_view to_string(StreamTarget target);
StreamTarget parse_stream_target(std::string_view name);

struct DisruptionSpec {
  StreamTarget target = StreamTarget::kBoth;
  ChannelCriterion criterion = ChannelCriterion::kTop;
  int k = 0;
  std::optional<std::set<int>> layers;     // nullopt = all layers
  std::optional<std::set<int>> timesteps;  // nullopt = all timesteps
  std::uint64_t seed = 0;                  // random criterion only

  bool matches(const PointKey& key) const;
  void validate(const EngineConfig& config) const;
};

// Recomputes channel statistics from the live activation at each point.
using ScoreProvider = std::function<ChannelScore(const ActivationTensor&)>;

// Zeroes the selected channels at matching points; identity elsewhere.
HookFn disrupt_hook(const DisruptionSpec& spec, ScoreProvider provider = {});

struct DisruptionReport {
  DisruptionSpec spec;
  Matrix baseline_final;
  Matrix disrupted_final;
  double latent_rmse = 0.0;
  // Proxy metrics as a percentage of the baseline ("energy_ratio", "rms_ratio")
  // plus the absolute "channel_energy_change".
  std::map<std::string, double> metrics;
};

DisruptionReport run_disruption(const Engine& engine, const std::vector<int>& prompt,
                                const DisruptionSpec& spec);
// Same, against a precomputed baseline that is only read.
DisruptionReport run_disruption(const Engine& engine, const Trajectory& baseline,
                                const DisruptionSpec& spec);

std::string format_index_set(const std::optional<std::set<int>>& set);

// One CSV row per report: k, criterion, stream, layers, timesteps,
// latent_rmse, energy_ratio.
std::string disruption_csv(const std::vector<DisruptionReport>& reports);

}  // namespace massact
