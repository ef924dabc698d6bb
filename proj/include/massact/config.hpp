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
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "massact/disrupt.hpp"
#include "massact/engine.hpp"
#include "massact/spatial.hpp"
#include "massact/stats.hpp"
#include "massact/transport.hpp"

namespace massact::config {

using Json = nlohmann::ordered_json;

// JSON mirrors of the library types.
Json to_json(const EngineConfig& config);
Json to_json(const ChannelScore& score);
Json to_json(const ChannelSelection& selection, int layer, Stream stream);
Json to_json(const TransportPlan& plan);
Json to_json(const DisruptionReport& report);
Json to_json(const SweepRow& row);

EngineConfig engine_from_json(const Json& j, const std::string& where = "engine");
TransportPlan plan_from_json(const Json& j, const std::string& where = "transport");

struct MetricRow {
  int layer = 0;
  int k = 0;
  ChannelCriterion channel_criterion = ChannelCriterion::kTop;
  MaskCriterion mask_criterion = MaskCriterion::kMax;
  SegMetrics metrics;
};
Json to_json(const MetricRow& row);

struct PlantSection {
  std::vector<int> foreground;
  std::vector<int> channels;
  double amplitude = 10.0;
  double noise = 0.1;
  std::uint64_t seed = 0;
  bool synthetic = true;  // false: plant into a regular engine's positional embedding

  PlantSpec spec(const EngineConfig& engine) const;
};

struct DisruptSection {
  DisruptionSpec spec;
  std::vector<int> ks;  // sweep values; defaults to {spec.k}
  std::vector<ChannelCriterion> criteria;  // defaults to {spec.criterion}
};

struct SegmentSection {
  std::optional<std::filesystem::path> dump;  // segment a saved trajectory
  std::optional<std::filesystem::path> ground_truth;  // P2 mask
  int k = kDefaultMaskChannels;
  std::vector<ChannelCriterion> channel_criteria{ChannelCriterion::kTop, ChannelCriterion::kRandom,
                                                 ChannelCriterion::kBottom};
  MaskCriterion mask_criterion = MaskCriterion::kMax;
  std::optional<std::set<int>> layers;  // nullopt = all
  std::optional<int> timestep;          // nullopt = last denoising step
  int band_radius = kDefaultBandRadius;
  std::uint64_t seed = 0;
  bool cluster_on_normalized = false;
};

struct TransportSection {
  TransportPlan plan;
  std::vector<int> source_prompt;
  std::vector<int> target_prompt;
  std::vector<SweepPoint> sweep;  // empty = single row for the plan itself
};

struct RunConfig {
  EngineConfig engine;
  std::vector<int> prompt;
  std::optional<PlantSection> plant;
  bool capture_all = true;
  std::set<PointKey> capture;
  DisruptSection disrupt;
  SegmentSection segment;
  TransportSection transport;
};

std::vector<std::string> preset_names();
Json preset(std::string_view name);

// Parses a config document. The preset (from the CLI, else the document's
// "preset" key) is applied first and the document overlays it; unknown keys
// are rejected with a config error naming the key. Relative paths resolve
// against `base_dir`.
RunConfig parse_run_config(const Json& document, std::optional<std::string> preset_name,
                           std::optional<std::uint64_t> seed_override,
                           const std::filesystem::path& base_dir);

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::string> preset_name,
                          std::optional<std::uint64_t> seed_override);

}  // namespace massact::config
