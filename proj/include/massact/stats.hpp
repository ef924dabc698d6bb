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
#include <optional>
#include <string_view>
#include <vector>

#include "massact/engine.hpp"

namespace massact {

// Per-sample channel statistics of one stream at one layer.
struct ChannelScore {
  int layer = 0;
  Stream stream = Stream::kImage;
  std::vector<double> mu;     // mean over tokens, per channel
  std::vector<double> score;  // |mu|
};

enum class ChannelCriterion { kTop, kBottom, kRandom };

std::string_view to_string(ChannelCriterion criterion);
ChannelCriterion parse_channel_criterion(std::string_view name);

struct ChannelSelection {
  std::vector<int> indices;  // ascending, distinct
  int k = 0;
  ChannelCriterion criterion = ChannelCriterion::kTop;
  std::optional<ChannelScore> source;  // absent for random
};

enum class Polarity { kKeepSelected, kZeroSelected };

struct ChannelIndicator {
  std::vector<std::uint8_t> bits;
  Polarity polarity = Polarity::kZeroSelected;
};

// Column means over the token axis of a single sample. Throws an empty-input
// error for zero tokens.
ChannelScore channel_means(const ActivationTensor& x);
ChannelScore channel_means(const Matrix& x, int layer = 0, Stream stream = Stream::kImage);

// Top/bottom-k by |mu| with ties going to the lower channel index, or k
// channels drawn without replacement. `seed` must be given iff the criterion
// is random. Indices come back sorted ascending.
ChannelSelection select_channels(const ChannelScore& score, int k, ChannelCriterion criterion,
                                 std::optional<std::uint64_t> seed = std::nullopt);

ChannelIndicator make_indicator(const ChannelSelection& selection, int width, Polarity polarity);

}  // namespace massact
