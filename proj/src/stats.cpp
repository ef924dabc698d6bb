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

#include "massact/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "massact/error.hpp"
#include "massact/rng.hpp"

namespace massact {

std::string_view to_string(ChannelCriterion criterion) {
  switch (criterion) {
    case ChannelCriterion::kTop: return "top";
    case ChannelCriterion::kBottom: return "bottom";
    case ChannelCriterion::kRandom: return "random";
  }
  return "top";
}

ChannelCriterion parse_channel_criterion(std::string_view name) {
  if (name == "top") return ChannelCriterion::kTop;
  if (name == "bottom") return ChannelCriterion::kBottom;
  if (name == "random") return ChannelCriterion::kRandom;
  fail(ErrorKind::kConfig, "unknown channel criterion '" + std::string(name) + "'");
}

ChannelScore channel_means(const Matrix& x, int layer, Stream stream) {
  if (x.rows() == 0) fail(ErrorKind::kEmptyInput, "channel_means: activation has zero tokens");
  ChannelScore out;
  out.layer = layer;
  out.stream = stream;
  out.mu.assign(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out.mu[c] += row[c];
  }
  const auto n = static_cast<double>(x.rows());
  out.score.resize(out.mu.size());
  for (std::size_t c = 0; c < out.mu.size(); ++c) {
    out.mu[c] /= n;
    out.score[c] = std::abs(out.mu[c]);
  }
  return out;
}

ChannelScore channel_means(const ActivationTensor& x) {
  return channel_means(x.data, x.layer, x.stream);
}

ChannelSelection select_channels(const ChannelScore& score, int k, ChannelCriterion criterion,
                                 std::optional<std::uint64_t> seed) {
  const int width = static_cast<int>(score.score.size());
  if (k < 0 || k > width) {
    fail(ErrorKind::kRange,
         "k=" + std::to_string(k) + " outside [0, " + std::to_string(width) + "]");
  }
  const bool random = criterion == ChannelCriterion::kRandom;
  if (random != seed.has_value()) {
    fail(ErrorKind::kConfig, random ? "random channel selection requires a seed"
                                    : "seed is only accepted for random channel selection");
  }

  ChannelSelection sel;
  sel.k = k;
  sel.criterion = criterion;
  std::vector<int> order(static_cast<std::size_t>(width));
  std::iota(order.begin(), order.end(), 0);

  if (random) {
    // Partial Fisher-Yates.
    Rng rng(*seed);
    for (int i = 0; i < k; ++i) {
      const auto j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(width - i)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
  } else {
    const auto& s = score.score;
    const bool top = criterion == ChannelCriterion::kTop;
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      const double sa = s[static_cast<std::size_t>(a)];
      const double sb = s[static_cast<std::size_t>(b)];
      if (sa != sb) return top ? sa > sb : sa < sb;
      return a < b;
    });
    sel.source = score;
  }
  sel.indices.assign(order.begin(), order.begin() + k);
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

ChannelIndicator make_indicator(const ChannelSelection& selection, int width, Polarity polarity) {
  const bool keep = polarity == Polarity::kKeepSelected;
  ChannelIndicator ind;
  ind.polarity = polarity;
  ind.bits.assign(static_cast<std::size_t>(width), keep ? 0 : 1);
  for (int c : selection.indices) {
    if (c < 0 || c >= width) {
      fail(ErrorKind::kRange, "channel " + std::to_string(c) + " outside [0, " +
                                  std::to_string(width) + ")");
    }
    ind.bits[static_cast<std::size_t>(c)] = keep ? 1 : 0;
  }
  return ind;
}

}  // namespace massact
