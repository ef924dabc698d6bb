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
#include "massact/stats.hpp"

namespace massact {

struct GridShape {
  int height = 0;
  int width = 0;

  int tokens() const noexcept { return height * width; }
  static GridShape of(const EngineConfig& config) { return {config.latent_h, config.latent_w}; }
};

struct RestrictedActivations {
  Matrix data;  // N_I x k, column j is channels.indices[j]
  ChannelSelection channels;
  GridShape grid;
};

struct NormalizedActivations {
  Matrix data;  // every non-degenerate column spans exactly [0, 1]
  std::vector<int> degenerate_columns;
};

struct TokenScores {
  std::vector<double> s;
};

struct Clustering {
  std::vector<int> labels;  // 0 or 1 per token
  std::vector<std::vector<double>> centroids;  // 2 x k
  int iterations = 0;
  double objective = 0.0;  // within-cluster sum of squares
  std::vector<double> objective_history;  // one entry per iteration
};

enum class MaskCriterion { kMax, kMin, kRandom };

std::string_view to_string(MaskCriterion criterion);
MaskCriterion parse_mask_criterion(std::string_view name);

struct SpatialMask {
  std::vector<std::uint8_t> p;
  double foreground_score = 0.0;
  double background_score = 0.0;
  MaskCriterion criterion = MaskCriterion::kMax;
};

inline constexpr int kDefaultMaskChannels = 12;
inline constexpr int kDefaultKmeansIters = 100;
inline constexpr int kDefaultBandRadius = 2;

RestrictedActivations restrict(const ActivationTensor& image, const ChannelSelection& selection,
                               GridShape grid);

NormalizedActivations minmax_normalize(const Matrix& data);
inline NormalizedActivations minmax_normalize(const RestrictedActivations& r) {
  return minmax_normalize(r.data);
}

TokenScores aggregate(const NormalizedActivations& norm);

// Two-means (Lloyd) on the rows of `features`. Centroids start at the rows
// with the lowest and highest aggregate normalized score. Throws a
// degenerate-clustering error when fewer than two distinct rows exist.
Clustering kmeans2(const Matrix& features, int max_iters = kDefaultKmeansIters);
inline Clustering kmeans2(const RestrictedActivations& r, int max_iters = kDefaultKmeansIters) {
  return kmeans2(r.data, max_iters);
}

// Within-cluster sum of squares of an arbitrary two-coloring.
double two_partition_objective(const Matrix& features, const std::vector<int>& labels);

SpatialMask assign_foreground(const Clustering& clustering, const TokenScores& scores,
                              MaskCriterion criterion,
                              std::optional<std::uint64_t> seed = std::nullopt);

struct MaskOptions {
  int k = kDefaultMaskChannels;
  ChannelCriterion channel_criterion = ChannelCriterion::kTop;
  MaskCriterion mask_criterion = MaskCriterion::kMax;
  std::uint64_t channel_seed = 0;  // used by the random channel criterion only
  std::uint64_t mask_seed = 0;     // used by the random mask criterion only
  int max_iters = kDefaultKmeansIters;
  bool cluster_on_normalized = false;
};

struct MaskExtraction {
  SpatialMask mask;
  ChannelSelection selection;
  NormalizedActivations normalized;
  TokenScores scores;
  Clustering clustering;
};

MaskExtraction extract_mask_details(const ActivationTensor& image, GridShape grid,
                                    const MaskOptions& options = {});
SpatialMask extract_mask(const ActivationTensor& image, GridShape grid,
                         const MaskOptions& options = {});

struct SegMetrics {
  double iou = 0.0;
  double miou = 0.0;
  double mae = 0.0;
  double biou = 0.0;
};

SegMetrics seg_metrics(const std::vector<std::uint8_t>& predicted,
                       const std::vector<std::uint8_t>& truth, GridShape grid,
                       int band_radius = kDefaultBandRadius);
inline SegMetrics seg_metrics(const SpatialMask& mask, const std::vector<std::uint8_t>& truth,
                              GridShape grid, int band_radius = kDefaultBandRadius) {
  return seg_metrics(mask.p, truth, grid, band_radius);
}

// Tokens within Chebyshev distance `radius` of a boundary token of `truth`.
std::vector<std::uint8_t> boundary_band(const std::vector<std::uint8_t>& truth, GridShape grid,
                                        int radius);

}  // namespace massact
