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

#include "massact/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "massact/error.hpp"
#include "massact/rng.hpp"

namespace massact {
namespace {

double squared_distance(std::span<const float> x, const std::vector<double>& c) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - c[i];
    acc += d * d;
  }
  return acc;
}

std::vector<double> row_as_double(const Matrix& m, std::size_t r) {
  auto row = m.row(r);
  return {row.begin(), row.end()};
}

bool rows_equal(const Matrix& m, std::size_t a, std::size_t b) {
  auto ra = m.row(a);
  auto rb = m.row(b);
  return std::equal(ra.begin(), ra.end(), rb.begin());
}

std::vector<int> assign_nearest(const Matrix& x, const std::vector<std::vector<double>>& centroids) {
  std::vector<int> labels(x.rows());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const double d0 = squared_distance(x.row(n), centroids[0]);
    const double d1 = squared_distance(x.row(n), centroids[1]);
    labels[n] = d1 < d0 ? 1 : 0;
  }
  return labels;
}

// Moves the point farthest from its own centroid into an empty cluster.
void repair_empty(const Matrix& x, const std::vector<std::vector<double>>& centroids,
                  std::vector<int>& labels) {
  std::size_t counts[2] = {0, 0};
  for (int l : labels) ++counts[l];
  for (int empty = 0; empty < 2; ++empty) {
    if (counts[empty] != 0) continue;
    std::size_t best = 0;
    double best_dist = -1.0;
    for (std::size_t n = 0; n < x.rows(); ++n) {
      const double d = squared_distance(x.row(n), centroids[static_cast<std::size_t>(labels[n])]);
      if (d > best_dist) {
        best_dist = d;
        best = n;
      }
    }
    labels[best] = empty;
  }
}

std::vector<std::vector<double>> cluster_means(const Matrix& x, const std::vector<int>& labels) {
  std::vector<std::vector<double>> means(2, std::vector<double>(x.cols(), 0.0));
  std::size_t counts[2] = {0, 0};
  for (std::size_t n = 0; n < x.rows(); ++n) {
    auto& m = means[static_cast<std::size_t>(labels[n])];
    auto row = x.row(n);
    for (std::size_t c = 0; c < row.size(); ++c) m[c] += row[c];
    ++counts[labels[n]];
  }
  for (int j = 0; j < 2; ++j) {
    if (counts[j] == 0) continue;
    for (double& v : means[static_cast<std::size_t>(j)]) v /= static_cast<double>(counts[j]);
  }
  return means;
}

double objective_of(const Matrix& x, const std::vector<int>& labels,
                    const std::vector<std::vector<double>>& centroids) {
  double acc = 0.0;
  for (std::size_t n = 0; n < x.rows(); ++n) {
    acc += squared_distance(x.row(n), centroids[static_cast<std::size_t>(labels[n])]);
  }
  return acc;
}

}  // namespace

std::string_view to_string(MaskCriterion criterion) {
  switch (criterion) {
    case MaskCriterion::kMax: return "max";
    case MaskCriterion::kMin: return "min";
    case MaskCriterion::kRandom: return "random";
  }
  return "max";
}

MaskCriterion parse_mask_criterion(std::string_view name) {
  if (name == "max") return MaskCriterion::kMax;
  if (name == "min") return MaskCriterion::kMin;
  if (name == "random") return MaskCriterion::kRandom;
  fail(ErrorKind::kConfig, "unknown mask criterion '" + std::string(name) + "'");
}

RestrictedActivations restrict(const ActivationTensor& image, const ChannelSelection& selection,
                               GridShape grid) {
  if (image.stream != Stream::kImage) {
    fail(ErrorKind::kStream, "restrict: spatial pipeline needs the image stream, got " +
                                 std::string(to_string(image.stream)));
  }
  if (static_cast<std::size_t>(grid.tokens()) != image.data.rows()) {
    fail(ErrorKind::kShape, "restrict: grid does not match the image token count");
  }
  const auto k = selection.indices.size();
  RestrictedActivations out{Matrix(image.data.rows(), k), selection, grid};
  for (std::size_t j = 0; j < k; ++j) {
    const int c = selection.indices[j];
    if (c < 0 || static_cast<std::size_t>(c) >= image.data.cols()) {
      fail(ErrorKind::kRange, "restrict: channel " + std::to_string(c) + " out of range");
    }
  }
  for (std::size_t n = 0; n < image.data.rows(); ++n) {
    for (std::size_t j = 0; j < k; ++j) {
      out.data(n, j) = image.data(n, static_cast<std::size_t>(selection.indices[j]));
    }
  }
  return out;
}

NormalizedActivations minmax_normalize(const Matrix& data) {
  NormalizedActivations out{Matrix(data.rows(), data.cols()), {}};
  for (std::size_t c = 0; c < data.cols(); ++c) {
    if (data.rows() == 0) break;
    float lo = data(0, c);
    float hi = data(0, c);
    for (std::size_t n = 1; n < data.rows(); ++n) {
      lo = std::min(lo, data(n, c));
      hi = std::max(hi, data(n, c));
    }
    if (hi == lo) {
      out.degenerate_columns.push_back(static_cast<int>(c));
      continue;  // column stays zero
    }
    const double range = static_cast<double>(hi) - static_cast<double>(lo);
    for (std::size_t n = 0; n < data.rows(); ++n) {
      out.data(n, c) = static_cast<float>((static_cast<double>(data(n, c)) - lo) / range);
    }
  }
  return out;
}

TokenScores aggregate(const NormalizedActivations& norm) {
  TokenScores out;
  out.s.assign(norm.data.rows(), 0.0);
  for (std::size_t n = 0; n < norm.data.rows(); ++n) {
    for (float v : norm.data.row(n)) out.s[n] += v;
  }
  return out;
}

double two_partition_objective(const Matrix& features, const std::vector<int>& labels) {
  return objective_of(features, labels, cluster_means(features, labels));
}

Clustering kmeans2(const Matrix& x, int max_iters) {
  if (x.rows() < 2) fail(ErrorKind::kDegenerateClustering, "kmeans2: need at least two tokens");
  if (max_iters < 1) fail(ErrorKind::kRange, "kmeans2: max_iters must be >= 1");
  bool distinct = false;
  for (std::size_t n = 1; n < x.rows() && !distinct; ++n) distinct = !rows_equal(x, 0, n);
  if (!distinct) fail(ErrorKind::kDegenerateClustering, "kmeans2: all rows are identical");

  const TokenScores s = aggregate(minmax_normalize(x));
  std::size_t lo = 0, hi = 0;
  for (std::size_t n = 1; n < s.s.size(); ++n) {
    if (s.s[n] < s.s[lo]) lo = n;
    if (s.s[n] > s.s[hi]) hi = n;
  }
  if (rows_equal(x, lo, hi)) {
    // Flat scores: pair the low seed with the row farthest from it.
    const auto seed_row = row_as_double(x, lo);
    double best = -1.0;
    for (std::size_t n = 0; n < x.rows(); ++n) {
      const double d = squared_distance(x.row(n), seed_row);
      if (d > best) {
        best = d;
        hi = n;
      }
    }
  }

  Clustering out;
  out.centroids = {row_as_double(x, lo), row_as_double(x, hi)};
  std::vector<int> labels = assign_nearest(x, out.centroids);
  for (;;) {
    repair_empty(x, out.centroids, labels);
    out.centroids = cluster_means(x, labels);
    out.objective = objective_of(x, labels, out.centroids);
    out.objective_history.push_back(out.objective);
    ++out.iterations;
    if (out.iterations >= max_iters) break;
    std::vector<int> next = assign_nearest(x, out.centroids);
    if (next == labels) break;
    labels = std::move(next);
  }
  out.labels = std::move(labels);
  return out;
}

SpatialMask assign_foreground(const Clustering& clustering, const TokenScores& scores,
                              MaskCriterion criterion, std::optional<std::uint64_t> seed) {
  if (clustering.labels.size() != scores.s.size()) {
    fail(ErrorKind::kShape, "assign_foreground: labels and scores differ in length");
  }
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (std::size_t n = 0; n < scores.s.size(); ++n) {
    const int l = clustering.labels[n];
    sum[l] += scores.s[n];
    ++count[l];
  }
  if (count[0] == 0 || count[1] == 0) {
    fail(ErrorKind::kDegenerateClustering, "assign_foreground: empty cluster");
  }
  const double mean[2] = {sum[0] / static_cast<double>(count[0]),
                          sum[1] / static_cast<double>(count[1])};
  int fg = 0;
  switch (criterion) {
    case MaskCriterion::kMax: fg = mean[1] > mean[0] ? 1 : 0; break;
    case MaskCriterion::kMin: fg = mean[1] < mean[0] ? 1 : 0; break;
    case MaskCriterion::kRandom: fg = Rng(seed.value_or(0)).coin() ? 1 : 0; break;
  }
  SpatialMask mask;
  mask.criterion = criterion;
  mask.foreground_score = mean[fg];
  mask.background_score = mean[1 - fg];
  mask.p.resize(clustering.labels.size());
  for (std::size_t n = 0; n < mask.p.size(); ++n) mask.p[n] = clustering.labels[n] == fg ? 1 : 0;
  return mask;
}

MaskExtraction extract_mask_details(const ActivationTensor& image, GridShape grid,
                                    const MaskOptions& options) {
  const ChannelScore score = channel_means(image);
  const bool random = options.channel_criterion == ChannelCriterion::kRandom;
  MaskExtraction out;
  out.selection = select_channels(score, options.k, options.channel_criterion,
                                  random ? std::optional(options.channel_seed) : std::nullopt);
  const RestrictedActivations restricted = restrict(image, out.selection, grid);
  out.normalized = minmax_normalize(restricted);
  out.clustering = kmeans2(options.cluster_on_normalized ? out.normalized.data : restricted.data,
                           options.max_iters);
  out.scores = aggregate(out.normalized);
  out.mask = assign_foreground(out.clustering, out.scores, options.mask_criterion,
                               options.mask_criterion == MaskCriterion::kRandom
                                   ? std::optional(options.mask_seed)
                                   : std::nullopt);
  return out;
}

SpatialMask extract_mask(const ActivationTensor& image, GridShape grid, const MaskOptions& options) {
  return extract_mask_details(image, grid, options).mask;
}

std::vector<std::uint8_t> boundary_band(const std::vector<std::uint8_t>& truth, GridShape grid,
                                        int radius) {
  const int h = grid.height;
  const int w = grid.width;
  auto at = [&](int r, int c) { return truth[static_cast<std::size_t>(r * w + c)]; };
  std::vector<std::uint8_t> boundary(truth.size(), 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int dr = -1; dr <= 1 && !boundary[static_cast<std::size_t>(r * w + c)]; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          if (at(rr, cc) != at(r, c)) {
            boundary[static_cast<std::size_t>(r * w + c)] = 1;
            break;
          }
        }
      }
    }
  }
  std::vector<std::uint8_t> band(truth.size(), 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!boundary[static_cast<std::size_t>(r * w + c)]) continue;
      for (int rr = std::max(0, r - radius); rr <= std::min(h - 1, r + radius); ++rr) {
        for (int cc = std::max(0, c - radius); cc <= std::min(w - 1, c + radius); ++cc) {
          band[static_cast<std::size_t>(rr * w + cc)] = 1;
        }
      }
    }
  }
  return band;
}

SegMetrics seg_metrics(const std::vector<std::uint8_t>& predicted,
                       const std::vector<std::uint8_t>& truth, GridShape grid, int band_radius) {
  if (predicted.size() != truth.size() ||
      truth.size() != static_cast<std::size_t>(grid.tokens())) {
    fail(ErrorKind::kShape, "seg_metrics: mask lengths differ or do not match the grid");
  }
  for (auto v : truth) {
    if (v > 1) fail(ErrorKind::kRange, "seg_metrics: ground truth must be binary");
  }
  if (band_radius < 0) fail(ErrorKind::kRange, "seg_metrics: band radius must be >= 0");

  // 0/0 means the class is absent from both masks, which counts as a match.
  auto iou = [&](std::uint8_t cls, const std::vector<std::uint8_t>* within) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t n = 0; n < truth.size(); ++n) {
      if (within && !(*within)[n]) continue;
      const bool a = (predicted[n] != 0) == (cls != 0);
      const bool b = (truth[n] != 0) == (cls != 0);
      inter += a && b;
      uni += a || b;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  };

  SegMetrics m;
  m.iou = iou(1, nullptr);
  m.miou = 0.5 * (m.iou + iou(0, nullptr));
  std::size_t diff = 0;
  for (std::size_t n = 0; n < truth.size(); ++n) diff += (predicted[n] != 0) != (truth[n] != 0);
  m.mae = truth.empty() ? 0.0 : static_cast<double>(diff) / static_cast<double>(truth.size());
  const auto band = boundary_band(truth, grid, band_radius);
  m.biou = iou(1, &band);
  return m;
}

}  // namespace massact
