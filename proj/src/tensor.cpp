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

#include "massact/tensor.hpp"

#include <cmath>
#include <cstring>

#include "massact/error.hpp"

namespace massact {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kIntervention: return "intervention";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kStream: return "stream";
    case ErrorKind::kEmptyInput: return "empty_input";
    case ErrorKind::kDegenerateClustering: return "degenerate_clustering";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kCrc: return "crc";
    case ErrorKind::kVersion: return "version";
  }
  return "unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    fail(ErrorKind::kShape, "matrix data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows_) + "x" +
                                std::to_string(cols_));
  }
}

bool Matrix::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Matrix::bit_equal(const Matrix& other) const noexcept {
  if (!same_shape(other)) return false;
  if (data_.empty()) return true;
  return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

Matrix linear(const Matrix& x, const Matrix& w, std::span<const float> bias) {
  if (x.cols() != w.rows()) {
    fail(ErrorKind::kShape, "linear: input has " + std::to_string(x.cols()) +
                                " columns but weight has " + std::to_string(w.rows()) + " rows");
  }
  if (!bias.empty() && bias.size() != w.cols()) {
    fail(ErrorKind::kShape, "linear: bias length mismatch");
  }
  const std::size_t n = x.rows();
  const std::size_t in = w.rows();
  const std::size_t out = w.cols();
  Matrix y(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    if (!bias.empty()) {
      for (std::size_t o = 0; o < out; ++o) yr[o] = bias[o];
    }
    for (std::size_t i = 0; i < in; ++i) {
      const float xi = xr[i];
      if (xi == 0.0f) continue;
      auto wr = w.row(i);
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
    }
  }
  return y;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin > end || end > m.rows()) fail(ErrorKind::kShape, "slice_rows: bad range");
  Matrix out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r) {
    auto src = m.row(r);
    std::copy(src.begin(), src.end(), out.row(r - begin).begin());
  }
  return out;
}

Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols() && !top.empty() && !bottom.empty()) {
    fail(ErrorKind::kShape, "concat_rows: column mismatch");
  }
  const std::size_t cols = top.empty() ? bottom.cols() : top.cols();
  Matrix out(top.rows() + bottom.rows(), cols);
  for (std::size_t r = 0; r < top.rows(); ++r) {
    auto src = top.row(r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  for (std::size_t r = 0; r < bottom.rows(); ++r) {
    auto src = bottom.row(r);
    std::copy(src.begin(), src.end(), out.row(top.rows() + r).begin());
  }
  return out;
}

double rmse(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) fail(ErrorKind::kShape, "rmse: shape mismatch");
  if (a.empty()) return 0.0;
  double acc = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(av.size()));
}

}  // namespace massact
