// Copyright 2026 The GERA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Gaussian-kernel maximum mean discrepancy between sample sets. Samples are
// matrix rows.

#include "gera/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace gera {

enum class MmdEstimator { biased, unbiased };

struct MmdConfig {
  std::optional<double> sigma;  // nullopt = median heuristic
  MmdEstimator estimator = MmdEstimator::biased;
};

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar gaussian_kernel(const Eigen::MatrixBase<DerivedX>& x,
                                          const Eigen::MatrixBase<DerivedY>& y,
                                          typename DerivedX::Scalar sigma) {
  if (x.size() != y.size()) throw ShapeError("gaussian_kernel: dimension mismatch");
  if (!(sigma > 0)) throw Error("gaussian_kernel: sigma must be positive");
  const auto d2 = (x.derived().reshaped() - y.derived().reshaped()).squaredNorm();
  return std::exp(-d2 / (2 * sigma * sigma));
}

/// Median of all pairwise distances of the pooled rows, ignoring zero
/// distances; 1.0 when nothing is left.
template <typename DerivedX, typename DerivedY>
double median_heuristic(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  const Eigen::Index m = x.rows(), n = y.rows();
  if (m + n < 2) throw Error("median_heuristic: need at least two samples");
  if (m > 0 && n > 0 && x.cols() != y.cols()) throw ShapeError("median_heuristic: dimension mismatch");
  Eigen::MatrixXd pooled(m + n, m > 0 ? x.cols() : y.cols());
  if (m > 0) pooled.topRows(m) = x.template cast<double>();
  if (n > 0) pooled.bottomRows(n) = y.template cast<double>();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>((m + n) * (m + n - 1) / 2));
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j) {
      const double d = (pooled.row(i) - pooled.row(j)).norm();
      if (d > 0) dists.push_back(d);
    }
  if (dists.empty()) return 1.0;
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double med = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med > 0 ? med : 1.0;
}

namespace detail {

// Fixed-order sum of kernel values over a row block; skip_diagonal drops i == j.
template <typename DerivedA, typename DerivedB>
double kernel_sum(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                  double sigma, bool skip_diagonal) {
  double sum = 0.0, comp = 0.0;  // Kahan
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      const double v = gaussian_kernel(a.row(i), b.row(j), sigma) - comp;
      const double t = sum + v;
      comp = (t - sum) - v;
      sum = t;
    }
  return sum;
}

}  // namespace detail

/// MMD^2 estimate with an explicit bandwidth.
template <typename DerivedX, typename DerivedY>
double mmd2(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y, double sigma,
            MmdEstimator estimator = MmdEstimator::biased) {
  const auto m = static_cast<double>(x.rows()), n = static_cast<double>(y.rows());
  if (x.cols() != y.cols()) throw ShapeError("mmd2: dimension mismatch");
  const bool unbiased = estimator == MmdEstimator::unbiased;
  if (unbiased ? (m < 2 || n < 2) : (m < 1 || n < 1))
    throw Error(unbiased ? "mmd2: unbiased estimator needs at least 2 samples per set"
                         : "mmd2: empty sample set");
  const double xx = detail::kernel_sum(x, x, sigma, unbiased) / (unbiased ? m * (m - 1) : m * m);
  const double yy = detail::kernel_sum(y, y, sigma, unbiased) / (unbiased ? n * (n - 1) : n * n);
  const double xy = detail::kernel_sum(x, y, sigma, false) / (m * n);
  return xx + yy - 2.0 * xy;
}

template <typename DerivedX, typename DerivedY>
double mmd2(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
            const MmdConfig& config) {
  const double sigma = config.sigma ? *config.sigma : median_heuristic(x, y);
  if (!(sigma > 0)) throw Error("mmd2: sigma must be positive");
  return mmd2(x, y, sigma, config.estimator);
}

struct MmdSummary {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct MmdPair {
  int batch_a = 0;
  int batch_b = 0;
  double mmd2 = 0.0;
};

struct MmdReport {
  std::string encoding;  // "coordinate" or "geometric"
  double sigma = 0.0;
  std::vector<MmdPair> pairs;
  MmdSummary summary;
};

MmdSummary summarize(const std::vector<MmdPair>& pairs);

/// MMD^2 between every pair of consecutive `batch_size`-row batches of
/// `embeddings` (one row per cloud). A trailing partial batch is dropped.
MmdReport batch_pair_mmd(const Eigen::MatrixXd& embeddings, int batch_size, double sigma,
                         MmdEstimator estimator, std::string encoding);

}  // namespace gera
