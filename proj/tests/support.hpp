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

// Independent reference implementations and fixtures shared by the tests.
// Oracles here avoid the library's own helpers on purpose: plain loops, full
// sorts, no Eigen expressions beyond element access.

#include "gera/random.hpp"
#include "gera/types.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gera::test {

inline PointCloud random_cloud(Eigen::Index m, std::uint64_t seed, double extent = 50.0) {
  Rng rng(seed);
  PointCloud c(m, 3);
  for (Eigen::Index i = 0; i < m; ++i)
    for (int a = 0; a < 3; ++a) c(i, a) = rng.uniform(-extent, extent);
  return c;
}

struct Rigid {
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
};

inline Rigid random_rigid(Rng& rng, double max_translation = 100.0) {
  Eigen::Quaterniond q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  q.normalize();
  Eigen::Vector3d t;
  for (int a = 0; a < 3; ++a) t[a] = rng.uniform(-max_translation, max_translation);
  return {q.toRotationMatrix(), t};
}

inline PointCloud apply_rigid(const Rigid& r, const PointCloud& c) {
  PointCloud out(c.rows(), 3);
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    const Eigen::Vector3d p = r.rotation * c.row(i).transpose() + r.translation;
    out.row(i) = p.transpose();
  }
  return out;
}

inline double dist(const PointCloud& c, Eigen::Index i, Eigen::Index j) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) s += (c(i, a) - c(j, a)) * (c(i, a) - c(j, a));
  return std::sqrt(s);
}

/// k nearest neighbours by full sort of (distance, index) pairs, self excluded.
inline std::vector<std::vector<int>> oracle_knn(const PointCloud& c, int k) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(c.rows()));
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    std::vector<std::pair<double, int>> all;
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (int a = 0; a < 3; ++a) s += (c(i, a) - c(j, a)) * (c(i, a) - c(j, a));
      all.emplace_back(s, static_cast<int>(j));
    }
    std::sort(all.begin(), all.end());
    for (int r = 0; r < k; ++r) out[static_cast<std::size_t>(i)].push_back(all[static_cast<std::size_t>(r)].second);
  }
  return out;
}

/// Descriptor rows: vertices [i, knn...], all pairwise lengths in (a<b) order.
inline std::vector<std::vector<double>> oracle_descriptors(const PointCloud& c, int n_desc) {
  const auto nbrs = oracle_knn(c, n_desc - 1);
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    std::vector<int> v{static_cast<int>(i)};
    for (int j : nbrs[static_cast<std::size_t>(i)]) v.push_back(j);
    std::vector<double> row;
    for (int a = 0; a < n_desc; ++a)
      for (int b = a + 1; b < n_desc; ++b) row.push_back(dist(c, v[static_cast<std::size_t>(a)], v[static_cast<std::size_t>(b)]));
    rows.push_back(row);
  }
  return rows;
}

/// Brute-force Chamfer over rows: sum over each row of the minimum squared
/// distance to the other set, both directions.
inline double oracle_descriptor_chamfer(const std::vector<std::vector<double>>& a,
                                        const std::vector<std::vector<double>>& b) {
  auto sq = [](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) s += (x[t] - y[t]) * (x[t] - y[t]);
    return s;
  };
  double total = 0.0;
  for (const auto& x : a) {
    double best = INFINITY;
    for (const auto& y : b) best = std::min(best, sq(x, y));
    total += best;
  }
  for (const auto& y : b) {
    double best = INFINITY;
    for (const auto& x : a) best = std::min(best, sq(x, y));
    total += best;
  }
  return total;
}

/// Pair-loop MMD^2 estimator written from the definition.
inline double oracle_mmd2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double sigma, bool unbiased) {
  auto k = [&](const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
    return std::exp(-s / (2.0 * sigma * sigma));
  };
  const auto m = x.rows(), n = y.rows();
  double xx = 0, yy = 0, xy = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (!unbiased || i != j) xx += k(x, i, x, j);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (!unbiased || i != j) yy += k(y, i, y, j);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) xy += k(x, i, y, j);
  const double dm = static_cast<double>(m), dn = static_cast<double>(n);
  return xx / (unbiased ? dm * (dm - 1) : dm * dm) + yy / (unbiased ? dn * (dn - 1) : dn * dn) -
         2.0 * xy / (dm * dn);
}

/// Smallest relative gap between consecutive sorted neighbour distances that
/// decide each point's first `k` neighbours; positive means tie-free.
inline double neighbour_margin(const PointCloud& c, int k) {
  double margin = INFINITY;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < c.rows(); ++j)
      if (j != i) d.push_back(dist(c, i, j));
    std::sort(d.begin(), d.end());
    for (int r = 0; r < k && r + 1 < static_cast<int>(d.size()); ++r)
      margin = std::min(margin, (d[static_cast<std::size_t>(r) + 1] - d[static_cast<std::size_t>(r)]) / d.back());
  }
  return margin;
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() /
            ("gera_test_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace gera::test
