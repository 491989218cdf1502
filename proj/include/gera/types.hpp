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

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gera {

// Row-per-point storage. Units are millimeters everywhere.
template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PointCloud = Points3<double>;
using DisplacementField = Points3<double>;
using RowMatrixXd = RowMatrix<double>;
using Vector3 = Eigen::Vector3d;

/// k nearest neighbours of every point, one row per query point, ascending distance.
using NeighborList = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

constexpr std::int64_t pair_count(std::int64_t n) { return n * (n - 1) / 2; }

/// Per-point fully connected graph edge lengths. One row per cloud point,
/// pair_count(n_desc) columns.
struct DescriptorSet {
  RowMatrixXd vectors;
  int n_desc = 0;

  Eigen::Index rows() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
  bool operator==(const DescriptorSet&) const = default;
};

enum class EpsilonMode { zero };

struct RegistrationConfig {
  int n_desc = 10;
  double alpha_loss = 0.5;
  EpsilonMode epsilon_mode = EpsilonMode::zero;
  std::uint64_t seed = 0;
  std::vector<int> encoder_widths{64, 128, 256};
  std::vector<int> decoder_widths{256, 128, 64};

  void validate() const;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

void require_finite(const PointCloud& cloud, const char* what);

void validate(const DescriptorSet& desc);

}  // namespace gera
