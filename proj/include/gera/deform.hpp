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

#include "gera/io.hpp"
#include "gera/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace gera {

/// 3-d thin plate spline with kernel phi(r) = r:
///   f(x) = [1 x] * affine + sum_j warp_j * |x - c_j|
struct TpsModel {
  PointCloud controls;                        // C x 3
  Eigen::Matrix<double, Eigen::Dynamic, 3> warp;  // C x 3
  Eigen::Matrix<double, 4, 3> affine;         // rows: constant, x, y, z
  double lambda = 0.0;
};

TpsModel tps_fit(const PointCloud& control_src, const PointCloud& control_dst, double lambda = 0.0);
PointCloud tps_apply(const TpsModel& model, const PointCloud& cloud);

/// Indices of `count` farthest-point samples, starting from `start`.
std::vector<int> farthest_point_sample(const PointCloud& cloud, int count, int start);

enum class MagnitudeMode { max_norm, mean_norm };

struct DeformOptions {
  int controls = 8;
  MagnitudeMode mode = MagnitudeMode::max_norm;
  double tolerance = 0.05;  // relative, on the achieved magnitude
  double lambda = 0.0;
};

struct PairRecord {
  PointCloud source;
  PointCloud target;                // pre_noise + noise
  DisplacementField ground_truth;   // TPS(source) - source
  DisplacementField noise;
  double deform_mm = 0.0;
  double noise_min_mm = 0.0;
  double noise_max_mm = 0.0;
  std::uint64_t seed = 0;

  PointCloud pre_noise_target() const { return source + ground_truth; }
};

PairRecord generate_pair(const PointCloud& base, double deform_mm, std::array<double, 2> noise_mm,
                         std::uint64_t seed, const DeformOptions& options = {});

/// Uniform subset without replacement; original relative order is kept.
PointCloud downsample(const PointCloud& cloud, int target_count, std::uint64_t seed);

enum class ShapeKind { ellipsoid, sphere, bent_tube };

/// Procedural organ stand-ins: surface samples in millimeters with a random
/// pose and size drawn from `seed`.
PointCloud make_base_shape(ShapeKind kind, int points, std::uint64_t seed);
/// Cycles through ellipsoid, sphere and bent tube.
std::vector<PointCloud> make_base_shapes(int count, int points, std::uint64_t seed);

struct DatasetConfig {
  std::array<int, 3> split_ratio{8, 1, 1};
  int repetitions = 1;
  int points = 1024;
  double deform_mm = 19.0;
  std::array<double, 2> noise_mm{1.0, 3.0};
  DeformOptions deform;
};

/// Split assignment: val and test get ceil(n * ratio / total) bases each (at
/// least one), train keeps the rest.
std::array<int, 3> split_counts(int bases, const std::array<int, 3>& ratio);

struct Dataset {
  DatasetManifest manifest;
  std::vector<PairRecord> pairs;  // parallel to manifest.records
};

/// Builds pairs in memory; record paths are filled with the names used by
/// write_dataset.
Dataset build_dataset(const std::vector<PointCloud>& bases, const DatasetConfig& config,
                      std::uint64_t seed);

/// Writes clouds under `dir/clouds` and the manifest to `dir/manifest.jsonl`.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace gera
