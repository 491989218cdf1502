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

#include "gera/deform.hpp"

#include "gera/random.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

namespace gera {

namespace fs = std::filesystem;

TpsModel tps_fit(const PointCloud& control_src, const PointCloud& control_dst, double lambda) {
  const Eigen::Index c = control_src.rows();
  if (c < 4) throw Error("tps_fit: need at least 4 control points, got " + std::to_string(c));
  if (control_dst.rows() != c) throw ShapeError("tps_fit: control point count mismatch");
  if (lambda < 0.0) throw Error("tps_fit: regularization must be nonnegative");
  require_finite(control_src, "control_src");
  require_finite(control_dst, "control_dst");

  const Eigen::Index n = c + 4;
  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j)
      system(i, j) = (control_src.row(i) - control_src.row(j)).norm();
    system(i, i) += lambda;
    system(i, c) = 1.0;
    system.block<1, 3>(i, c + 1) = control_src.row(i);
  }
  system.block(c, 0, 4, c) = system.block(0, c, c, 4).transpose();

  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
  rhs.topRows(c) = control_dst;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible())
    throw Error("tps_fit: singular system (coplanar or duplicate control points)");
  const Eigen::MatrixXd sol = lu.solve(rhs);
  if (!sol.allFinite()) throw Error("tps_fit: singular system (non-finite solution)");

  TpsModel model;
  model.controls = control_src;
  model.warp = sol.topRows(c);
  model.affine = sol.bottomRows(4);
  model.lambda = lambda;
  return model;
}

PointCloud tps_apply(const TpsModel& model, const PointCloud& cloud) {
  PointCloud out(cloud.rows(), 3);
  const Eigen::Index c = model.controls.rows();
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    Eigen::RowVector3d y = model.affine.row(0) + cloud.row(i) * model.affine.bottomRows<3>();
    for (Eigen::Index j = 0; j < c; ++j)
      y += (cloud.row(i) - model.controls.row(j)).norm() * model.warp.row(j);
    out.row(i) = y;
  }
  return out;
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int count, int start) {
  const auto m = static_cast<int>(cloud.rows());
  if (count <= 0 || count > m) throw Error("farthest_point_sample: bad sample count");
  std::vector<int> picked{start};
  Eigen::VectorXd best = (cloud.rowwise() - cloud.row(start)).rowwise().squaredNorm();
  while (static_cast<int>(picked.size()) < count) {
    Eigen::Index next = 0;
    best.maxCoeff(&next);  // first index on ties
    picked.push_back(static_cast<int>(next));
    best = best.cwiseMin((cloud.rowwise() - cloud.row(next)).rowwise().squaredNorm());
  }
  return picked;
}

namespace {

double magnitude(const DisplacementField& d, MagnitudeMode mode) {
  const Eigen::VectorXd norms = d.rowwise().norm();
  return mode == MagnitudeMode::max_norm ? norms.maxCoeff() : norms.mean();
}

}  // namespace

PairRecord generate_pair(const PointCloud& base, double deform_mm, std::array<double, 2> noise_mm,
                         std::uint64_t seed, const DeformOptions& options) {
  if (base.rows() < 4) throw Error("generate_pair: base cloud needs at least 4 points");
  require_finite(base, "base");
  if (!(deform_mm > 0.0)) throw Error("generate_pair: deformation magnitude must be positive");
  if (noise_mm[0] < 0.0 || noise_mm[1] < noise_mm[0]) throw Error("generate_pair: bad noise range");
  if ((base.rowwise() - base.row(0)).rowwise().squaredNorm().maxCoeff() == 0.0)
    throw Error("generate_pair: degenerate base (all points coincident)");

  Rng rng(seed);
  const int count = std::min<int>(options.controls, static_cast<int>(base.rows()));
  const auto start = static_cast<int>(rng.below(static_cast<std::uint64_t>(base.rows())));
  const auto idx = farthest_point_sample(base, count, start);

  PointCloud controls(count, 3);
  PointCloud directions(count, 3);
  for (int j = 0; j < count; ++j) {
    controls.row(j) = base.row(idx[static_cast<std::size_t>(j)]);
    directions.row(j) = rng.unit_vector().transpose();
  }

  // The field is linear in the control offsets, so one rescale normally lands
  // on the target; the loop guards the tolerance anyway.
  double scale = deform_mm;
  DisplacementField gt;
  for (int iter = 0; iter < 16; ++iter) {
    const TpsModel model = tps_fit(controls, controls + scale * directions, options.lambda);
    gt = tps_apply(model, base) - base;
    const double achieved = magnitude(gt, options.mode);
    if (!(achieved > 0.0)) throw Error("generate_pair: deformation vanished");
    if (std::abs(achieved - deform_mm) <= options.tolerance * deform_mm * 0.5) break;
    scale *= deform_mm / achieved;
  }

  PairRecord rec;
  rec.source = base;
  rec.ground_truth = gt;
  rec.noise.resize(base.rows(), 3);
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    const Eigen::Vector3d dir = rng.unit_vector();
    rec.noise.row(i) = rng.uniform(noise_mm[0], noise_mm[1]) * dir.transpose();
  }
  rec.target = rec.pre_noise_target() + rec.noise;
  rec.deform_mm = deform_mm;
  rec.noise_min_mm = noise_mm[0];
  rec.noise_max_mm = noise_mm[1];
  rec.seed = seed;
  return rec;
}

PointCloud downsample(const PointCloud& cloud, int target_count, std::uint64_t seed) {
  const auto m = static_cast<int>(cloud.rows());
  if (target_count <= 0) throw Error("downsample: target count must be positive");
  if (m < target_count)
    throw Error("downsample: cloud has " + std::to_string(m) + " points, fewer than " +
                std::to_string(target_count));
  if (m == target_count) return cloud;
  std::vector<int> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < target_count; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(m - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(target_count));
  std::sort(idx.begin(), idx.end());
  PointCloud out(target_count, 3);
  for (int i = 0; i < target_count; ++i) out.row(i) = cloud.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

namespace {

Eigen::Matrix3d random_rotation(Rng& rng) {
  // Uniform unit quaternion (Shoemake).
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  const double w = b * std::cos(t3), x = a * std::sin(t2), y = a * std::cos(t2), z = b * std::sin(t3);
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return r;
}

}  // namespace

PointCloud make_base_shape(ShapeKind kind, int points, std::uint64_t seed) {
  if (points < 1) throw Error("make_base_shape: need at least one point");
  Rng rng(seed);
  PointCloud local(points, 3);
  switch (kind) {
    case ShapeKind::ellipsoid: {
      const double a = rng.uniform(60, 90), b = rng.uniform(40, 60), c = rng.uniform(25, 40);
      for (int i = 0; i < points; ++i) {
        const Eigen::Vector3d u = rng.unit_vector();
        local.row(i) << a * u.x(), b * u.y(), c * u.z();
      }
      break;
    }
    case ShapeKind::sphere: {
      const double r = rng.uniform(40, 60);
      for (int i = 0; i < points; ++i) local.row(i) = r * rng.unit_vector().transpose();
      break;
    }
    case ShapeKind::bent_tube: {
      const double bend = rng.uniform(60, 100);
      const double span = rng.uniform(0.5, 1.0) * std::numbers::pi;
      const double radius = rng.uniform(10, 18);
      for (int i = 0; i < points; ++i) {
        const double t = rng.uniform(0.0, span);
        const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const Eigen::Vector3d radial(std::cos(t), std::sin(t), 0.0);
        const Eigen::Vector3d p = (bend + radius * std::cos(psi)) * radial +
                                  radius * std::sin(psi) * Eigen::Vector3d::UnitZ();
        local.row(i) = p.transpose();
      }
      const Eigen::RowVector3d centroid = local.colwise().mean();
      local.rowwise() -= centroid;
      break;
    }
  }
  const Eigen::Matrix3d rot = random_rotation(rng);
  const Eigen::RowVector3d offset(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30));
  PointCloud out = local * rot.transpose();
  out.rowwise() += offset;
  return out;
}

std::vector<PointCloud> make_base_shapes(int count, int points, std::uint64_t seed) {
  constexpr ShapeKind kinds[] = {ShapeKind::ellipsoid, ShapeKind::sphere, ShapeKind::bent_tube};
  std::vector<PointCloud> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(make_base_shape(kinds[i % 3], points, Rng::mix(seed, static_cast<std::uint64_t>(i))));
  return out;
}

std::array<int, 3> split_counts(int bases, const std::array<int, 3>& ratio) {
  const int total = ratio[0] + ratio[1] + ratio[2];
  if (ratio[0] <= 0 || ratio[1] < 0 || ratio[2] < 0 || total <= 0)
    throw Error("split ratio entries must be positive");
  const auto portion = [&](int r) { return std::max(1, (bases * r + total - 1) / total); };
  const int val = portion(ratio[1]);
  const int test = portion(ratio[2]);
  const int train = bases - val - test;
  if (train < 1)
    throw Error("need at least 3 base clouds to fill train/val/test, got " + std::to_string(bases));
  return {train, val, test};
}

namespace {

std::string cloud_name(int base, int rep, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "clouds/b%04d_r%02d_%s.xyz", base, rep, kind);
  return buf;
}

}  // namespace

Dataset build_dataset(const std::vector<PointCloud>& bases, const DatasetConfig& config,
                      std::uint64_t seed) {
  const int n = static_cast<int>(bases.size());
  if (config.repetitions < 1) throw Error("build_dataset: repetitions must be positive");
  const auto counts = split_counts(n, config.split_ratio);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(Rng::mix(seed, 0));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(shuffle.below(static_cast<std::uint64_t>(i) + 1))]);
  std::vector<Split> split_of(static_cast<std::size_t>(n));
  for (int pos = 0; pos < n; ++pos) {
    const Split s = pos < counts[0] ? Split::train : pos < counts[0] + counts[1] ? Split::val : Split::test;
    split_of[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = s;
  }

  Dataset ds;
  for (int b = 0; b < n; ++b) {
    const PointCloud& base = bases[static_cast<std::size_t>(b)];
    for (int r = 0; r < config.repetitions; ++r) {
      const std::uint64_t rec_seed =
          Rng::mix(seed, 1 + static_cast<std::uint64_t>(b) * config.repetitions + r);
      const PointCloud source = base.rows() > config.points
                                    ? downsample(base, config.points, Rng::mix(rec_seed, 1))
                                    : base;
      ds.pairs.push_back(generate_pair(source, config.deform_mm, config.noise_mm, rec_seed, config.deform));
      ManifestRecord rec;
      rec.source = cloud_name(b, r, "src");
      rec.target = cloud_name(b, r, "tgt");
      rec.ground_truth = cloud_name(b, r, "gt");
      rec.deform_mm = config.deform_mm;
      rec.noise_min_mm = config.noise_mm[0];
      rec.noise_max_mm = config.noise_mm[1];
      rec.seed = rec_seed;
      rec.split = split_of[static_cast<std::size_t>(b)];
      rec.base = b;
      ds.manifest.records.push_back(std::move(rec));
    }
  }
  return ds;
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir) {
  DatasetManifest manifest = dataset.manifest;
  manifest.root = dir;
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
    const auto& rec = manifest.records[i];
    const auto& pair = dataset.pairs[i];
    save_cloud(pair.source, manifest.resolve(rec.source));
    save_cloud(pair.target, manifest.resolve(rec.target));
    save_cloud(pair.ground_truth, manifest.resolve(rec.ground_truth));
  }
  const fs::path path = dir / "manifest.jsonl";
  save_manifest(manifest, path);
  return path;
}

}  // namespace gera
