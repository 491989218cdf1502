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

// Central-difference check of gera_backward against loss_total over every
// model parameter.
//
// Evaluating the full network twice per parameter is too slow for the default
// widths, so perturbed losses are evaluated incrementally: a single weight or
// bias changes one pre-activation column, which enters the next layer as a
// rank-1 update; only the layers after that are recomputed. check_incremental
// compares this path against a full forward pass.
//
// Entries whose +h / -h one-sided differences disagree are treated as
// crossing a kink (ReLU switch, pooling argmax, neighbour or Chamfer
// assignment change) and excluded.

#include "gera/geometry.hpp"
#include "gera/gera.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gera::test {

struct GradCheckReport {
  Eigen::Index parameters = 0;
  Eigen::Index checked = 0;
  Eigen::Index kinks = 0;
  double loss = 0.0;
  double max_rel_error = 0.0;
  Eigen::Index worst = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

class IncrementalLoss {
 public:
  IncrementalLoss(const GeraModel& model, const TrainingPair& pair, double alpha)
      : model_(model), pair_(pair), alpha_(alpha) {
    enc_s_ = run_stack(model.encoder(), pair.source_desc.vectors);
    enc_t_ = run_stack(model.encoder(), pair.target_desc.vectors);
    gs_ = pool(enc_s_.out);
    gt_ = pool(enc_t_.out);
    const auto& first = model.decoder().layers().front();
    const Eigen::Index f = model.feature_width();
    dec_in_.resize(pair.source.rows(), first.in());
    dec_in_.leftCols(3) = pair.source;
    dec_in_.middleCols(3, f).rowwise() = gs_;
    dec_in_.middleCols(3 + f, f).rowwise() = gt_;
    dec_ = run_stack(model.decoder(), dec_in_);
  }

  double base() const { return loss(dec_.out); }

  /// Loss with flat parameter `p` (GeraModel::parameters order) shifted by `h`.
  double perturbed(Eigen::Index p, double h) const {
    const Eigen::Index enc_count = model_.encoder().parameter_count();
    if (p < enc_count) {
      const Locator at = locate(model_.encoder(), p);
      const RowVector dgs = pool(perturb_stack(model_.encoder(), enc_s_, at, h)) - gs_;
      const RowVector dgt = pool(perturb_stack(model_.encoder(), enc_t_, at, h)) - gt_;
      // pooled features enter the first decoder layer as a term shared by all rows
      const auto& w0 = model_.decoder().layers().front().weights;
      const Eigen::Index f = model_.feature_width();
      Eigen::VectorXd shift = Eigen::VectorXd::Zero(w0.rows());
      for (Eigen::Index c = 0; c < f; ++c) {
        if (dgs[c] != 0.0) shift += dgs[c] * w0.col(3 + c);
        if (dgt[c] != 0.0) shift += dgt[c] * w0.col(3 + f + c);
      }
      RowMatrixXd z0 = dec_.pre[0];
      z0.rowwise() += shift.transpose();
      return loss(decoder_tail(z0));
    }
    const Locator at = locate(model_.decoder(), p - enc_count);
    return loss(perturb_stack(model_.decoder(), dec_, at, h));
  }

  /// Largest |incremental - full| over the given parameters.
  double check_incremental(const std::vector<Eigen::Index>& params, double h) const {
    double worst = 0.0;
    Eigen::VectorXd theta = model_.parameters();
    for (Eigen::Index p : params) {
      GeraModel m = model_;
      Eigen::VectorXd q = theta;
      q[p] += h;
      m.set_parameters(q);
      const auto field = gera_forward(pair_.source, pair_.target, pair_.source_desc, pair_.target_desc, m);
      const double full = loss(field);
      worst = std::max(worst, std::abs(full - perturbed(p, h)) / std::max(1.0, std::abs(full)));
    }
    return worst;
  }

 private:
  using RowVector = Eigen::RowVectorXd;

  struct StackCache {
    std::vector<RowMatrixXd> input;  // input of each layer
    std::vector<RowMatrixXd> pre;    // pre-activation of each layer
    RowMatrixXd out;
  };

  struct Locator {
    std::size_t layer = 0;
    Eigen::Index unit = 0;
    Eigen::Index column = -1;  // -1 for the bias
  };

  static StackCache run_stack(const nn::Mlp& net, const RowMatrixXd& x) {
    StackCache c;
    RowMatrixXd a = x;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      c.input.push_back(a);
      RowMatrixXd z = nn::dense_forward(net.layers()[l], a);
      a = net.activated(l) ? nn::relu(z) : z;
      c.pre.push_back(std::move(z));
    }
    c.out = a;
    return c;
  }

  static Locator locate(const nn::Mlp& net, Eigen::Index p) {
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      const auto& layer = net.layers()[l];
      const Eigen::Index nw = layer.weights.size();
      if (p < nw) return {l, p / layer.in(), p % layer.in()};
      p -= nw;
      if (p < layer.out()) return {l, p, -1};
      p -= layer.out();
    }
    throw Error("gradcheck: parameter index out of range");
  }

  static double act(const nn::Mlp& net, std::size_t l, double z) {
    return net.activated(l) ? std::max(z, 0.0) : z;
  }

  static RowMatrixXd perturb_stack(const nn::Mlp& net, const StackCache& c, const Locator& at, double h) {
    const std::size_t l = at.layer;
    const Eigen::Index rows = c.pre[l].rows();
    Eigen::VectorXd delta_a(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double dz = at.column < 0 ? h : h * c.input[l](r, at.column);
      const double z = c.pre[l](r, at.unit);
      delta_a[r] = act(net, l, z + dz) - act(net, l, z);
    }
    const std::size_t last = net.layers().size() - 1;
    if (l == last) {
      RowMatrixXd out = c.out;
      out.col(at.unit) += delta_a;
      return out;
    }
    RowMatrixXd z = c.pre[l + 1];
    z.noalias() += delta_a * net.layers()[l + 1].weights.col(at.unit).transpose();
    RowMatrixXd a = net.activated(l + 1) ? nn::relu(z) : z;
    for (std::size_t k = l + 2; k <= last; ++k) {
      RowMatrixXd zk = nn::dense_forward(net.layers()[k], a);
      a = net.activated(k) ? nn::relu(zk) : zk;
    }
    return a;
  }

  static RowVector pool(const RowMatrixXd& x) { return x.colwise().maxCoeff(); }

  /// Decoder output given the first layer's pre-activation.
  RowMatrixXd decoder_tail(const RowMatrixXd& z0) const {
    const nn::Mlp& net = model_.decoder();
    RowMatrixXd a = net.activated(0) ? nn::relu(z0) : z0;
    for (std::size_t k = 1; k < net.layers().size(); ++k) {
      RowMatrixXd zk = nn::dense_forward(net.layers()[k], a);
      a = net.activated(k) ? nn::relu(zk) : zk;
    }
    return a;
  }

  double loss(const DisplacementField& field) const {
    return loss_total(apply_displacement(pair_.source, field), pair_.target, pair_.target_desc, alpha_);
  }

  const GeraModel& model_;
  const TrainingPair& pair_;
  double alpha_;
  StackCache enc_s_, enc_t_, dec_;
  RowVector gs_, gt_;
  RowMatrixXd dec_in_;
};

/// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor) with
/// floor = floor_scale * max(1, |loss|): central differences cannot resolve
/// derivatives much below eps * |loss| / h, so those are compared absolutely.
///
/// The geometric loss is O(1e4) on the toy pair, so h = 1e-5 leaves roundoff
/// of about 1e-4 relative on small derivatives; h = 1e-4 balances roundoff
/// against truncation. An entry counts as a kink only when its one-sided
/// slopes differ by more than `kink_tolerance` of their size, far above the
/// h * f'' spread that smooth curvature produces.
inline GradCheckReport check_model_gradient(const GeraModel& model, const TrainingPair& pair, double alpha,
                                            double h = 1e-4, double floor_scale = 1e-6,
                                            double kink_tolerance = 0.1) {
  ForwardTape tape;
  const auto field = gera_forward(pair.source, pair.target, pair.source_desc, pair.target_desc, model, &tape);
  PointCloud grad;
  loss_total(apply_displacement(pair.source, field), pair.target, pair.target_desc, alpha, &grad);
  const Eigen::VectorXd analytic = gera_backward(model, tape, grad);

  const IncrementalLoss eval(model, pair, alpha);
  const double f0 = eval.base();
  const double floor = floor_scale * std::max(1.0, std::abs(f0));
  GradCheckReport report;
  report.parameters = analytic.size();
  report.loss = f0;
  for (Eigen::Index p = 0; p < analytic.size(); ++p) {
    const double fp = eval.perturbed(p, h);
    const double fm = eval.perturbed(p, -h);
    const double numeric = (fp - fm) / (2 * h);
    const double forward = (fp - f0) / h;
    const double backward = (f0 - fm) / h;
    const double scale = std::max({std::abs(forward), std::abs(backward), floor});
    if (std::abs(forward - backward) > kink_tolerance * scale) {
      ++report.kinks;
      continue;
    }
    ++report.checked;
    const double a = analytic[p];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = p;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

/// A 16-point source and a smoothly deformed, slightly noisy target.
inline TrainingPair toy_pair(std::uint64_t seed, int n_desc, Eigen::Index points = 16) {
  Rng rng(seed);
  TrainingPair p;
  p.source.resize(points, 3);
  for (Eigen::Index i = 0; i < points; ++i)
    for (int a = 0; a < 3; ++a) p.source(i, a) = rng.uniform(-10.0, 10.0);
  p.ground_truth.resize(points, 3);
  for (Eigen::Index i = 0; i < points; ++i)
    for (int a = 0; a < 3; ++a)
      p.ground_truth(i, a) = 2.0 * std::sin(0.2 * p.source(i, (a + 1) % 3) + static_cast<double>(a));
  p.target = p.source + p.ground_truth;
  for (Eigen::Index i = 0; i < points; ++i) p.target.row(i) += 0.5 * rng.unit_vector().transpose();
  p.source_desc = encode_cloud(p.source, n_desc);
  p.target_desc = encode_cloud(p.target, n_desc);
  return p;
}

}  // namespace gera::test
