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

#include "gera/gera.hpp"

#include "gera/geometry.hpp"
#include "gera/neighborhood.hpp"
#include "gera/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace gera {

// ---------------------------------------------------------------------------
// Model

GeraModel::GeraModel(int n_desc, nn::Mlp encoder, nn::Mlp decoder)
    : n_desc_(n_desc), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  if (n_desc_ < 3) throw Error("GeraModel: n_desc must be at least 3");
  if (encoder_.layers().empty() || decoder_.layers().empty())
    throw ShapeError("GeraModel: encoder and decoder need layers");
  if (encoder_.layers().front().in() != pair_count(n_desc_))
    throw ShapeError("GeraModel: encoder input width " +
                     std::to_string(encoder_.layers().front().in()) + " != C(" +
                     std::to_string(n_desc_) + ",2)");
  if (decoder_.layers().front().in() != 3 + 2 * feature_width())
    throw ShapeError("GeraModel: decoder input width must be 3 + 2 * encoder output width");
  if (decoder_.layers().back().out() != 3) throw ShapeError("GeraModel: decoder must emit 3 values");
}

GeraModel GeraModel::create(const RegistrationConfig& config) {
  config.validate();
  std::vector<int> enc{static_cast<int>(pair_count(config.n_desc))};
  enc.insert(enc.end(), config.encoder_widths.begin(), config.encoder_widths.end());
  std::vector<int> dec{3 + 2 * config.encoder_widths.back()};
  dec.insert(dec.end(), config.decoder_widths.begin(), config.decoder_widths.end());
  dec.push_back(3);
  Rng enc_rng(Rng::mix(config.seed, 0));
  Rng dec_rng(Rng::mix(config.seed, 1));
  return GeraModel(config.n_desc, nn::Mlp::init(enc, true, enc_rng), nn::Mlp::init(dec, false, dec_rng));
}

Eigen::Index GeraModel::feature_width() const { return encoder_.layers().back().out(); }

Eigen::Index GeraModel::parameter_count() const {
  return encoder_.parameter_count() + decoder_.parameter_count();
}

Eigen::VectorXd GeraModel::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  encoder_.flatten_into(flat.head(encoder_.parameter_count()));
  decoder_.flatten_into(flat.tail(decoder_.parameter_count()));
  return flat;
}

void GeraModel::set_parameters(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != parameter_count()) throw ShapeError("set_parameters: size mismatch");
  encoder_.assign_from(flat.head(encoder_.parameter_count()));
  decoder_.assign_from(flat.tail(decoder_.parameter_count()));
}

nn::Checkpoint GeraModel::to_checkpoint() const {
  return {static_cast<std::uint32_t>(n_desc_), {encoder_, decoder_}};
}

GeraModel GeraModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.stacks.size() != 2) throw FormatError("GERA checkpoint must hold encoder and decoder");
  return GeraModel(static_cast<int>(ckpt.tag), ckpt.stacks[0], ckpt.stacks[1]);
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void check_inputs(const PointCloud& source, const PointCloud& target, const DescriptorSet& sd,
                  const DescriptorSet& td, const GeraModel& model) {
  if (sd.rows() != source.rows() || td.rows() != target.rows())
    throw ShapeError("gera_forward: descriptor rows do not match cloud sizes");
  if (sd.dim() != model.descriptor_dim() || td.dim() != model.descriptor_dim() ||
      sd.n_desc != model.n_desc() || td.n_desc != model.n_desc())
    throw ShapeError("gera_forward: descriptor width " + std::to_string(sd.dim()) +
                     " does not match the model (n_desc=" + std::to_string(model.n_desc()) + ")");
  if (source.rows() == 0 || target.rows() == 0) throw ShapeError("gera_forward: empty cloud");
}

}  // namespace

DisplacementField gera_forward(const PointCloud& source, const PointCloud& target,
                               const DescriptorSet& source_desc, const DescriptorSet& target_desc,
                               const GeraModel& model, ForwardTape* tape) {
  check_inputs(source, target, source_desc, target_desc, model);
  const auto& enc = model.encoder();
  const auto& dec = model.decoder();
  const Eigen::Index f = model.feature_width();

  const RowMatrixXd es = enc.forward(source_desc.vectors, tape ? &tape->encoder_source : nullptr);
  const RowMatrixXd et = enc.forward(target_desc.vectors, tape ? &tape->encoder_target : nullptr);
  nn::Pooled ps = nn::maxpool_points(es);
  nn::Pooled pt = nn::maxpool_points(et);

  // The first decoder layer splits into a per-row coordinate part and a part
  // shared by every row (the replicated global feature).
  const nn::DenseLayer& first = dec.layers().front();
  Eigen::VectorXd shared = first.biases;
  shared.noalias() += first.weights.middleCols(3, f) * ps.values.transpose();
  shared.noalias() += first.weights.middleCols(3 + f, f) * pt.values.transpose();
  RowMatrixXd z0 = source * first.weights.leftCols(3).transpose();
  z0.rowwise() += shared.transpose();
  RowMatrixXd h0 = dec.activated(0) ? nn::relu(z0) : z0;

  RowMatrixXd out = dec.forward(h0, tape ? &tape->decoder : nullptr, 1);
  if (tape) {
    tape->pooled_source = std::move(ps);
    tape->pooled_target = std::move(pt);
    tape->source = source;
    tape->decoder_pre = std::move(z0);
    tape->source_rows = source.rows();
    tape->target_rows = target.rows();
    tape->consumed = false;
  }
  return out;
}

Eigen::VectorXd gera_backward(const GeraModel& model, ForwardTape& tape,
                              const DisplacementField& field_grad) {
  if (tape.consumed) throw nn::TapeReuseError();
  if (field_grad.rows() != tape.source_rows) throw ShapeError("gera_backward: gradient row mismatch");
  tape.consumed = true;
  const auto& enc = model.encoder();
  const auto& dec = model.decoder();
  const Eigen::Index f = model.feature_width();
  auto enc_grads = enc.zero_grads();
  auto dec_grads = dec.zero_grads();

  RowMatrixXd dh0 = dec.backward(tape.decoder, field_grad, dec_grads, true);
  const RowMatrixXd dz0 = dec.activated(0) ? nn::relu_backward(dh0, tape.decoder_pre) : dh0;
  const Eigen::RowVectorXd col = dz0.colwise().sum();
  auto& g0 = dec_grads.front();
  g0.weights.leftCols(3).noalias() += dz0.transpose() * tape.source;
  g0.weights.middleCols(3, f).noalias() += col.transpose() * tape.pooled_source.values;
  g0.weights.middleCols(3 + f, f).noalias() += col.transpose() * tape.pooled_target.values;
  g0.biases += col.transpose();

  const nn::DenseLayer& first = dec.layers().front();
  const Eigen::RowVectorXd dgs = col * first.weights.middleCols(3, f);
  const Eigen::RowVectorXd dgt = col * first.weights.middleCols(3 + f, f);
  enc.backward(tape.encoder_source, nn::maxpool_backward(dgs, tape.pooled_source.argmax, tape.source_rows),
               enc_grads, false);
  enc.backward(tape.encoder_target, nn::maxpool_backward(dgt, tape.pooled_target.argmax, tape.target_rows),
               enc_grads, false);

  Eigen::VectorXd flat(model.parameter_count());
  flat << nn::flatten(enc_grads), nn::flatten(dec_grads);
  return flat;
}

PointCloud apply_displacement(const PointCloud& source, const DisplacementField& field,
                              const RegistrationConfig& config) {
  if (field.rows() != source.rows())
    throw ShapeError("apply_displacement: field has " + std::to_string(field.rows()) +
                     " rows, source has " + std::to_string(source.rows()));
  switch (config.epsilon_mode) {
    case EpsilonMode::zero: break;
  }
  return source + field;
}

// ---------------------------------------------------------------------------
// Losses

std::vector<int> nearest_rows(const RowMatrixXd& from, const RowMatrixXd& to) {
  if (to.rows() == 0) throw Error("nearest_rows: empty reference set");
  if (from.cols() != to.cols()) throw ShapeError("nearest_rows: dimension mismatch");
  const Eigen::VectorXd fn = from.rowwise().squaredNorm();
  const Eigen::VectorXd tn = to.rowwise().squaredNorm();
  const double tmax = tn.maxCoeff();
  const RowMatrixXd cross = from * to.transpose();
  std::vector<int> out(static_cast<std::size_t>(from.rows()));
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    // Expanded squared distances pick candidates; any candidate within the
    // expansion's rounding error is rechecked exactly.
    double lo = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < to.rows(); ++j) lo = std::min(lo, fn(i) + tn(j) - 2.0 * cross(i, j));
    const double tol = 1e-10 * (fn(i) + tmax) + 1e-300;
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (Eigen::Index j = 0; j < to.rows(); ++j) {
      if (fn(i) + tn(j) - 2.0 * cross(i, j) > lo + tol) continue;
      const double d = (from.row(i) - to.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        best_j = static_cast<int>(j);
      }
    }
    out[static_cast<std::size_t>(i)] = best_j;
  }
  return out;
}

double loss_xyz(const PointCloud& deformed, const PointCloud& target, PointCloud* grad) {
  if (deformed.rows() != target.rows() || deformed.rows() == 0)
    throw ShapeError("loss_xyz: clouds need the same nonzero point count");
  const PointCloud residual = deformed - target;
  const double m = static_cast<double>(deformed.rows());
  const double value = std::sqrt(residual.squaredNorm() / m);
  if (grad) *grad = value > 0.0 ? PointCloud(residual / (m * value)) : PointCloud::Zero(deformed.rows(), 3);
  return value;
}

double descriptor_chamfer(const RowMatrixXd& a, const RowMatrixXd& b, RowMatrixXd* grad_a) {
  const auto ab = nearest_rows(a, b);
  const auto ba = nearest_rows(b, a);
  double loss = 0.0;
  if (grad_a) *grad_a = RowMatrixXd::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const auto diff = a.row(i) - b.row(ab[static_cast<std::size_t>(i)]);
    loss += diff.squaredNorm();
    if (grad_a) grad_a->row(i) += 2.0 * diff;
  }
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const int i = ba[static_cast<std::size_t>(j)];
    const auto diff = a.row(i) - b.row(j);
    loss += diff.squaredNorm();
    if (grad_a) grad_a->row(i) += 2.0 * diff;
  }
  return loss;
}

namespace {

NeighborList geo_neighbors(const PointCloud& cloud, int n_desc) {
  if (n_desc < 3) throw Error("loss_geo: n_desc must be at least 3");
  if (cloud.rows() < n_desc)
    throw Error("loss_geo: cloud of " + std::to_string(cloud.rows()) + " points is smaller than n_desc=" +
                std::to_string(n_desc));
  return knn_fast(cloud, n_desc - 1);
}

}  // namespace

double loss_geo(const PointCloud& deformed, const DescriptorSet& target_desc, PointCloud* grad) {
  const int n = target_desc.n_desc;
  const NeighborList nbrs = geo_neighbors(deformed, n);
  const RowMatrixXd rows = descriptors_from_neighbors(deformed, nbrs, n);
  RowMatrixXd grad_rows;
  const double value = descriptor_chamfer(rows, target_desc.vectors, grad ? &grad_rows : nullptr);
  if (grad) {
    *grad = PointCloud::Zero(deformed.rows(), 3);
    for (Eigen::Index i = 0; i < deformed.rows(); ++i) {
      const auto v = graph_vertices(nbrs, i, n);
      Eigen::Index e = 0;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b, ++e) {
          const int va = v[static_cast<std::size_t>(a)], vb = v[static_cast<std::size_t>(b)];
          const Eigen::RowVector3d d = deformed.row(va) - deformed.row(vb);
          const double len = d.norm();
          if (len == 0.0) continue;  // subgradient 0 at coincident points
          const Eigen::RowVector3d g = grad_rows(i, e) / len * d;
          grad->row(va) += g;
          grad->row(vb) -= g;
        }
    }
  }
  return value;
}

double loss_geo(const PointCloud& deformed, const PointCloud& target, int n_desc) {
  const NeighborList tn = geo_neighbors(target, n_desc);
  const DescriptorSet td{descriptors_from_neighbors(target, tn, n_desc), n_desc};
  return loss_geo(deformed, td, nullptr);
}

double loss_total(const PointCloud& deformed, const PointCloud& target, const DescriptorSet& target_desc,
                  double alpha, PointCloud* grad) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("loss_total: alpha must lie in [0, 1]");
  if (alpha == 0.0) return loss_xyz(deformed, target, grad);
  if (alpha == 1.0) return loss_geo(deformed, target_desc, grad);
  PointCloud gx, gg;
  const double lx = loss_xyz(deformed, target, grad ? &gx : nullptr);
  const double lg = loss_geo(deformed, target_desc, grad ? &gg : nullptr);
  if (grad) *grad = alpha * gg + (1.0 - alpha) * gx;
  return alpha * lg + (1.0 - alpha) * lx;
}

double loss_total(const PointCloud& deformed, const PointCloud& target, const RegistrationConfig& config) {
  config.validate();
  if (config.alpha_loss == 0.0) return loss_xyz(deformed, target);
  const NeighborList tn = geo_neighbors(target, config.n_desc);
  const DescriptorSet td{descriptors_from_neighbors(target, tn, config.n_desc), config.n_desc};
  return loss_total(deformed, target, td, config.alpha_loss, nullptr);
}

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.rows() == 0 || b.rows() == 0) throw Error("chamfer_distance: empty cloud");
  const RowMatrixXd ra = a, rb = b;
  const auto ab = nearest_rows(ra, rb);
  const auto ba = nearest_rows(rb, ra);
  double sa = 0.0, sb = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) sa += (a.row(i) - b.row(ab[static_cast<std::size_t>(i)])).norm();
  for (Eigen::Index j = 0; j < b.rows(); ++j) sb += (b.row(j) - a.row(ba[static_cast<std::size_t>(j)])).norm();
  return 0.5 * (sa / static_cast<double>(a.rows()) + sb / static_cast<double>(b.rows()));
}

// ---------------------------------------------------------------------------
// Training and evaluation

double mean_rmse(const GeraModel& model, std::span<const TrainingPair> pairs) {
  if (pairs.empty()) throw Error("mean_rmse: no pairs");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const auto d = gera_forward(p.source, p.target, p.source_desc, p.target_desc, model);
    sum += loss_xyz(apply_displacement(p.source, d), p.target);
  }
  return sum / static_cast<double>(pairs.size());
}

TrainResult train(GeraModel model, std::span<const TrainingPair> train_set,
                  std::span<const TrainingPair> val_set, const TrainOptions& options) {
  using Clock = std::chrono::steady_clock;
  if (train_set.empty()) throw Error("train: empty training split");
  if (options.epochs < 1) throw Error("train: epochs must be positive");
  if (!(options.lr > 0.0)) throw Error("train: learning rate must be positive");

  Eigen::VectorXd params = model.parameters();
  nn::AdamState adam(params.size(), nn::AdamConfig{options.lr});
  Rng rng(Rng::mix(options.seed, 0x7a11));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.best = model;
  double best_score = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto t0 = Clock::now();
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const TrainingPair& p = train_set[idx];
      ForwardTape tape;
      const auto field = gera_forward(p.source, p.target, p.source_desc, p.target_desc, model, &tape);
      PointCloud grad;
      const double loss =
          loss_total(apply_displacement(p.source, field), p.target, p.target_desc, options.alpha, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", pair " +
                                   std::to_string(idx),
                               model, result.history);
      const Eigen::VectorXd g = gera_backward(model, tape, grad);
      if (!g.allFinite())
        throw TrainingDiverged("non-finite gradient at epoch " + std::to_string(epoch), model,
                               result.history);
      nn::adam_step(params, g, adam);
      model.set_parameters(params);
      loss_sum += loss;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.val_rmse = val_set.empty() ? stats.train_loss : mean_rmse(model, val_set);
    stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (stats.val_rmse < best_score) {
      best_score = stats.val_rmse;
      result.best = model;
      result.best_epoch = epoch;
    }
    result.history.push_back(stats);
    if (options.on_epoch) options.on_epoch(epoch, stats.train_loss, stats.val_rmse);
  }
  result.last = std::move(model);
  return result;
}

EvalReport evaluate(std::span<const TrainingPair> test_set, const Predictor& predict, int timing_runs,
                    double tt_s) {
  using Clock = std::chrono::steady_clock;
  if (test_set.empty()) throw Error("evaluate: empty test split");
  EvalReport report;
  report.tt_s = tt_s;
  for (const auto& p : test_set) {
    const PointCloud deformed = apply_displacement(p.source, predict(p));
    report.rmse_mm += loss_xyz(deformed, p.target);
    report.cd_mm += chamfer_distance(deformed, p.target);
  }
  const auto n = static_cast<double>(test_set.size());
  report.rmse_mm /= n;
  report.cd_mm /= n;

  const int per_pair = std::max(1, (timing_runs + static_cast<int>(test_set.size()) - 1) /
                                       static_cast<int>(test_set.size()));
  std::vector<double> ms;
  for (const auto& p : test_set)
    for (int r = 0; r < per_pair; ++r) {
      const auto t0 = Clock::now();
      const auto d = predict(p);
      ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
      if (d.rows() != p.source.rows()) throw ShapeError("evaluate: predictor returned wrong row count");
    }
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  report.it_ms = ms.size() % 2 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  return report;
}

EvalReport evaluate(std::span<const TrainingPair> test_set, const GeraModel& model, int timing_runs,
                    double tt_s) {
  return evaluate(
      test_set,
      [&](const TrainingPair& p) {
        return gera_forward(p.source, p.target, p.source_desc, p.target_desc, model);
      },
      timing_runs, tt_s);
}

// ---------------------------------------------------------------------------
// Stability study

Eigen::MatrixXd embed(const nn::Mlp& encoder, std::span<const RowMatrixXd> inputs) {
  if (inputs.empty()) throw Error("embed: no inputs");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(inputs.size()), encoder.layers().back().out());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = nn::maxpool_points(encoder.forward(inputs[i])).values;
  return out;
}

StabilityResult stability_study(std::span<const PointCloud> clouds,
                                std::span<const DescriptorSet> descriptors,
                                const nn::Mlp& coordinate_encoder, const nn::Mlp& geometric_encoder,
                                int batch_size, const MmdConfig& config) {
  if (clouds.size() != descriptors.size()) throw ShapeError("stability_study: input count mismatch");
  if (coordinate_encoder.layers().back().out() != geometric_encoder.layers().back().out() ||
      coordinate_encoder.layers().size() != geometric_encoder.layers().size())
    throw ShapeError("stability_study: encoders must share an architecture");
  if (batch_size < 1 || clouds.size() < 2 * static_cast<std::size_t>(batch_size))
    throw Error("stability_study: need at least 2 batches of " + std::to_string(batch_size) +
                " clouds, have " + std::to_string(clouds.size()));
  std::vector<RowMatrixXd> coords, geos;
  for (const auto& c : clouds) coords.emplace_back(c);
  for (const auto& d : descriptors) geos.push_back(d.vectors);
  const Eigen::MatrixXd ec = embed(coordinate_encoder, coords);
  const Eigen::MatrixXd eg = embed(geometric_encoder, geos);
  const double sigma = config.sigma ? *config.sigma : median_heuristic(ec, Eigen::MatrixXd(0, ec.cols()));
  if (!(sigma > 0.0)) throw Error("stability_study: sigma must be positive");
  return {batch_pair_mmd(ec, batch_size, sigma, config.estimator, "coordinate"),
          batch_pair_mmd(eg, batch_size, sigma, config.estimator, "geometric")};
}

}  // namespace gera
