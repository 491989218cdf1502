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

#include "gera/mmd.hpp"
#include "gera/nn.hpp"
#include "gera/types.hpp"

#include <functional>
#include <span>
#include <vector>

namespace gera {

/// Shared per-point encoder over descriptor rows, max pooled per cloud, and a
/// decoder over rows [x_i | g_source | g_target] that emits one displacement
/// per source point.
class GeraModel {
 public:
  GeraModel() = default;
  GeraModel(int n_desc, nn::Mlp encoder, nn::Mlp decoder);

  static GeraModel create(const RegistrationConfig& config);

  int n_desc() const { return n_desc_; }
  Eigen::Index descriptor_dim() const { return pair_count(n_desc_); }
  Eigen::Index feature_width() const;

  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& decoder() const { return decoder_; }
  nn::Mlp& encoder() { return encoder_; }
  nn::Mlp& decoder() { return decoder_; }

  Eigen::Index parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& flat);

  nn::Checkpoint to_checkpoint() const;
  static GeraModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  int n_desc_ = 0;
  nn::Mlp encoder_;
  nn::Mlp decoder_;
};

struct ForwardTape {
  nn::Tape encoder_source;
  nn::Tape encoder_target;
  nn::Tape decoder;  // layers after the first
  nn::Pooled pooled_source;
  nn::Pooled pooled_target;
  RowMatrixXd source;       // decoder coordinate input
  RowMatrixXd decoder_pre;  // first decoder layer pre-activation
  Eigen::Index source_rows = 0;
  Eigen::Index target_rows = 0;
  bool consumed = false;
};

DisplacementField gera_forward(const PointCloud& source, const PointCloud& target,
                               const DescriptorSet& source_desc, const DescriptorSet& target_desc,
                               const GeraModel& model, ForwardTape* tape = nullptr);

/// Flat parameter gradient (GeraModel::parameters order) of a scalar loss whose
/// gradient with respect to the predicted field is `field_grad`.
Eigen::VectorXd gera_backward(const GeraModel& model, ForwardTape& tape,
                              const DisplacementField& field_grad);

/// x'_i = x_i + d_i + eps(x_i); eps is zero under EpsilonMode::zero.
PointCloud apply_displacement(const PointCloud& source, const DisplacementField& field,
                              const RegistrationConfig& config = {});

/// Index of the nearest row of `to` for every row of `from` (squared Euclidean,
/// first index on ties).
std::vector<int> nearest_rows(const RowMatrixXd& from, const RowMatrixXd& to);

/// sqrt(mean_i |deformed_i - target_i|^2). Optional gradient w.r.t. deformed.
double loss_xyz(const PointCloud& deformed, const PointCloud& target, PointCloud* grad = nullptr);

/// Chamfer over descriptor rows with squared distances, summed in both directions.
double descriptor_chamfer(const RowMatrixXd& a, const RowMatrixXd& b, RowMatrixXd* grad_a = nullptr);

double loss_geo(const PointCloud& deformed, const PointCloud& target, int n_desc);
/// Same loss with the target's descriptors given; the deformed cloud's
/// descriptors are rebuilt here and differentiated with its neighbour lists frozen.
double loss_geo(const PointCloud& deformed, const DescriptorSet& target_desc, PointCloud* grad = nullptr);

double loss_total(const PointCloud& deformed, const PointCloud& target, const RegistrationConfig& config);
double loss_total(const PointCloud& deformed, const PointCloud& target, const DescriptorSet& target_desc,
                  double alpha, PointCloud* grad = nullptr);

/// Mean-form symmetric Chamfer distance in mm:
/// (mean_a min_b |a-b| + mean_b min_a |a-b|) / 2.
double chamfer_distance(const PointCloud& a, const PointCloud& b);

struct TrainingPair {
  PointCloud source;
  PointCloud target;
  DisplacementField ground_truth;  // optional for training; used by oracle predictors
  DescriptorSet source_desc;
  DescriptorSet target_desc;
};

struct TrainOptions {
  int epochs = 300;
  double lr = 1e-3;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double train_loss, double val_rmse)> on_epoch;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_rmse = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  GeraModel best;
  GeraModel last;
  int best_epoch = 0;
  std::vector<EpochStats> history;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, GeraModel last_finite, std::vector<EpochStats> history)
      : Error(what), last_finite(std::move(last_finite)), history(std::move(history)) {}
  GeraModel last_finite;
  std::vector<EpochStats> history;
};

/// Batch size 1, pairs visited in a per-epoch seeded shuffle, Adam on
/// loss_total. Keeps the parameters with the lowest validation RMSE.
TrainResult train(GeraModel model, std::span<const TrainingPair> train_set,
                  std::span<const TrainingPair> val_set, const TrainOptions& options);

double mean_rmse(const GeraModel& model, std::span<const TrainingPair> pairs);

struct EvalReport {
  double rmse_mm = 0.0;
  double cd_mm = 0.0;
  double it_ms = 0.0;
  double tt_s = 0.0;
};

using Predictor = std::function<DisplacementField(const TrainingPair&)>;

/// Mean RMSE against the target's point order and mean Chamfer distance; it_ms
/// is the median over at least `timing_runs` timed predictions.
EvalReport evaluate(std::span<const TrainingPair> test_set, const Predictor& predict,
                    int timing_runs = 20, double tt_s = 0.0);
EvalReport evaluate(std::span<const TrainingPair> test_set, const GeraModel& model,
                    int timing_runs = 20, double tt_s = 0.0);

/// One embedding row per input: max pool of the encoder over that cloud's rows.
Eigen::MatrixXd embed(const nn::Mlp& encoder, std::span<const RowMatrixXd> inputs);

struct StabilityResult {
  MmdReport coordinate;
  MmdReport geometric;
};

/// Compares batch-to-batch MMD^2 of coordinate-input and descriptor-input
/// embeddings. Without an explicit sigma, the median heuristic over all
/// coordinate embeddings sets one bandwidth shared by both encodings.
StabilityResult stability_study(std::span<const PointCloud> clouds,
                                std::span<const DescriptorSet> descriptors,
                                const nn::Mlp& coordinate_encoder, const nn::Mlp& geometric_encoder,
                                int batch_size, const MmdConfig& config);

}  // namespace gera
