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

// Dense layers, ReLU, max pooling over points and Adam, with hand-written
// reverse-mode gradients. Activations are row-per-point matrices.

#include "gera/random.hpp"
#include "gera/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gera::nn {

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out

  Eigen::Index in() const { return weights.cols(); }
  Eigen::Index out() const { return weights.rows(); }
};

/// Y = X W^T + b per row.
RowMatrixXd dense_forward(const DenseLayer& layer, const RowMatrixXd& x);

RowMatrixXd relu(const RowMatrixXd& x);
/// Gradient through relu given its input: grad * [pre > 0].
RowMatrixXd relu_backward(const RowMatrixXd& grad_out, const RowMatrixXd& pre);

struct Pooled {
  Eigen::RowVectorXd values;
  std::vector<int> argmax;  // first row attaining the column maximum
};

Pooled maxpool_points(const RowMatrixXd& features);
RowMatrixXd maxpool_backward(const Eigen::RowVectorXd& grad, const std::vector<int>& argmax,
                             Eigen::Index rows);

struct LayerGrad {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

/// Forward values kept for one backward pass.
struct Tape {
  std::vector<RowMatrixXd> inputs;  // input of each recorded layer
  std::vector<RowMatrixXd> pre;     // pre-activation of each recorded layer
  int first_layer = 0;
  bool consumed = false;
};

class TapeReuseError : public Error {
 public:
  TapeReuseError() : Error("tape already consumed by a backward pass") {}
};

/// Stack of dense layers with ReLU between them; the last layer is linear
/// unless relu_last is set.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<DenseLayer> layers, bool relu_last);

  /// widths = [in, hidden..., out]; uniform He fan-in init, zero biases.
  static Mlp init(const std::vector<int>& widths, bool relu_last, Rng& rng);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  bool relu_last() const { return relu_last_; }
  std::vector<int> widths() const;

  bool activated(std::size_t layer) const { return relu_last_ || layer + 1 < layers_.size(); }

  /// Runs layers [first_layer, end). `x` is the input of layer first_layer.
  RowMatrixXd forward(const RowMatrixXd& x, Tape* tape = nullptr, int first_layer = 0) const;

  /// Accumulates parameter gradients into `grads` and returns the gradient
  /// with respect to the tape's input (empty when need_input_grad is false).
  RowMatrixXd backward(Tape& tape, const RowMatrixXd& grad_out, std::vector<LayerGrad>& grads,
                       bool need_input_grad = true) const;

  std::vector<LayerGrad> zero_grads() const;

  Eigen::Index parameter_count() const;
  /// Per layer: weights row-major, then biases.
  void flatten_into(Eigen::Ref<Eigen::VectorXd> out) const;
  void assign_from(const Eigen::Ref<const Eigen::VectorXd>& flat);

 private:
  std::vector<DenseLayer> layers_;
  bool relu_last_ = false;
};

Eigen::VectorXd flatten(std::span<const LayerGrad> grads);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(Eigen::Index size, AdamConfig config)
      : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)), hp(config) {}

  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
  AdamConfig hp;
};

/// One bias-corrected Adam update of the flat parameter vector.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamState& state);

// Checkpoint: "GERANET" | u32 version | u32 tag | u32 stacks |
//   per stack: u32 layers, u32 widths[layers+1], u8 relu_last |
//   f64 parameters of every stack in order. All little-endian.
inline constexpr char kCheckpointMagic[7] = {'G', 'E', 'R', 'A', 'N', 'E', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t tag = 0;  // model-specific metadata
  std::vector<Mlp> stacks;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gera::nn
