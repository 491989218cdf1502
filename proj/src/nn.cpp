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

#include "gera/nn.hpp"

#include "bytes.hpp"
#include "gera/io.hpp"

#include <cmath>
#include <cstring>

namespace gera::nn {

using detail::get_le;
using detail::put_le;

RowMatrixXd dense_forward(const DenseLayer& layer, const RowMatrixXd& x) {
  if (x.cols() != layer.in())
    throw ShapeError("dense_forward: input width " + std::to_string(x.cols()) + " != layer input " +
                     std::to_string(layer.in()));
  RowMatrixXd y = x * layer.weights.transpose();
  y.rowwise() += layer.biases.transpose();
  return y;
}

RowMatrixXd relu(const RowMatrixXd& x) { return x.cwiseMax(0.0); }

RowMatrixXd relu_backward(const RowMatrixXd& grad_out, const RowMatrixXd& pre) {
  return (pre.array() > 0.0).select(grad_out, 0.0);
}

Pooled maxpool_points(const RowMatrixXd& features) {
  if (features.rows() == 0) throw Error("maxpool_points: empty input");
  Pooled p;
  p.values = features.row(0);
  p.argmax.assign(static_cast<std::size_t>(features.cols()), 0);
  for (Eigen::Index r = 1; r < features.rows(); ++r)
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      if (features(r, c) > p.values(c)) {
        p.values(c) = features(r, c);
        p.argmax[static_cast<std::size_t>(c)] = static_cast<int>(r);
      }
  return p;
}

RowMatrixXd maxpool_backward(const Eigen::RowVectorXd& grad, const std::vector<int>& argmax,
                             Eigen::Index rows) {
  RowMatrixXd out = RowMatrixXd::Zero(rows, grad.size());
  for (Eigen::Index c = 0; c < grad.size(); ++c) out(argmax[static_cast<std::size_t>(c)], c) = grad(c);
  return out;
}

Mlp::Mlp(std::vector<DenseLayer> layers, bool relu_last)
    : layers_(std::move(layers)), relu_last_(relu_last) {
  for (std::size_t i = 1; i < layers_.size(); ++i)
    if (layers_[i].in() != layers_[i - 1].out()) throw ShapeError("Mlp: inconsistent layer widths");
}

Mlp Mlp::init(const std::vector<int>& widths, bool relu_last, Rng& rng) {
  if (widths.size() < 2) throw Error("Mlp::init: need input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i], out = widths[i + 1];
    if (in <= 0 || out <= 0) throw Error("Mlp::init: widths must be positive");
    const double bound = std::sqrt(6.0 / in);
    DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) l.weights(r, c) = rng.uniform(-bound, bound);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers), relu_last);
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(static_cast<int>(layers_.front().in()));
  for (const auto& l : layers_) w.push_back(static_cast<int>(l.out()));
  return w;
}

RowMatrixXd Mlp::forward(const RowMatrixXd& x, Tape* tape, int first_layer) const {
  if (tape) {
    *tape = Tape{};
    tape->first_layer = first_layer;
  }
  RowMatrixXd h = x;
  for (std::size_t i = static_cast<std::size_t>(first_layer); i < layers_.size(); ++i) {
    RowMatrixXd z = dense_forward(layers_[i], h);
    if (tape) tape->inputs.push_back(std::move(h));
    if (activated(i)) {
      h = relu(z);
      if (tape) tape->pre.push_back(std::move(z));
    } else {
      h = std::move(z);
      if (tape) tape->pre.emplace_back();
    }
  }
  return h;
}

RowMatrixXd Mlp::backward(Tape& tape, const RowMatrixXd& grad_out, std::vector<LayerGrad>& grads,
                          bool need_input_grad) const {
  if (tape.consumed) throw TapeReuseError();
  tape.consumed = true;
  if (grads.size() != layers_.size()) throw ShapeError("Mlp::backward: gradient buffer mismatch");
  RowMatrixXd g = grad_out;
  const auto first = static_cast<std::size_t>(tape.first_layer);
  for (std::size_t i = layers_.size(); i-- > first;) {
    const std::size_t t = i - first;
    if (activated(i)) g = relu_backward(g, tape.pre[t]);
    grads[i].weights.noalias() += g.transpose() * tape.inputs[t];
    grads[i].biases += g.colwise().sum().transpose();
    if (i > first || need_input_grad) g = g * layers_[i].weights;
  }
  return need_input_grad ? g : RowMatrixXd();
}

std::vector<LayerGrad> Mlp::zero_grads() const {
  std::vector<LayerGrad> g;
  for (const auto& l : layers_)
    g.push_back({Eigen::MatrixXd::Zero(l.out(), l.in()), Eigen::VectorXd::Zero(l.out())});
  return g;
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
  return n;
}

void Mlp::flatten_into(Eigen::Ref<Eigen::VectorXd> out) const {
  if (out.size() != parameter_count()) throw ShapeError("flatten: size mismatch");
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.out(); ++r)
      for (Eigen::Index c = 0; c < l.in(); ++c) out(k++) = l.weights(r, c);
    out.segment(k, l.out()) = l.biases;
    k += l.out();
  }
}

void Mlp::assign_from(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != parameter_count()) throw ShapeError("assign: size mismatch");
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.out(); ++r)
      for (Eigen::Index c = 0; c < l.in(); ++c) l.weights(r, c) = flat(k++);
    l.biases = flat.segment(k, l.out());
    k += l.out();
  }
}

Eigen::VectorXd flatten(std::span<const LayerGrad> grads) {
  Eigen::Index n = 0;
  for (const auto& g : grads) n += g.weights.size() + g.biases.size();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (const auto& g : grads) {
    for (Eigen::Index r = 0; r < g.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < g.weights.cols(); ++c) out(k++) = g.weights(r, c);
    out.segment(k, g.biases.size()) = g.biases;
    k += g.biases.size();
  }
  return out;
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw ShapeError("adam_step: shape mismatch");
  const auto& hp = state.hp;
  ++state.step;
  state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * grads;
  state.v = hp.beta2 * state.v + (1.0 - hp.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  params.array() -=
      hp.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + hp.eps);
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, ckpt.tag);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.stacks.size()));
  for (const auto& mlp : ckpt.stacks) {
    const auto w = mlp.widths();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mlp.layers().size()));
    for (int x : w) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x));
    out.push_back(mlp.relu_last() ? 1 : 0);
  }
  for (const auto& mlp : ckpt.stacks) {
    Eigen::VectorXd flat(mlp.parameter_count());
    mlp.flatten_into(flat);
    for (Eigen::Index i = 0; i < flat.size(); ++i) put_le<double>(out, flat(i));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  std::size_t pos = 0;
  const auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw FormatError("checkpoint truncated");
  };
  const auto u32 = [&] {
    need(4);
    const auto v = get_le<std::uint32_t>(bytes.data() + pos);
    pos += 4;
    return v;
  };
  need(sizeof(kCheckpointMagic));
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw FormatError("bad checkpoint magic");
  pos = sizeof(kCheckpointMagic);
  const auto version = u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.tag = u32();
  const auto stacks = u32();
  if (stacks > 64) throw FormatError("implausible stack count");
  std::vector<std::vector<int>> widths(stacks);
  std::vector<bool> relu_last(stacks);
  for (std::uint32_t s = 0; s < stacks; ++s) {
    const auto layers = u32();
    if (layers == 0 || layers > 1024) throw FormatError("implausible layer count");
    for (std::uint32_t i = 0; i <= layers; ++i) {
      const auto w = u32();
      if (w == 0 || w > (1u << 20)) throw FormatError("implausible layer width");
      widths[s].push_back(static_cast<int>(w));
    }
    need(1);
    relu_last[s] = bytes[pos++] != 0;
  }
  for (std::uint32_t s = 0; s < stacks; ++s) {
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < widths[s].size(); ++i)
      layers.push_back({Eigen::MatrixXd::Zero(widths[s][i + 1], widths[s][i]),
                        Eigen::VectorXd::Zero(widths[s][i + 1])});
    Mlp mlp(std::move(layers), relu_last[s]);
    const auto n = static_cast<std::size_t>(mlp.parameter_count());
    need(n * 8);
    Eigen::VectorXd flat(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) flat(static_cast<Eigen::Index>(i)) = get_le<double>(bytes.data() + pos + 8 * i);
    pos += n * 8;
    if (!flat.allFinite()) throw FormatError("checkpoint contains non-finite parameters");
    mlp.assign_from(flat);
    ckpt.stacks.push_back(std::move(mlp));
  }
  if (pos != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace gera::nn
