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

// Per-point distance-geometry descriptors: every edge length of the complete
// graph over a point and its nearest neighbours.

#include "gera/neighborhood.hpp"
#include "gera/parallel.hpp"
#include "gera/types.hpp"

#include <cmath>

namespace gera {

template <typename Scalar>
struct TriangleDescriptor {
  Scalar alpha;  // |p_i - p_j|
  Scalar beta;   // |p_i - p_k|
  Scalar gamma;  // |p_j - p_k|
};

template <typename Scalar>
inline Scalar edge_length(const Scalar* a, const Scalar* b) {
  return std::sqrt(detail::sq_dist(a, b));
}

template <typename Scalar>
TriangleDescriptor<Scalar> triangle_descriptor(const Eigen::Matrix<Scalar, 3, 1>& pi,
                                               const Eigen::Matrix<Scalar, 3, 1>& pj,
                                               const Eigen::Matrix<Scalar, 3, 1>& pk) {
  if (!pi.allFinite() || !pj.allFinite() || !pk.allFinite())
    throw Error("triangle_descriptor: non-finite input");
  return {edge_length(pi.data(), pj.data()), edge_length(pi.data(), pk.data()),
          edge_length(pj.data(), pk.data())};
}

/// Vertex list [i, nbr_0, ..., nbr_{n_desc-2}] of point i's graph.
inline std::vector<int> graph_vertices(const NeighborList& neighbors, Eigen::Index i, int n_desc) {
  if (neighbors.cols() < n_desc - 1)
    throw Error("point_descriptor: need " + std::to_string(n_desc - 1) + " neighbours, have " +
                std::to_string(neighbors.cols()));
  std::vector<int> v(static_cast<std::size_t>(n_desc));
  v[0] = static_cast<int>(i);
  for (int r = 0; r < n_desc - 1; ++r) v[static_cast<std::size_t>(r) + 1] = neighbors(i, r);
  return v;
}

/// Writes the C(n_desc,2) edge lengths of point i's graph into `out`, pairs
/// (a, b), a < b over vertex-list positions, in lexicographic order.
template <typename Scalar, typename OutDerived>
void point_descriptor_into(const Points3<Scalar>& cloud, const NeighborList& neighbors,
                           Eigen::Index i, int n_desc, Eigen::MatrixBase<OutDerived> const& out_) {
  auto& out = const_cast<Eigen::MatrixBase<OutDerived>&>(out_);
  const auto v = graph_vertices(neighbors, i, n_desc);
  Eigen::Index e = 0;
  for (int a = 0; a < n_desc; ++a) {
    const Scalar* pa = cloud.row(v[static_cast<std::size_t>(a)]).data();
    for (int b = a + 1; b < n_desc; ++b)
      out(e++) = edge_length(pa, cloud.row(v[static_cast<std::size_t>(b)]).data());
  }
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> point_descriptor(const Points3<Scalar>& cloud,
                                                          const NeighborList& neighbors,
                                                          Eigen::Index i, int n_desc) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(pair_count(n_desc));
  point_descriptor_into(cloud, neighbors, i, n_desc, out);
  return out;
}

/// Descriptor rows from precomputed neighbour lists (used when the neighbour
/// topology must be held fixed, e.g. for differentiation).
template <typename Scalar>
RowMatrix<Scalar> descriptors_from_neighbors(const Points3<Scalar>& cloud,
                                             const NeighborList& neighbors, int n_desc) {
  RowMatrix<Scalar> rows(cloud.rows(), pair_count(n_desc));
  parallel_for(static_cast<std::size_t>(cloud.rows()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      point_descriptor_into(cloud, neighbors, r, n_desc, rows.row(r).transpose());
    }
  });
  return rows;
}

/// Geo(cloud): one descriptor row per point.
inline DescriptorSet encode_cloud(const PointCloud& cloud, int n_desc) {
  if (n_desc < 3) throw Error("n_desc must be at least 3");
  if (cloud.rows() <= n_desc)
    throw Error("cloud of " + std::to_string(cloud.rows()) + " points is too small for n_desc=" +
                std::to_string(n_desc));
  require_finite(cloud, "cloud");
  const NeighborList nbrs = knn_fast(cloud, n_desc - 1);
  return {descriptors_from_neighbors(cloud, nbrs, n_desc), n_desc};
}

}  // namespace gera
