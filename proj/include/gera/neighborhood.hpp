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

#include "gera/parallel.hpp"
#include "gera/types.hpp"

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

namespace gera {

namespace detail {

// Both search paths must evaluate distances with this exact expression so that
// tie-breaking is identical.
template <typename Scalar>
inline Scalar sq_dist(const Scalar* a, const Scalar* b) {
  const Scalar dx = a[0] - b[0];
  const Scalar dy = a[1] - b[1];
  const Scalar dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

template <typename Scalar>
struct Candidate {
  Scalar d2;
  int index;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

inline void check_k(Eigen::Index m, int k) {
  if (k <= 0) throw Error("k must be positive");
  if (k >= m)
    throw Error("k=" + std::to_string(k) + " needs more than " + std::to_string(m) + " points");
}

}  // namespace detail

/// Exhaustive search. Ties go to the lower point index; the query never lists itself.
template <typename Scalar>
NeighborList knn_brute(const Points3<Scalar>& cloud, int k) {
  const Eigen::Index m = cloud.rows();
  detail::check_k(m, k);
  NeighborList out(m, k);
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t begin, std::size_t end) {
    std::vector<detail::Candidate<Scalar>> all(static_cast<std::size_t>(m - 1));
    for (std::size_t q = begin; q < end; ++q) {
      const Scalar* qp = cloud.row(static_cast<Eigen::Index>(q)).data();
      std::size_t c = 0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (static_cast<std::size_t>(j) == q) continue;
        all[c++] = {detail::sq_dist(qp, cloud.row(j).data()), static_cast<int>(j)};
      }
      std::partial_sort(all.begin(), all.begin() + k, all.end());
      for (int r = 0; r < k; ++r) out(static_cast<Eigen::Index>(q), r) = all[static_cast<std::size_t>(r)].index;
    }
  });
  return out;
}

/// Static 3-d tree with median splits on the widest axis. Queries are exact and
/// reproduce knn_brute ordering, ties included.
template <typename Scalar>
class KdTree3 {
 public:
  explicit KdTree3(const Points3<Scalar>& cloud) : cloud_(cloud) {
    order_.resize(static_cast<std::size_t>(cloud.rows()));
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(order_.size());
    if (!order_.empty()) root_ = build(0, static_cast<int>(order_.size()));
  }

  /// k nearest to point `query` of the indexed cloud, excluding `query` itself.
  void query_self(int query, int k, int* out) const {
    std::vector<detail::Candidate<Scalar>> heap;
    heap.reserve(static_cast<std::size_t>(k) + 1);
    search(root_, cloud_.row(query).data(), query, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    for (int r = 0; r < k; ++r) out[r] = heap[static_cast<std::size_t>(r)].index;
  }

 private:
  struct Node {
    int point = -1;  // splitting point
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end) {
    if (begin >= end) return -1;
    Eigen::Matrix<Scalar, 1, 3> lo = cloud_.row(order_[begin]);
    Eigen::Matrix<Scalar, 1, 3> hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(cloud_.row(order_[i]));
      hi = hi.cwiseMax(cloud_.row(order_[i]));
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                       const Scalar va = cloud_(a, axis), vb = cloud_(b, axis);
                       return va < vb || (va == vb && a < b);
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis, -1, -1});
    const int left = build(begin, mid);
    const int right = build(mid + 1, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void offer(std::vector<detail::Candidate<Scalar>>& heap, int k,
             detail::Candidate<Scalar> c) const {
    if (static_cast<int>(heap.size()) < k) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end());
    } else if (c < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search(int node, const Scalar* q, int self, int k,
              std::vector<detail::Candidate<Scalar>>& heap) const {
    if (node < 0) return;
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    const Scalar* p = cloud_.row(n.point).data();
    if (n.point != self) offer(heap, k, {detail::sq_dist(q, p), n.point});
    const Scalar diff = q[n.axis] - p[n.axis];
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    search(near, q, self, k, heap);
    // Equal distance to the plane must still be explored: a tie on the far side
    // may carry a lower index.
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().d2)
      search(far, q, self, k, heap);
  }

  const Points3<Scalar>& cloud_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Same contract and output as knn_brute, backed by KdTree3.
template <typename Scalar>
NeighborList knn_fast(const Points3<Scalar>& cloud, int k) {
  const Eigen::Index m = cloud.rows();
  detail::check_k(m, k);
  KdTree3<Scalar> tree(cloud);
  NeighborList out(m, k);
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q)
      tree.query_self(static_cast<int>(q), k, out.row(static_cast<Eigen::Index>(q)).data());
  });
  return out;
}

}  // namespace gera
