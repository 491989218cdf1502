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

#include "gera/mmd.hpp"

namespace gera {

MmdSummary summarize(const std::vector<MmdPair>& pairs) {
  if (pairs.empty()) throw Error("summarize: no MMD values");
  MmdSummary s{pairs.front().mmd2, 0.0, pairs.front().mmd2};
  double sum = 0.0;
  for (const auto& p : pairs) {
    s.min = std::min(s.min, p.mmd2);
    s.max = std::max(s.max, p.mmd2);
    sum += p.mmd2;
  }
  // Clamp so rounding in the mean cannot break min <= mean <= max.
  s.mean = std::clamp(sum / static_cast<double>(pairs.size()), s.min, s.max);
  return s;
}

MmdReport batch_pair_mmd(const Eigen::MatrixXd& embeddings, int batch_size, double sigma,
                         MmdEstimator estimator, std::string encoding) {
  if (batch_size < 1) throw Error("batch size must be positive");
  const auto batches = static_cast<int>(embeddings.rows() / batch_size);
  if (batches < 2)
    throw Error("stability study needs at least 2 full batches of " + std::to_string(batch_size) +
                ", have " + std::to_string(embeddings.rows()) + " samples");
  MmdReport report;
  report.encoding = std::move(encoding);
  report.sigma = sigma;
  for (int a = 0; a < batches; ++a)
    for (int b = a + 1; b < batches; ++b)
      report.pairs.push_back({a, b,
                              mmd2(embeddings.middleRows(a * batch_size, batch_size),
                                   embeddings.middleRows(b * batch_size, batch_size), sigma,
                                   estimator)});
  report.summary = summarize(report.pairs);
  return report;
}

}  // namespace gera
