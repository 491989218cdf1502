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

#include "gera/types.hpp"

namespace gera {

void RegistrationConfig::validate() const {
  if (n_desc < 3) throw Error("n_desc must be at least 3, got " + std::to_string(n_desc));
  if (!(alpha_loss >= 0.0 && alpha_loss <= 1.0))
    throw Error("alpha_loss must lie in [0, 1]");
  if (encoder_widths.empty() || decoder_widths.empty())
    throw Error("encoder and decoder need at least one hidden layer");
  for (int w : encoder_widths)
    if (w <= 0) throw Error("layer widths must be positive");
  for (int w : decoder_widths)
    if (w <= 0) throw Error("layer widths must be positive");
}

void require_finite(const PointCloud& cloud, const char* what) {
  if (!cloud.allFinite()) throw Error(std::string(what) + " contains non-finite coordinates");
}

void validate(const DescriptorSet& desc) {
  if (desc.n_desc < 2) throw FormatError("descriptor n_desc must be at least 2");
  if (desc.dim() != pair_count(desc.n_desc))
    throw FormatError("descriptor width " + std::to_string(desc.dim()) + " != C(" +
                      std::to_string(desc.n_desc) + ",2)");
  if (!desc.vectors.allFinite()) throw FormatError("descriptor contains non-finite entries");
  if ((desc.vectors.array() < 0.0).any()) throw FormatError("descriptor contains negative lengths");
}

}  // namespace gera
