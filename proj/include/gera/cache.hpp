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

#include "gera/io.hpp"
#include "gera/types.hpp"

#include <filesystem>
#include <functional>
#include <string>

namespace gera {

/// On-disk descriptor cache. Each entry `<dir>/<rel>.n<k>.desc` has a sidecar
/// `.meta` (JSON) holding the content hash of the source cloud file and of the
/// cache payload; an entry is reused only when both still match.
class DescriptorStore {
 public:
  enum class Outcome { hit, encoded, recovered };

  DescriptorStore(std::filesystem::path dir, int n_desc);

  int n_desc() const { return n_desc_; }
  std::filesystem::path cache_path(const std::string& rel) const;

  /// `cloud_file` is read to hash and, on a miss, parsed and encoded.
  DescriptorSet get(const std::filesystem::path& cloud_file, const std::string& rel,
                    Outcome* outcome = nullptr);

  std::size_t hits() const { return hits_; }
  /// Number of descriptor constructions performed (misses plus recoveries).
  std::size_t constructions() const { return encoded_ + recovered_; }
  std::size_t recovered() const { return recovered_; }

  /// Receives one line per stale or corrupt entry.
  std::function<void(const std::string&)> warn;

 private:
  std::filesystem::path dir_;
  int n_desc_;
  std::size_t hits_ = 0;
  std::size_t encoded_ = 0;
  std::size_t recovered_ = 0;
};

}  // namespace gera
