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

#include "gera/cache.hpp"

#include "gera/geometry.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>

namespace gera {

namespace fs = std::filesystem;

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

DescriptorStore::DescriptorStore(fs::path dir, int n_desc) : dir_(std::move(dir)), n_desc_(n_desc) {
  if (n_desc < 3) throw Error("descriptor cache: n_desc must be at least 3");
}

fs::path DescriptorStore::cache_path(const std::string& rel) const {
  return dir_ / (rel + ".n" + std::to_string(n_desc_) + ".desc");
}

DescriptorSet DescriptorStore::get(const fs::path& cloud_file, const std::string& rel, Outcome* outcome) {
  const std::string cloud_bytes = read_file(cloud_file);
  const std::string source_hash = hex(content_hash(cloud_bytes));
  const fs::path path = cache_path(rel);
  fs::path meta_path = path;
  meta_path += ".meta";

  bool existed = false;
  if (fs::exists(path) || fs::exists(meta_path)) {
    existed = true;
    std::string problem;
    try {
      const auto meta = nlohmann::json::parse(read_file(meta_path));
      const std::string payload = read_file(path);
      if (meta.at("source_hash").get<std::string>() != source_hash) {
        problem = "stale (source cloud changed)";
      } else if (meta.at("n_desc").get<int>() != n_desc_) {
        problem = "stale (n_desc changed)";
      } else if (meta.at("payload_hash").get<std::string>() != hex(content_hash(payload))) {
        problem = "corrupt (payload hash mismatch)";
      } else {
        DescriptorSet desc = decode_descriptors(payload);
        if (desc.n_desc != n_desc_) throw FormatError("n_desc mismatch in payload");
        ++hits_;
        if (outcome) *outcome = Outcome::hit;
        return desc;
      }
    } catch (const std::exception& e) {
      problem = std::string("corrupt (") + e.what() + ")";
    }
    if (warn) warn("descriptor cache " + path.string() + " is " + problem + "; re-encoding");
  }

  const PointCloud cloud = format_from_path(cloud_file) == CloudFormat::ply_ascii
                               ? parse_ply_ascii(cloud_bytes)
                               : parse_xyz(cloud_bytes);
  DescriptorSet desc = encode_cloud(cloud, n_desc_);
  const std::string payload = encode_descriptors(desc);
  write_file(path, payload);
  nlohmann::ordered_json meta;
  meta["source_hash"] = source_hash;
  meta["n_desc"] = n_desc_;
  meta["payload_hash"] = hex(content_hash(payload));
  write_file(meta_path, meta.dump() + "\n");
  if (existed) {
    ++recovered_;
  } else {
    ++encoded_;
  }
  if (outcome) *outcome = existed ? Outcome::recovered : Outcome::encoded;
  return desc;
}

}  // namespace gera
