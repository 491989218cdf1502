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

#include "gera/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gera {

enum class CloudFormat { xyz, ply_ascii };

/// Picks the format from the extension: ".ply" is ply-ascii, anything else xyz.
CloudFormat format_from_path(const std::filesystem::path& path);

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
PointCloud load_cloud(const std::filesystem::path& path);

/// Writes with 17 significant digits so a reload is exact.
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

PointCloud parse_xyz(std::string_view text);
PointCloud parse_ply_ascii(std::string_view text);

// Descriptor cache: "GERADESC" | u32 version | u32 n_desc | u64 M | u64 d | M*d f64,
// all little-endian.
inline constexpr char kDescriptorMagic[8] = {'G', 'E', 'R', 'A', 'D', 'E', 'S', 'C'};
inline constexpr std::uint32_t kDescriptorVersion = 1;
inline constexpr std::size_t kDescriptorHeaderBytes = 32;

std::string encode_descriptors(const DescriptorSet& desc);
DescriptorSet decode_descriptors(std::string_view bytes);
void save_descriptors(const DescriptorSet& desc, const std::filesystem::path& path);
DescriptorSet load_descriptors(const std::filesystem::path& path);

enum class Split { train, val, test };
std::string_view to_string(Split split);
Split split_from_string(std::string_view s);

struct ManifestRecord {
  std::string source;  // paths relative to the manifest directory
  std::string target;
  std::string ground_truth;
  double deform_mm = 0.0;
  double noise_min_mm = 0.0;
  double noise_max_mm = 0.0;
  std::uint64_t seed = 0;
  Split split = Split::train;
  int base = 0;

  bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path root;  // directory that record paths are relative to

  std::vector<const ManifestRecord*> split(Split s) const;
  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

/// One JSON object per line.
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Also checks that every referenced cloud exists and parses.
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// FNV-1a over raw bytes.
std::uint64_t content_hash(std::string_view bytes);

}  // namespace gera
