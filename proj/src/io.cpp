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

#include "gera/io.hpp"

#include "bytes.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gera {

namespace fs = std::filesystem;
using detail::get_le;
using detail::put_le;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::uint64_t content_hash(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

CloudFormat format_from_path(const fs::path& path) {
  return path.extension() == ".ply" ? CloudFormat::ply_ascii : CloudFormat::xyz;
}

namespace {

struct LineReader {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line_no = 0;

  bool next(std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  }
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(std::string_view tok, std::size_t line_no) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("invalid number '" + std::string(tok) + "'", line_no);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(tok) + "'", line_no);
  return v;
}

void append_number(std::string& out, double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), ptr);
}

std::string format_rows(const PointCloud& cloud) {
  std::string out;
  out.reserve(static_cast<std::size_t>(cloud.rows()) * 60);
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    append_number(out, cloud(i, 0));
    out.push_back(' ');
    append_number(out, cloud(i, 1));
    out.push_back(' ');
    append_number(out, cloud(i, 2));
    out.push_back('\n');
  }
  return out;
}

PointCloud to_cloud(const std::vector<double>& flat) {
  PointCloud cloud(static_cast<Eigen::Index>(flat.size() / 3), 3);
  std::copy(flat.begin(), flat.end(), cloud.data());
  return cloud;
}

}  // namespace

PointCloud parse_xyz(std::string_view text) {
  LineReader reader{text};
  std::string_view line;
  std::vector<double> flat;
  while (reader.next(line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 3)
      throw ParseError("expected 3 coordinates, found " + std::to_string(toks.size()),
                       reader.line_no);
    for (auto t : toks) flat.push_back(parse_number(t, reader.line_no));
  }
  if (flat.empty()) throw Error("empty point cloud");
  return to_cloud(flat);
}

PointCloud parse_ply_ascii(std::string_view text) {
  LineReader reader{text};
  std::string_view line;
  if (!reader.next(line) || line != "ply") throw ParseError("missing 'ply' magic", 1);

  long long vertex_count = -1;
  bool in_vertex = false;
  bool ascii = false;
  std::vector<std::string> props;
  bool header_done = false;
  while (reader.next(line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "comment" || toks[0] == "obj_info") continue;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii")
        throw ParseError("only ascii PLY is supported", reader.line_no);
      ascii = true;
    } else if (toks[0] == "element") {
      if (toks.size() != 3) throw ParseError("malformed element line", reader.line_no);
      long long count = static_cast<long long>(parse_number(toks[2], reader.line_no));
      in_vertex = toks[1] == "vertex";
      if (in_vertex) {
        vertex_count = count;
      } else if (count != 0) {
        throw ParseError("unsupported PLY element '" + std::string(toks[1]) + "'", reader.line_no);
      }
    } else if (toks[0] == "property") {
      if (toks.size() < 3) throw ParseError("malformed property line", reader.line_no);
      if (in_vertex) {
        if (toks[1] == "list") throw ParseError("list properties on vertices", reader.line_no);
        props.emplace_back(toks.back());
      }
    } else if (toks[0] == "end_header") {
      header_done = true;
      break;
    } else {
      throw ParseError("unexpected header line", reader.line_no);
    }
  }
  if (!header_done) throw ParseError("missing end_header", reader.line_no);
  if (!ascii) throw ParseError("missing format line", reader.line_no);
  if (vertex_count <= 0) throw Error("empty point cloud");
  int ix = -1, iy = -1, iz = -1;
  for (int p = 0; p < static_cast<int>(props.size()); ++p) {
    if (props[p] == "x") ix = p;
    if (props[p] == "y") iy = p;
    if (props[p] == "z") iz = p;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex lacks x/y/z properties", reader.line_no);

  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(vertex_count) * 3);
  long long read = 0;
  while (reader.next(line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (read == vertex_count) throw ParseError("more vertex rows than declared", reader.line_no);
    if (toks.size() != props.size())
      throw ParseError("vertex row has " + std::to_string(toks.size()) + " values, expected " +
                           std::to_string(props.size()),
                       reader.line_no);
    flat.push_back(parse_number(toks[ix], reader.line_no));
    flat.push_back(parse_number(toks[iy], reader.line_no));
    flat.push_back(parse_number(toks[iz], reader.line_no));
    ++read;
  }
  if (read != vertex_count)
    throw ParseError("declared " + std::to_string(vertex_count) + " vertices, found " +
                         std::to_string(read),
                     reader.line_no);
  return to_cloud(flat);
}

PointCloud load_cloud(const fs::path& path, CloudFormat format) {
  const std::string text = read_file(path);
  return format == CloudFormat::xyz ? parse_xyz(text) : parse_ply_ascii(text);
}

PointCloud load_cloud(const fs::path& path) { return load_cloud(path, format_from_path(path)); }

void save_cloud(const PointCloud& cloud, const fs::path& path, CloudFormat format) {
  if (cloud.rows() == 0) throw Error("refusing to write an empty point cloud");
  require_finite(cloud, "cloud");
  std::string out;
  if (format == CloudFormat::ply_ascii) {
    out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.rows()) +
          "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  }
  out += format_rows(cloud);
  write_file(path, out);
}

void save_cloud(const PointCloud& cloud, const fs::path& path) {
  save_cloud(cloud, path, format_from_path(path));
}

// ---------------------------------------------------------------------------
// Descriptor cache

std::string encode_descriptors(const DescriptorSet& desc) {
  validate(desc);
  std::string out;
  const auto payload = static_cast<std::size_t>(desc.vectors.size());
  out.reserve(kDescriptorHeaderBytes + payload * 8);
  out.append(kDescriptorMagic, 8);
  put_le<std::uint32_t>(out, kDescriptorVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(desc.n_desc));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(desc.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(desc.dim()));
  const double* data = desc.vectors.data();
  for (std::size_t i = 0; i < payload; ++i) put_le<double>(out, data[i]);
  return out;
}

DescriptorSet decode_descriptors(std::string_view bytes) {
  if (bytes.size() < kDescriptorHeaderBytes) throw FormatError("descriptor file truncated header");
  if (std::memcmp(bytes.data(), kDescriptorMagic, 8) != 0)
    throw FormatError("bad descriptor magic");
  const auto version = get_le<std::uint32_t>(bytes.data() + 8);
  if (version != kDescriptorVersion)
    throw FormatError("unsupported descriptor version " + std::to_string(version));
  const auto n_desc = get_le<std::uint32_t>(bytes.data() + 12);
  const auto rows = get_le<std::uint64_t>(bytes.data() + 16);
  const auto dim = get_le<std::uint64_t>(bytes.data() + 24);
  if (n_desc < 2 || static_cast<std::int64_t>(dim) != pair_count(n_desc))
    throw FormatError("descriptor header inconsistent: d=" + std::to_string(dim) +
                      " n_desc=" + std::to_string(n_desc));
  if (rows == 0) throw FormatError("descriptor file has no rows");
  const std::uint64_t expected = kDescriptorHeaderBytes + rows * dim * 8;
  if (bytes.size() != expected)
    throw FormatError("descriptor payload size " + std::to_string(bytes.size()) +
                      " != expected " + std::to_string(expected));
  DescriptorSet desc;
  desc.n_desc = static_cast<int>(n_desc);
  desc.vectors.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  const char* p = bytes.data() + kDescriptorHeaderBytes;
  double* out = desc.vectors.data();
  for (std::uint64_t i = 0; i < rows * dim; ++i) out[i] = get_le<double>(p + 8 * i);
  validate(desc);
  return desc;
}

void save_descriptors(const DescriptorSet& desc, const fs::path& path) {
  write_file(path, encode_descriptors(desc));
}

DescriptorSet load_descriptors(const fs::path& path) { return decode_descriptors(read_file(path)); }

// ---------------------------------------------------------------------------
// Manifest

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error("unknown split '" + std::string(s) + "'");
}

std::vector<const ManifestRecord*> DatasetManifest::split(Split s) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    nlohmann::ordered_json j;
    j["source"] = r.source;
    j["target"] = r.target;
    j["ground_truth"] = r.ground_truth;
    j["deform_mm"] = r.deform_mm;
    j["noise_min_mm"] = r.noise_min_mm;
    j["noise_max_mm"] = r.noise_max_mm;
    j["seed"] = r.seed;
    j["split"] = to_string(r.split);
    j["base"] = r.base;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text, const fs::path& root) {
  DatasetManifest manifest;
  manifest.root = root;
  LineReader reader{text};
  std::string_view line;
  while (reader.next(line)) {
    if (split_ws(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.source = j.at("source").get<std::string>();
      r.target = j.at("target").get<std::string>();
      r.ground_truth = j.at("ground_truth").get<std::string>();
      r.deform_mm = j.at("deform_mm").get<double>();
      r.noise_min_mm = j.at("noise_min_mm").get<double>();
      r.noise_max_mm = j.at("noise_max_mm").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.split = split_from_string(j.at("split").get<std::string>());
      r.base = j.value("base", 0);
      manifest.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad manifest record: ") + e.what(), reader.line_no);
    }
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file(path, format_manifest(manifest));
}

DatasetManifest load_manifest(const fs::path& path, bool check_files) {
  auto manifest = parse_manifest(read_file(path), path.parent_path());
  if (check_files) {
    for (const auto& r : manifest.records) {
      for (const auto* rel : {&r.source, &r.target, &r.ground_truth}) {
        const auto p = manifest.resolve(*rel);
        if (!fs::exists(p)) throw Error("manifest references missing file " + p.string());
        load_cloud(p);
      }
    }
  }
  return manifest;
}

}  // namespace gera
