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

// Pipeline stages behind the `gera` subcommands. Each run_* function does the
// work of one subcommand; diagnostics go to `log`.

#include "gera/cache.hpp"
#include "gera/gera.hpp"
#include "gera/io.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gera::app {

namespace fs = std::filesystem;

struct GenOptions {
  fs::path out;
  std::optional<fs::path> bases;  // directory of .xyz/.ply base clouds; procedural if unset
  int count = 10;                 // procedural base shapes
  int repeats = 1;                // pairs per base
  int base_points = 10000;        // procedural sampling density before downsampling
  int points = 1024;
  double deform_mm = 19.0;
  double noise_min_mm = 1.0;
  double noise_max_mm = 3.0;
  int controls = 8;
  std::string magnitude = "max";  // max | mean
  std::string split = "8:1:1";
  std::uint64_t seed = 0;
};

struct EncodeOptions {
  fs::path manifest;
  int n_desc = 10;
  std::optional<fs::path> out;  // defaults to <manifest dir>/descriptors
};

struct EncodeStats {
  std::size_t clouds = 0;
  std::size_t encoded = 0;
  std::size_t skipped = 0;
  std::size_t recovered = 0;
};

struct TrainCliOptions {
  fs::path manifest;
  fs::path out_model;
  std::optional<fs::path> history;  // defaults to <out_model>.history.jsonl
  std::optional<fs::path> cache;
  double alpha = 0.5;
  int epochs = 300;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int n_desc = 10;
  std::vector<int> encoder_widths{64, 128, 256};
  std::vector<int> decoder_widths{256, 128, 64};
  bool quiet = false;
};

struct TrainSummary {
  int best_epoch = 0;
  double best_val_rmse = 0.0;
  std::size_t descriptor_constructions = 0;
  std::size_t clouds = 0;
};

struct RegisterOptions {
  fs::path model;
  fs::path src;
  fs::path tgt;
  fs::path out;
  std::optional<fs::path> displacement;  // defaults to <out stem>.disp<ext>
};

struct EvalOptions {
  fs::path manifest;
  fs::path report;
  std::optional<fs::path> model;  // required unless oracle
  std::optional<fs::path> cache;
  bool oracle = false;            // inject ground-truth displacements
  int timing_runs = 20;
  int n_desc = 10;                // only used with oracle
};

struct MmdOptions {
  fs::path manifest;
  fs::path report;
  std::optional<fs::path> cache;
  int batch = 32;
  std::string sigma = "median";
  std::string estimator = "biased";
  int n_desc = 10;
  std::uint64_t seed = 0;
  std::vector<int> encoder_widths{64, 128, 256};
};

fs::path run_gen(const GenOptions& options, std::ostream& log);
EncodeStats run_encode(const EncodeOptions& options, std::ostream& log);
TrainSummary run_train(const TrainCliOptions& options, std::ostream& log);
/// Writes one JSON line (inference_ms, encode_ms, points, rmse_mm) to `out`.
void run_register(const RegisterOptions& options, std::ostream& out, std::ostream& log);
EvalReport run_eval(const EvalOptions& options, std::ostream& log);
StabilityResult run_mmd(const MmdOptions& options, std::ostream& log);

/// Manifest pairs of one split with descriptors from `store`.
std::vector<TrainingPair> load_pairs(const DatasetManifest& manifest, Split split, DescriptorStore& store);

fs::path default_cache_dir(const fs::path& manifest);
std::array<int, 3> parse_split(const std::string& text);
std::vector<int> parse_widths(const std::string& text);

std::string format_eval_report(const EvalReport& report);
EvalReport parse_eval_report(const std::string& text);
std::string format_mmd_report(const StabilityResult& result);

}  // namespace gera::app
