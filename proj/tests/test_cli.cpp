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

#include "commands.hpp"

#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace gera;
using namespace gera::app;
namespace gt = gera::test;
using nlohmann::json;

namespace {

GenOptions small_gen(const fs::path& out, std::uint64_t seed = 5) {
  GenOptions g;
  g.out = out;
  g.count = 3;
  g.base_points = 600;
  g.points = 128;
  g.seed = seed;
  return g;
}

TrainCliOptions small_train(const fs::path& manifest, const fs::path& model) {
  TrainCliOptions t;
  t.manifest = manifest;
  t.out_model = model;
  t.epochs = 3;
  t.n_desc = 5;
  t.encoder_widths = {8, 16};
  t.decoder_widths = {16, 8};
  t.quiet = true;
  return t;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

/// History rows without the wall-clock column.
std::vector<json> history_without_timing(const fs::path& path) {
  std::vector<json> out;
  for (const auto& l : lines(read_file(path))) {
    json j = json::parse(l);
    j.erase("epoch_seconds");
    out.push_back(j);
  }
  return out;
}

}  // namespace

TEST(CliParse, SplitAndWidths) {
  EXPECT_EQ(parse_split("8:1:1"), (std::array<int, 3>{8, 1, 1}));
  EXPECT_THROW(parse_split("8:1"), Error);
  EXPECT_THROW(parse_split("8:x:1"), Error);
  EXPECT_EQ(parse_widths("64,128,256"), (std::vector<int>{64, 128, 256}));
  EXPECT_THROW(parse_widths("64,,1"), Error);
  EXPECT_THROW(parse_widths("0"), Error);
}

TEST(CliGen, WritesManifestDeterministically) {
  gt::TempDir a("cli_gen_a"), b("cli_gen_b");
  std::ostringstream log;
  const fs::path ma = run_gen(small_gen(a.path()), log);
  const fs::path mb = run_gen(small_gen(b.path()), log);
  const DatasetManifest m = load_manifest(ma);
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(read_file(ma), read_file(mb));
  for (const auto& r : m.records) {
    EXPECT_EQ(read_file(a / r.target), read_file(b / r.target));
    EXPECT_EQ(load_cloud(m.resolve(r.source)).rows(), 128);
  }
  gt::TempDir c("cli_gen_c");
  const DatasetManifest other = load_manifest(run_gen(small_gen(c.path(), 6), log));
  EXPECT_NE(read_file(c / other.records[0].target), read_file(a / m.records[0].target));
}

TEST(CliGen, RejectsBadOptions) {
  gt::TempDir d("cli_gen_bad");
  std::ostringstream log;
  GenOptions g = small_gen(d.path());
  g.magnitude = "median";
  EXPECT_THROW(run_gen(g, log), Error);
  g = small_gen(d.path());
  g.noise_min_mm = 4.0;
  EXPECT_THROW(run_gen(g, log), Error);
}

TEST(CliGen, LoadsBaseClouds) {
  gt::TempDir d("cli_gen_bases");
  fs::create_directories(d / "bases");
  for (int i = 0; i < 3; ++i)
    save_cloud(gt::random_cloud(300, static_cast<std::uint64_t>(i), 40.0), d / "bases" / ("b" + std::to_string(i) + ".xyz"));
  GenOptions g = small_gen(d / "out");
  g.bases = d / "bases";
  std::ostringstream log;
  const DatasetManifest m = load_manifest(run_gen(g, log));
  EXPECT_EQ(m.records.size(), 3u);
}

TEST(CliEncode, SecondRunIsAllHits) {
  gt::TempDir d("cli_encode");
  std::ostringstream log;
  EncodeOptions e;
  e.manifest = run_gen(small_gen(d.path()), log);
  e.n_desc = 5;
  const EncodeStats first = run_encode(e, log);
  EXPECT_EQ(first.clouds, 6u);
  EXPECT_EQ(first.encoded, 6u);
  const EncodeStats second = run_encode(e, log);
  EXPECT_EQ(second.encoded, 0u);
  EXPECT_EQ(second.recovered, 0u);
  EXPECT_EQ(second.skipped, 6u);
}

TEST(CliTrain, HistoryAndDeterminism) {
  gt::TempDir d("cli_train");
  std::ostringstream log;
  const fs::path manifest = run_gen(small_gen(d.path()), log);
  const TrainSummary s = run_train(small_train(manifest, d / "m1.bin"), log);
  EXPECT_EQ(s.descriptor_constructions, s.clouds);
  EXPECT_EQ(lines(read_file(d / "m1.bin.history.jsonl")).size(), 3u);

  const TrainSummary again = run_train(small_train(manifest, d / "m2.bin"), log);
  EXPECT_EQ(again.descriptor_constructions, 0u);
  EXPECT_EQ(read_file(d / "m1.bin"), read_file(d / "m2.bin"));
  EXPECT_EQ(history_without_timing(d / "m1.bin.history.jsonl"), history_without_timing(d / "m2.bin.history.jsonl"));
  EXPECT_EQ(s.best_epoch, again.best_epoch);

  TrainCliOptions xyz = small_train(manifest, d / "m3.bin");
  xyz.alpha = 0.0;
  run_train(xyz, log);
  EXPECT_NE(read_file(d / "m1.bin"), read_file(d / "m3.bin"));
}

TEST(CliRegisterEval, EndToEnd) {
  gt::TempDir d("cli_reg");
  std::ostringstream log;
  const fs::path manifest = run_gen(small_gen(d.path()), log);
  run_train(small_train(manifest, d / "m.bin"), log);
  const DatasetManifest m = load_manifest(manifest);
  const ManifestRecord* rec = m.split(Split::test).front();

  RegisterOptions r;
  r.model = d / "m.bin";
  r.src = m.resolve(rec->source);
  r.tgt = m.resolve(rec->target);
  r.out = d / "deformed.xyz";
  std::ostringstream out;
  run_register(r, out, log);
  const json j = json::parse(out.str());
  EXPECT_EQ(j.at("points").get<int>(), 128);
  const PointCloud deformed = load_cloud(r.out);
  const PointCloud field = load_cloud(d / "deformed.disp.xyz");
  EXPECT_LE((deformed - load_cloud(r.src) - field).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(j.at("rmse_mm").get<double>(), loss_xyz(deformed, load_cloud(r.tgt)), 1e-9);

  // a rerun writes byte-identical clouds
  r.out = d / "deformed2.xyz";
  run_register(r, out, log);
  EXPECT_EQ(read_file(d / "deformed.xyz"), read_file(d / "deformed2.xyz"));

  // registering a cloud to itself: training shrinks the spurious displacement
  RegistrationConfig cfg;
  cfg.n_desc = 5;
  cfg.encoder_widths = {8, 16};
  cfg.decoder_widths = {16, 8};
  nn::save_checkpoint(GeraModel::create(cfg).to_checkpoint(), d / "untrained.bin");
  auto self_rmse = [&](const fs::path& model) {
    RegisterOptions s = r;
    s.model = model;
    s.tgt = s.src;
    s.out = d / "self.xyz";
    std::ostringstream o;
    run_register(s, o, log);
    return json::parse(o.str()).at("rmse_mm").get<double>();
  };
  EXPECT_LE(self_rmse(d / "m.bin"), self_rmse(d / "untrained.bin"));

  EvalOptions e;
  e.manifest = manifest;
  e.report = d / "report.json";
  e.model = d / "m.bin";
  const EvalReport rep = run_eval(e, log);
  const EvalReport back = parse_eval_report(read_file(e.report));
  EXPECT_EQ(back.rmse_mm, rep.rmse_mm);
  EXPECT_EQ(back.cd_mm, rep.cd_mm);
  EXPECT_GT(rep.it_ms, 0.0);
  EXPECT_GT(rep.tt_s, 0.0);
  EXPECT_NEAR(rep.rmse_mm, j.at("rmse_mm").get<double>(), 1e-9);  // one test pair

  EvalOptions oracle;
  oracle.manifest = manifest;
  oracle.report = d / "oracle.json";
  oracle.oracle = true;
  oracle.n_desc = 5;
  const EvalReport o = run_eval(oracle, log);
  // the ground truth leaves only the per-point noise of 1 to 3 mm
  EXPECT_GE(o.rmse_mm, 1.0);
  EXPECT_LE(o.rmse_mm, 3.0);

  EvalOptions missing = e;
  missing.model.reset();
  EXPECT_THROW(run_eval(missing, log), Error);
}

TEST(CliMmd, ReportShapeAndDeterminism) {
  gt::TempDir d("cli_mmd");
  std::ostringstream log;
  GenOptions g = small_gen(d.path());
  g.count = 4;
  g.repeats = 2;
  const fs::path manifest = run_gen(g, log);  // 16 clouds
  MmdOptions o;
  o.manifest = manifest;
  o.report = d / "mmd.jsonl";
  o.batch = 4;
  o.n_desc = 5;
  o.encoder_widths = {8, 16};
  const StabilityResult r = run_mmd(o, log);
  EXPECT_EQ(r.coordinate.pairs.size(), 6u);
  EXPECT_EQ(r.geometric.pairs.size(), 6u);
  EXPECT_EQ(r.coordinate.sigma, r.geometric.sigma);
  const std::string first = read_file(o.report);
  EXPECT_EQ(lines(first).size(), 14u);
  run_mmd(o, log);
  EXPECT_EQ(read_file(o.report), first);

  o.batch = 9;
  EXPECT_THROW(run_mmd(o, log), Error);
  o.batch = 4;
  o.estimator = "fancy";
  EXPECT_THROW(run_mmd(o, log), Error);
  o.estimator = "biased";
  o.sigma = "-1";
  EXPECT_THROW(run_mmd(o, log), Error);
}
