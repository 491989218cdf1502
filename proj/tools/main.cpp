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

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace gera::app;

void add_widths(CLI::App* cmd, std::vector<int>& widths, const std::string& name, const std::string& help) {
  cmd->add_option_function<std::string>(
      name, [&widths](const std::string& s) { widths = parse_widths(s); }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gera: geometric-embedding non-rigid point cloud registration"};
  app.require_subcommand(1);

  GenOptions gen;
  std::string gen_bases;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic deformation dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--bases", gen_bases, "Directory of base clouds (.xyz/.ply); procedural shapes if omitted");
  gen_cmd->add_option("--count", gen.count, "Number of procedural base shapes")->capture_default_str();
  gen_cmd->add_option("--repeats", gen.repeats, "Pairs generated per base")->capture_default_str();
  gen_cmd->add_option("--deform-mm", gen.deform_mm, "Deformation magnitude (mm)")->capture_default_str();
  gen_cmd->add_option("--noise-mm-min", gen.noise_min_mm, "Minimum per-point noise (mm)")->capture_default_str();
  gen_cmd->add_option("--noise-mm-max", gen.noise_max_mm, "Maximum per-point noise (mm)")->capture_default_str();
  gen_cmd->add_option("--points", gen.points, "Points per cloud after downsampling")->capture_default_str();
  gen_cmd->add_option("--base-points", gen.base_points, "Procedural sampling density")->capture_default_str();
  gen_cmd->add_option("--controls", gen.controls, "TPS control points")->capture_default_str();
  gen_cmd->add_option("--magnitude", gen.magnitude, "Magnitude convention: max | mean")->capture_default_str();
  gen_cmd->add_option("--split", gen.split, "train:val:test ratio")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();

  EncodeOptions enc;
  std::string enc_out;
  auto* enc_cmd = app.add_subcommand("encode", "Build descriptor caches for every cloud in a manifest");
  enc_cmd->add_option("--manifest", enc.manifest)->required();
  enc_cmd->add_option("--n-desc", enc.n_desc, "Graph vertices per point")->capture_default_str();
  enc_cmd->add_option("--out", enc_out, "Cache directory (default: <manifest dir>/descriptors)");

  TrainCliOptions tr;
  std::string tr_cache, tr_history;
  auto* tr_cmd = app.add_subcommand("train", "Train a model on the manifest's train split");
  tr_cmd->add_option("--manifest", tr.manifest)->required();
  tr_cmd->add_option("--out-model", tr.out_model)->required();
  tr_cmd->add_option("--alpha", tr.alpha, "Geometric loss weight (0 = GERA-xyz)")->capture_default_str();
  tr_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  tr_cmd->add_option("--lr", tr.lr)->capture_default_str();
  tr_cmd->add_option("--seed", tr.seed)->capture_default_str();
  tr_cmd->add_option("--n-desc", tr.n_desc)->capture_default_str();
  tr_cmd->add_option("--cache", tr_cache, "Descriptor cache directory");
  tr_cmd->add_option("--history", tr_history, "History file (default: <out-model>.history.jsonl)");
  add_widths(tr_cmd, tr.encoder_widths, "--encoder-widths", "Comma-separated encoder widths");
  add_widths(tr_cmd, tr.decoder_widths, "--decoder-widths", "Comma-separated decoder hidden widths");
  tr_cmd->add_flag("--quiet", tr.quiet);

  RegisterOptions reg;
  std::string reg_disp;
  auto* reg_cmd = app.add_subcommand("register", "Register a source cloud to a target with a trained model");
  reg_cmd->add_option("--model", reg.model)->required();
  reg_cmd->add_option("--src", reg.src)->required();
  reg_cmd->add_option("--tgt", reg.tgt)->required();
  reg_cmd->add_option("--out", reg.out, "Deformed source cloud")->required();
  reg_cmd->add_option("--displacement", reg_disp, "Displacement field output");

  EvalOptions ev;
  std::string ev_model, ev_cache;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a model on the manifest's test split");
  ev_cmd->add_option("--manifest", ev.manifest)->required();
  ev_cmd->add_option("--report", ev.report)->required();
  ev_cmd->add_option("--model", ev_model);
  ev_cmd->add_option("--cache", ev_cache);
  ev_cmd->add_flag("--oracle", ev.oracle, "Use ground-truth displacements instead of a model");
  ev_cmd->add_option("--timing-runs", ev.timing_runs)->capture_default_str();
  ev_cmd->add_option("--n-desc", ev.n_desc, "Descriptor size when --oracle is used")->capture_default_str();

  MmdOptions mmd;
  std::string mmd_cache;
  auto* mmd_cmd = app.add_subcommand("mmd", "MMD stability study: coordinate vs geometric encodings");
  mmd_cmd->add_option("--manifest", mmd.manifest)->required();
  mmd_cmd->add_option("--report", mmd.report)->required();
  mmd_cmd->add_option("--batch", mmd.batch)->capture_default_str();
  mmd_cmd->add_option("--sigma", mmd.sigma, "'median' or a bandwidth")->capture_default_str();
  mmd_cmd->add_option("--estimator", mmd.estimator, "biased | unbiased")->capture_default_str();
  mmd_cmd->add_option("--n-desc", mmd.n_desc)->capture_default_str();
  mmd_cmd->add_option("--seed", mmd.seed)->capture_default_str();
  mmd_cmd->add_option("--cache", mmd_cache);
  add_widths(mmd_cmd, mmd.encoder_widths, "--encoder-widths", "Comma-separated encoder widths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen_cmd->parsed()) {
      if (!gen_bases.empty()) gen.bases = gen_bases;
      std::cout << run_gen(gen, std::cerr).string() << "\n";
    } else if (enc_cmd->parsed()) {
      if (!enc_out.empty()) enc.out = enc_out;
      const auto s = run_encode(enc, std::cerr);
      std::cout << "{\"clouds\":" << s.clouds << ",\"encoded\":" << s.encoded << ",\"skipped\":" << s.skipped
                << ",\"recovered\":" << s.recovered << "}\n";
    } else if (tr_cmd->parsed()) {
      if (!tr_cache.empty()) tr.cache = tr_cache;
      if (!tr_history.empty()) tr.history = tr_history;
      const auto s = run_train(tr, std::cerr);
      std::cout << "{\"best_epoch\":" << s.best_epoch << ",\"best_val_rmse\":" << s.best_val_rmse
                << ",\"descriptor_constructions\":" << s.descriptor_constructions << "}\n";
    } else if (reg_cmd->parsed()) {
      if (!reg_disp.empty()) reg.displacement = reg_disp;
      run_register(reg, std::cout, std::cerr);
    } else if (ev_cmd->parsed()) {
      if (!ev_model.empty()) ev.model = ev_model;
      if (!ev_cache.empty()) ev.cache = ev_cache;
      std::cout << format_eval_report(run_eval(ev, std::cerr));
    } else if (mmd_cmd->parsed()) {
      if (!mmd_cache.empty()) mmd.cache = mmd_cache;
      run_mmd(mmd, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
