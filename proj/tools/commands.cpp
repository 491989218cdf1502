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

#include "gera/deform.hpp"
#include "gera/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <ostream>
#include <set>
#include <sstream>

namespace gera::app {

using Clock = std::chrono::steady_clock;
using json = nlohmann::ordered_json;

fs::path default_cache_dir(const fs::path& manifest) { return manifest.parent_path() / "descriptors"; }

std::array<int, 3> parse_split(const std::string& text) {
  std::array<int, 3> out{};
  std::istringstream ss(text);
  std::string part;
  int i = 0;
  while (std::getline(ss, part, ':')) {
    if (i >= 3) throw Error("split must have three parts, e.g. 8:1:1");
    try {
      out[static_cast<std::size_t>(i++)] = std::stoi(part);
    } catch (const std::exception&) {
      throw Error("bad split '" + text + "'");
    }
  }
  if (i != 3) throw Error("split must have three parts, e.g. 8:1:1");
  return out;
}

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> out;
  std::istringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw Error("bad layer widths '" + text + "'");
    }
    if (out.back() < 1) throw Error("layer widths must be positive");
  }
  if (out.empty()) throw Error("empty layer widths");
  return out;
}

// ---------------------------------------------------------------------------

fs::path run_gen(const GenOptions& o, std::ostream& log) {
  if (o.out.empty()) throw Error("gen: --out is required");
  if (o.noise_min_mm < 0 || o.noise_max_mm < o.noise_min_mm) throw Error("gen: bad noise range");
  if (o.points < 1) throw Error("gen: --points must be positive");
  std::vector<PointCloud> bases;
  if (o.bases) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(*o.bases)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".xyz" || ext == ".ply")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) bases.push_back(load_cloud(f));
    log << "gen: loaded " << bases.size() << " base clouds from " << o.bases->string() << "\n";
  } else {
    if (o.count < 1) throw Error("gen: --count must be positive");
    bases = make_base_shapes(o.count, std::max(o.base_points, o.points), Rng::mix(o.seed, 0xba5e));
  }

  DatasetConfig cfg;
  cfg.split_ratio = parse_split(o.split);
  cfg.repetitions = o.repeats;
  cfg.points = o.points;
  cfg.deform_mm = o.deform_mm;
  cfg.noise_mm = {o.noise_min_mm, o.noise_max_mm};
  cfg.deform.controls = o.controls;
  if (o.magnitude == "max") {
    cfg.deform.mode = MagnitudeMode::max_norm;
  } else if (o.magnitude == "mean") {
    cfg.deform.mode = MagnitudeMode::mean_norm;
  } else {
    throw Error("gen: --magnitude must be max or mean");
  }
  const Dataset ds = build_dataset(bases, cfg, o.seed);
  const fs::path manifest = write_dataset(ds, o.out);
  const auto counts = split_counts(static_cast<int>(bases.size()), cfg.split_ratio);
  log << "gen: " << ds.pairs.size() << " pairs (" << counts[0] << "/" << counts[1] << "/" << counts[2]
      << " bases) -> " << manifest.string() << "\n";
  return manifest;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> manifest_clouds(const DatasetManifest& m) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : m.records)
    for (const auto* rel : {&r.source, &r.target})
      if (seen.insert(*rel).second) out.push_back(*rel);
  return out;
}

void attach_warnings(DescriptorStore& store, std::ostream& log) {
  store.warn = [&log](const std::string& msg) { log << "warning: " << msg << "\n"; };
}

}  // namespace

EncodeStats run_encode(const EncodeOptions& o, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(o.manifest, false);
  DescriptorStore store(o.out ? *o.out : default_cache_dir(o.manifest), o.n_desc);
  attach_warnings(store, log);
  EncodeStats stats;
  for (const auto& rel : manifest_clouds(manifest)) {
    DescriptorStore::Outcome outcome;
    store.get(manifest.resolve(rel), rel, &outcome);
    ++stats.clouds;
    switch (outcome) {
      case DescriptorStore::Outcome::hit: ++stats.skipped; break;
      case DescriptorStore::Outcome::encoded: ++stats.encoded; break;
      case DescriptorStore::Outcome::recovered: ++stats.recovered; break;
    }
  }
  log << "encode: " << stats.clouds << " clouds, " << stats.encoded << " encoded, " << stats.skipped
      << " up to date, " << stats.recovered << " re-encoded\n";
  return stats;
}

std::vector<TrainingPair> load_pairs(const DatasetManifest& manifest, Split split, DescriptorStore& store) {
  std::vector<TrainingPair> out;
  for (const auto* r : manifest.split(split)) {
    TrainingPair p;
    p.source = load_cloud(manifest.resolve(r->source));
    p.target = load_cloud(manifest.resolve(r->target));
    p.ground_truth = load_cloud(manifest.resolve(r->ground_truth));
    if (p.ground_truth.rows() != p.source.rows())
      throw Error("ground truth of " + r->source + " has the wrong point count");
    p.source_desc = store.get(manifest.resolve(r->source), r->source);
    p.target_desc = store.get(manifest.resolve(r->target), r->target);
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string history_jsonl(const std::vector<EpochStats>& history) {
  std::string out;
  for (const auto& h : history) {
    json j;
    j["epoch"] = h.epoch;
    j["train_loss"] = h.train_loss;
    j["val_rmse"] = h.val_rmse;
    j["epoch_seconds"] = h.seconds;
    out += j.dump() + "\n";
  }
  return out;
}

fs::path history_path_for(const fs::path& model) {
  fs::path p = model;
  p += ".history.jsonl";
  return p;
}

}  // namespace

TrainSummary run_train(const TrainCliOptions& o, std::ostream& log) {
  if (o.out_model.empty()) throw Error("train: --out-model is required");
  const DatasetManifest manifest = load_manifest(o.manifest, false);
  DescriptorStore store(o.cache ? *o.cache : default_cache_dir(o.manifest), o.n_desc);
  attach_warnings(store, log);
  const auto train_set = load_pairs(manifest, Split::train, store);
  const auto val_set = load_pairs(manifest, Split::val, store);
  if (train_set.empty()) throw Error("train: manifest has an empty train split");

  RegistrationConfig cfg;
  cfg.n_desc = o.n_desc;
  cfg.alpha_loss = o.alpha;
  cfg.seed = o.seed;
  cfg.encoder_widths = o.encoder_widths;
  cfg.decoder_widths = o.decoder_widths;
  cfg.validate();

  TrainOptions topt;
  topt.epochs = o.epochs;
  topt.lr = o.lr;
  topt.alpha = o.alpha;
  topt.seed = o.seed;
  if (!o.quiet)
    topt.on_epoch = [&log, &o](int epoch, double loss, double val) {
      if (epoch == 1 || epoch % 10 == 0 || epoch == o.epochs)
        log << "epoch " << epoch << " train_loss " << loss << " val_rmse " << val << "\n";
    };
  const fs::path history = o.history ? *o.history : history_path_for(o.out_model);

  log << "train: " << train_set.size() << " train / " << val_set.size() << " val pairs, alpha=" << o.alpha
      << " (" << (o.alpha == 0.0 ? "GERA-xyz" : "GERA-geo") << "), descriptor constructions "
      << store.constructions() << "\n";
  TrainResult result;
  try {
    result = gera::train(GeraModel::create(cfg), train_set, val_set, topt);
  } catch (const TrainingDiverged& e) {
    nn::save_checkpoint(e.last_finite.to_checkpoint(), o.out_model);
    write_file(history, history_jsonl(e.history));
    throw;
  }
  nn::save_checkpoint(result.best.to_checkpoint(), o.out_model);
  write_file(history, history_jsonl(result.history));

  TrainSummary s;
  s.best_epoch = result.best_epoch;
  s.best_val_rmse = result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_rmse;
  s.descriptor_constructions = store.constructions();
  s.clouds = 2 * (train_set.size() + val_set.size());
  log << "train: best epoch " << s.best_epoch << " val_rmse " << s.best_val_rmse << " -> "
      << o.out_model.string() << "\n";
  return s;
}

// ---------------------------------------------------------------------------

void run_register(const RegisterOptions& o, std::ostream& out, std::ostream& log) {
  const GeraModel model = GeraModel::from_checkpoint(nn::load_checkpoint(o.model));
  const PointCloud src = load_cloud(o.src);
  const PointCloud tgt = load_cloud(o.tgt);
  const auto t0 = Clock::now();
  const DescriptorSet sd = encode_cloud(src, model.n_desc());
  const DescriptorSet td = encode_cloud(tgt, model.n_desc());
  const auto t1 = Clock::now();
  const DisplacementField field = gera_forward(src, tgt, sd, td, model);
  const auto t2 = Clock::now();
  const PointCloud deformed = apply_displacement(src, field);
  save_cloud(deformed, o.out);
  fs::path disp = o.displacement ? *o.displacement : o.out.parent_path() / (o.out.stem().string() + ".disp" + o.out.extension().string());
  save_cloud(field, disp);

  json j;
  j["points"] = src.rows();
  j["encode_ms"] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  j["inference_ms"] = std::chrono::duration<double, std::milli>(t2 - t1).count();
  if (tgt.rows() == src.rows()) {
    j["rmse_mm"] = loss_xyz(deformed, tgt);
  } else {
    j["rmse_mm"] = nullptr;
  }
  out << j.dump() << "\n";
  log << "register: wrote " << o.out.string() << " and " << disp.string() << "\n";
}

// ---------------------------------------------------------------------------

std::string format_eval_report(const EvalReport& r) {
  json j;
  j["rmse_mm"] = r.rmse_mm;
  j["cd_mm"] = r.cd_mm;
  j["it_ms"] = r.it_ms;
  j["tt_s"] = r.tt_s;
  return j.dump() + "\n";
}

EvalReport parse_eval_report(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  return {j.at("rmse_mm").get<double>(), j.at("cd_mm").get<double>(), j.at("it_ms").get<double>(),
          j.at("tt_s").get<double>()};
}

EvalReport run_eval(const EvalOptions& o, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(o.manifest, false);
  std::optional<GeraModel> model;
  if (!o.oracle) {
    if (!o.model) throw Error("eval: --model is required unless --oracle is given");
    model = GeraModel::from_checkpoint(nn::load_checkpoint(*o.model));
  }
  DescriptorStore store(o.cache ? *o.cache : default_cache_dir(o.manifest), model ? model->n_desc() : o.n_desc);
  attach_warnings(store, log);
  const auto test_set = load_pairs(manifest, Split::test, store);
  if (test_set.empty()) throw Error("eval: manifest has an empty test split");

  double tt_s = 0.0;
  if (model) {
    const fs::path hist = history_path_for(*o.model);
    if (fs::exists(hist)) {
      std::istringstream in(read_file(hist));
      std::string line;
      double sum = 0.0;
      int n = 0;
      while (std::getline(in, line))
        if (!line.empty()) {
          sum += nlohmann::json::parse(line).at("epoch_seconds").get<double>();
          ++n;
        }
      if (n > 0) tt_s = sum / n;
    }
  }
  EvalReport report;
  if (model) {
    report = evaluate(test_set, *model, o.timing_runs, tt_s);
  } else {
    report = evaluate(test_set, [](const TrainingPair& p) { return p.ground_truth; }, o.timing_runs, tt_s);
  }
  write_file(o.report, format_eval_report(report));
  log << "eval: " << test_set.size() << " test pairs, rmse " << report.rmse_mm << " mm, cd " << report.cd_mm
      << " mm, it " << report.it_ms << " ms\n";
  return report;
}

// ---------------------------------------------------------------------------

std::string format_mmd_report(const StabilityResult& result) {
  std::string out;
  for (const MmdReport* r : {&result.coordinate, &result.geometric}) {
    for (const auto& p : r->pairs) {
      json j;
      j["encoding"] = r->encoding;
      j["batch_a"] = p.batch_a;
      j["batch_b"] = p.batch_b;
      j["mmd2"] = p.mmd2;
      out += j.dump() + "\n";
    }
  }
  for (const MmdReport* r : {&result.coordinate, &result.geometric}) {
    json j;
    j["encoding"] = r->encoding;
    j["summary"] = true;
    j["sigma"] = r->sigma;
    j["pairs"] = r->pairs.size();
    j["min"] = r->summary.min;
    j["mean"] = r->summary.mean;
    j["max"] = r->summary.max;
    out += j.dump() + "\n";
  }
  return out;
}

StabilityResult run_mmd(const MmdOptions& o, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(o.manifest, false);
  const auto rels = manifest_clouds(manifest);
  if (o.batch < 1) throw Error("mmd: --batch must be positive");
  if (rels.size() < 2 * static_cast<std::size_t>(o.batch))
    throw Error("mmd: need at least " + std::to_string(2 * o.batch) + " clouds, manifest has " +
                std::to_string(rels.size()));
  DescriptorStore store(o.cache ? *o.cache : default_cache_dir(o.manifest), o.n_desc);
  attach_warnings(store, log);
  std::vector<PointCloud> clouds;
  std::vector<DescriptorSet> descs;
  for (const auto& rel : rels) {
    clouds.push_back(load_cloud(manifest.resolve(rel)));
    descs.push_back(store.get(manifest.resolve(rel), rel));
  }

  MmdConfig cfg;
  if (o.sigma != "median") {
    try {
      cfg.sigma = std::stod(o.sigma);
    } catch (const std::exception&) {
      throw Error("mmd: --sigma must be 'median' or a positive number");
    }
    if (!(*cfg.sigma > 0)) throw Error("mmd: --sigma must be positive");
  }
  if (o.estimator == "biased") {
    cfg.estimator = MmdEstimator::biased;
  } else if (o.estimator == "unbiased") {
    cfg.estimator = MmdEstimator::unbiased;
  } else {
    throw Error("mmd: --estimator must be biased or unbiased");
  }

  std::vector<int> coord_w{3}, geo_w{static_cast<int>(pair_count(o.n_desc))};
  coord_w.insert(coord_w.end(), o.encoder_widths.begin(), o.encoder_widths.end());
  geo_w.insert(geo_w.end(), o.encoder_widths.begin(), o.encoder_widths.end());
  Rng coord_rng(Rng::mix(o.seed, 11)), geo_rng(Rng::mix(o.seed, 12));
  const nn::Mlp coord_enc = nn::Mlp::init(coord_w, true, coord_rng);
  const nn::Mlp geo_enc = nn::Mlp::init(geo_w, true, geo_rng);

  const StabilityResult result = stability_study(clouds, descs, coord_enc, geo_enc, o.batch, cfg);
  write_file(o.report, format_mmd_report(result));
  for (const MmdReport* r : {&result.coordinate, &result.geometric})
    log << "mmd: " << r->encoding << " min " << r->summary.min << " mean " << r->summary.mean << " max "
        << r->summary.max << " (sigma " << r->sigma << ", " << r->pairs.size() << " batch pairs)\n";
  return result;
}

}  // namespace gera::app
