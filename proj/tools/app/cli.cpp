// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "irisdeform/checkpoint.hpp"
#include "irisdeform/dataset.hpp"
#include "irisdeform/protocol.hpp"
#include "irisdeform/segmenter.hpp"
#include "irisdeform/synth.hpp"
#include "irisdeform/training.hpp"
#include "json.hpp"
#include "service.hpp"

namespace irisdeform::app {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << s;
}

// Options absent from the command line and environment take their value
// from the command's JSON config (keys are long flag names with '_' for '-').
void fill_from_config(CLI::App& cmd, const json& cfg, const std::vector<std::string>& skip = {}) {
  for (CLI::Option* opt : cmd.get_options()) {
    if (opt->count() > 0 || opt->get_lnames().empty()) continue;
    std::string key = opt->get_lnames().front();
    if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
    std::replace(key.begin(), key.end(), '-', '_');
    if (!cfg.contains(key)) continue;
    const json& v = cfg.at(key);
    if (v.is_string())
      opt->add_result(v.get<std::string>());
    else if (v.is_boolean())
      opt->add_result(v.get<bool>() ? "true" : "false");
    else
      opt->add_result(v.dump());
    opt->run_callback();
  }
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    json j = json::parse(read_text(path));
    if (!j.is_object()) throw ConfigError("config " + path + " must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
}

geometry::EyeAnnotation read_annotation(const fs::path& p) {
  return geometry::annotation_from_json(read_text(p));
}

FilterBank bank_or_default(const std::string& path) {
  return path.empty() ? default_filter_bank() : load_filter_bank(path);
}

std::vector<dataset::SampleRecord> manifest_part(const std::string& manifest, const std::string& split,
                                                 const std::string& partition) {
  auto records = dataset::read_manifest(manifest);
  if (split.empty()) return records;
  const auto s = dataset::read_split(split);
  if (partition == "train") return dataset::select_eyes(records, s.train_eyes);
  if (partition == "val") return dataset::select_eyes(records, s.val_eyes);
  if (partition == "test") return dataset::select_eyes(records, s.test_eyes);
  throw ConfigError("partition must be train, val or test");
}

std::vector<dataset::SampleRecord> samples_of(const std::vector<dataset::PairRecord>& pairs) {
  std::map<std::string, dataset::SampleRecord> m;
  for (const auto& p : pairs) {
    m.emplace(p.source.sample_id, p.source);
    m.emplace(p.target.sample_id, p.target);
  }
  std::vector<dataset::SampleRecord> out;
  for (auto& [id, r] : m) out.push_back(r);
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"irisdeform: iris texture deformation toolkit", "irisdeform"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "irisdeform 0.1.0");

  std::function<void()> action;
  auto common = [](CLI::App* cmd, std::string& config, std::uint64_t& seed, bool& seed_set) {
    cmd->add_option("--config", config, "JSON config file")->envname("IRISDEFORM_CONFIG");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&seed, &seed_set](std::uint64_t v) { seed = v; seed_set = true; }, "random seed")
        ->envname("IRISDEFORM_SEED");
  };

  // synth
  struct {
    std::string config, out, model;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int n_eyes = 0, frames = 0;
    double strength = -1;
  } sy;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic iris dataset");
  common(synth_cmd, sy.config, sy.seed, sy.seed_set);
  synth_cmd->add_option("--out", sy.out, "output directory")->required();
  synth_cmd->add_option("--n-eyes", sy.n_eyes, "override n_eyes");
  synth_cmd->add_option("--frames-per-eye", sy.frames, "override frames_per_eye");
  synth_cmd->add_option("--deformation-strength", sy.strength, "override deformation_strength");
  synth_cmd->add_option("--deformation-model", sy.model, "linear | gaussian-stretch");
  synth_cmd->callback([&] {
    action = [&] {
      synth::SynthConfig c = sy.config.empty() ? synth::SynthConfig{} : synth::SynthConfig::from_json(read_text(sy.config));
      if (sy.seed_set) c.seed = sy.seed;
      if (sy.n_eyes > 0) c.n_eyes = sy.n_eyes;
      if (sy.frames > 0) c.frames_per_eye = sy.frames;
      if (sy.strength >= 0) c.deformation_strength = sy.strength;
      if (!sy.model.empty()) c.deformation_model = synth::deformation_model_from_string(sy.model);
      c.validate();
      const auto records = synth::synth_generate(c, sy.out);
      out << json{{"records", records.size()}, {"manifest", (fs::path(sy.out) / "manifest.jsonl").string()}}.dump()
          << "\n";
    };
  });

  // pairs
  struct {
    std::string config, manifest, out, split, partition = "train";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int cap = dataset::kDefaultPairCap;
  } pa;
  auto* pairs_cmd = app.add_subcommand("pairs", "build same-eye pairs from lower to higher ratio bins");
  common(pairs_cmd, pa.config, pa.seed, pa.seed_set);
  pairs_cmd->add_option("--manifest", pa.manifest, "input manifest");
  pairs_cmd->add_option("--out", pa.out, "output pairs JSONL");
  pairs_cmd->add_option("--split", pa.split, "split JSON restricting the eyes used");
  pairs_cmd->add_option("--partition", pa.partition, "train | val | test (with --split)");
  pairs_cmd->add_option("--cap", pa.cap, "pairs per (source bin, target bin, eye)");
  pairs_cmd->callback([&] {
    action = [&] {
      fill_from_config(*pairs_cmd, load_config(pa.config), {"config"});
      if (pa.manifest.empty() || pa.out.empty()) throw ConfigError("pairs needs --manifest and --out");
      const auto records = manifest_part(pa.manifest, pa.split, pa.partition);
      const auto pairs = dataset::build_pairs(records, pa.cap, pa.seed);
      dataset::write_pairs(pa.out, pairs);
      out << json{{"pairs", pairs.size()}}.dump() << "\n";
    };
  });

  // split
  struct {
    std::string config, manifest, out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<double> fractions{0.7, 0.1, 0.2};
  } sp;
  auto* split_cmd = app.add_subcommand("split", "eye-disjoint train/val/test split");
  common(split_cmd, sp.config, sp.seed, sp.seed_set);
  split_cmd->add_option("--manifest", sp.manifest, "input manifest");
  split_cmd->add_option("--out", sp.out, "output split JSON");
  split_cmd->add_option("--fractions", sp.fractions, "train val test fractions")->expected(3)->delimiter(',');
  split_cmd->callback([&] {
    action = [&] {
      fill_from_config(*split_cmd, load_config(sp.config), {"config"});
      if (sp.manifest.empty() || sp.out.empty()) throw ConfigError("split needs --manifest and --out");
      if (sp.fractions.size() != 3) throw ConfigError("--fractions needs three values");
      const auto records = dataset::read_manifest(sp.manifest);
      const auto s = dataset::split_eye_disjoint(records, {sp.fractions[0], sp.fractions[1], sp.fractions[2]}, sp.seed);
      dataset::write_split(sp.out, s);
      out << json{{"train", s.train_eyes.size()}, {"val", s.val_eyes.size()}, {"test", s.test_eyes.size()}}.dump()
          << "\n";
    };
  });

  // train
  struct {
    std::string config, out, pairs, val_pairs, segmenter, bank, resume;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int max_steps = 0, seg_epochs = 40, seg_samples = 512;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "train the deformation model");
  common(train_cmd, tr.config, tr.seed, tr.seed_set);
  train_cmd->add_option("--out", tr.out, "run directory")->required();
  train_cmd->add_option("--pairs", tr.pairs, "training pairs JSONL")->required();
  train_cmd->add_option("--val-pairs", tr.val_pairs, "validation pairs JSONL");
  train_cmd->add_option("--segmenter", tr.segmenter, "frozen segmenter checkpoint (trained when absent)");
  train_cmd->add_option("--bank", tr.bank, "filter bank file (default bank when absent)");
  train_cmd->add_option("--resume", tr.resume, "checkpoint to resume from");
  train_cmd->add_option("--max-steps", tr.max_steps, "override max_steps");
  train_cmd->add_option("--segmenter-epochs", tr.seg_epochs, "epoch budget when training a segmenter");
  train_cmd->add_option("--segmenter-samples", tr.seg_samples, "images per segmenter epoch (0 = all)");
  train_cmd->callback([&] {
    action = [&] {
      const std::string text = tr.config.empty() ? std::string("{}") : read_text(tr.config);
      train::TrainConfig c = train::TrainConfig::from_json(text);
      if (tr.seed_set) c.seed = tr.seed;
      if (tr.max_steps > 0) c.max_steps = tr.max_steps;
      c.validate();
      fs::create_directories(tr.out);
      write_text(fs::path(tr.out) / "config.json", text);
      const auto pairs = dataset::read_pairs(tr.pairs);
      const auto val = tr.val_pairs.empty() ? std::vector<dataset::PairRecord>{} : dataset::read_pairs(tr.val_pairs);
      std::unique_ptr<Segmenter<float>> seg;
      if (!tr.segmenter.empty()) {
        seg = load_segmenter(tr.segmenter);
      } else {
        if (val.empty()) throw ConfigError("training a segmenter needs --val-pairs for its held-out check");
        SegmenterTrainConfig sc;
        sc.max_epochs = tr.seg_epochs;
        sc.samples_per_epoch = tr.seg_samples;
        sc.seed = c.seed + 11;
        SegmenterReport rep;
        seg = prepare_segmenter(samples_of(pairs), samples_of(val), {}, sc, &rep);
        save_segmenter(fs::path(tr.out) / "segmenter.bin", *seg,
                       json{{"val_iou", rep.val_iou}, {"epochs", rep.epochs}}.dump());
        out << json{{"segmenter_iou", rep.val_iou}, {"segmenter_epochs", rep.epochs}}.dump() << "\n";
      }
      train::LossResources res{seg.get(), bank_or_default(tr.bank)};
      train::TrainOptions opts;
      opts.resume_from = tr.resume;
      opts.on_step = [&err](const train::StepRecord& r) {
        if (r.step % 50 == 0) err << "step " << r.step << " total " << r.values.total << std::endl;
        return true;
      };
      const auto result = train::train(pairs, val, c, res, tr.out, opts);
      json summary = {{"steps", result.log.empty() ? 0 : result.log.back().step},
                      {"final_checkpoint", result.final_checkpoint.string()},
                      {"best_checkpoint", result.best_checkpoint.string()}};
      if (!result.log.empty()) summary["final_total"] = result.log.back().values.total;
      out << summary.dump() << "\n";
    };
  });

  // eval
  struct {
    std::string config, manifest, split, partition = "test", rectifier = "linear", ckpt, external_dir, report,
        roc_csv, roc_png, bank, export_pairs;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int repeats = 0;
    bool comparisons = false;
  } ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a rectifier with the gallery/probe protocol");
  common(eval_cmd, ev.config, ev.seed, ev.seed_set);
  eval_cmd->add_option("--manifest", ev.manifest, "manifest of evaluation frames")->required();
  eval_cmd->add_option("--split", ev.split, "split JSON; restricts to --partition");
  eval_cmd->add_option("--partition", ev.partition, "train | val | test");
  eval_cmd->add_option("--rectifier", ev.rectifier, "linear | model | external-dir")
      ->check(CLI::IsMember({"linear", "model", "external-dir"}));
  eval_cmd->add_option("--ckpt", ev.ckpt, "model checkpoint (model rectifier)");
  eval_cmd->add_option("--external-dir", ev.external_dir, "directory of rectified PNGs with index.json");
  eval_cmd->add_option("--out", ev.report, "report JSON path (stdout when absent)");
  eval_cmd->add_option("--roc-csv", ev.roc_csv, "write ROC points as CSV");
  eval_cmd->add_option("--roc-png", ev.roc_png, "render the ROC curve as PNG");
  eval_cmd->add_option("--bank", ev.bank, "filter bank file");
  eval_cmd->add_option("--repeats", ev.repeats, "override repeats");
  eval_cmd->add_option("--export-pairs", ev.export_pairs, "write the protocol's pair index JSON and exit");
  eval_cmd->add_flag("--comparisons", ev.comparisons, "include every comparison in the report");
  eval_cmd->callback([&] {
    action = [&] {
      eval::EvalConfig c = ev.config.empty() ? eval::EvalConfig{} : eval::EvalConfig::from_json(read_text(ev.config));
      if (ev.seed_set) c.seed = ev.seed;
      if (ev.repeats > 0) c.repeats = ev.repeats;
      c.validate();
      const auto test = manifest_part(ev.manifest, ev.split, ev.partition);
      if (!ev.export_pairs.empty()) {
        json pairs = json::array();
        for (const auto& p : eval::protocol_pairs(test, c))
          pairs.push_back({{"pair_id", p.pair_id}, {"probe", p.probe.sample_id}, {"gallery", p.gallery.sample_id}});
        write_text(ev.export_pairs, json{{"pairs", pairs}}.dump(2) + "\n");
        out << json{{"pairs", pairs.size()}}.dump() << "\n";
        return;
      }
      const FilterBank bank = bank_or_default(ev.bank);
      std::unique_ptr<nn::DeformNet<float>> model;
      std::unique_ptr<eval::Rectifier> rect;
      if (ev.rectifier == "linear") {
        rect = std::make_unique<eval::LinearRectifier>(c.grid_width, c.grid_height);
      } else if (ev.rectifier == "model") {
        if (ev.ckpt.empty()) throw ConfigError("model rectifier needs --ckpt");
        model = load_model(ev.ckpt);
        rect = std::make_unique<eval::ModelRectifier>(*model);
      } else {
        if (ev.external_dir.empty()) throw ConfigError("external-dir rectifier needs --external-dir");
        rect = std::make_unique<eval::ExternalDirRectifier>(ev.external_dir);
      }
      const auto report = eval::run_protocol(test, *rect, bank, c);
      const std::string text = report.to_json(ev.comparisons) + "\n";
      if (ev.report.empty())
        out << text;
      else
        write_text(ev.report, text);
      if (!ev.roc_csv.empty()) write_text(ev.roc_csv, report.roc_csv());
      if (!ev.roc_png.empty()) write_image_png(ev.roc_png, eval::render_roc(report.roc));
      for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    };
  });

  // deform
  struct {
    std::string config, in, ann, mask, ckpt, mode = "model", outp;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double ratio = -1;
  } de;
  auto* deform_cmd = app.add_subcommand("deform", "deform one image to a target mask or ratio");
  common(deform_cmd, de.config, de.seed, de.seed_set);
  deform_cmd->add_option("--in", de.in, "input PNG");
  deform_cmd->add_option("--ann", de.ann, "annotation JSON of the input");
  deform_cmd->add_option("--mask", de.mask, "target mask PNG");
  deform_cmd->add_option("--ratio", de.ratio, "target pupil-to-iris ratio");
  deform_cmd->add_option("--ckpt", de.ckpt, "model checkpoint")->envname("IRISDEFORM_CKPT");
  deform_cmd->add_option("--mode", de.mode, "model | linear")->check(CLI::IsMember({"model", "linear"}));
  deform_cmd->add_option("--out", de.outp, "output PNG");
  deform_cmd->callback([&] {
    action = [&] {
      fill_from_config(*deform_cmd, load_config(de.config), {"config"});
      if (de.in.empty() || de.outp.empty()) throw ConfigError("deform needs --in and --out");
      DeformInput in;
      in.image = read_image_png(de.in);
      if (!de.ann.empty()) in.annotation = read_annotation(de.ann);
      if (!de.mask.empty()) in.mask = read_mask_png(de.mask);
      if (de.ratio >= 0) in.ratio = de.ratio;
      in.mode = de.mode == "linear" ? DeformMode::kLinear : DeformMode::kModel;
      std::unique_ptr<nn::DeformNet<float>> model;
      if (in.mode == DeformMode::kModel) {
        if (de.ckpt.empty()) throw ConfigError("model mode needs --ckpt");
        model = load_model(de.ckpt);
      }
      const auto result = run_deform(in, model.get());
      write_image_png(de.outp, result.image);
      out << json{{"out", de.outp}, {"applied_ratio", result.applied_ratio}}.dump() << "\n";
    };
  });

  // serve
  struct {
    std::string config, ckpt, host = "127.0.0.1", debug_persist;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int port = 8080;
  } se;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP deformation service");
  common(serve_cmd, se.config, se.seed, se.seed_set);
  serve_cmd->add_option("--ckpt", se.ckpt, "model checkpoint")->envname("IRISDEFORM_CKPT");
  serve_cmd->add_option("--host", se.host, "bind address")->envname("IRISDEFORM_HOST");
  serve_cmd->add_option("--port", se.port, "TCP port")->envname("IRISDEFORM_PORT");
  serve_cmd->add_option("--debug-persist", se.debug_persist, "write request/response images here (debug)")
      ->envname("IRISDEFORM_DEBUG_PERSIST");
  serve_cmd->callback([&] {
    action = [&] {
      fill_from_config(*serve_cmd, load_config(se.config), {"config"});
      if (se.ckpt.empty()) throw ConfigError("serve needs --ckpt");
      ServiceOptions opts;
      opts.debug_persist_dir = se.debug_persist;
      DeformService service(opts);
      httplib::Server server;
      service.mount(server);
      std::string load_error;
      std::thread loader([&] {
        try {
          service.load_checkpoint(se.ckpt);
        } catch (const std::exception& e) {
          load_error = e.what();
          server.stop();
        }
      });
      if (!server.bind_to_port(se.host, se.port)) {
        loader.join();
        throw IoError("cannot bind " + se.host + ":" + std::to_string(se.port));
      }
      out << json{{"listening", se.host + ":" + std::to_string(se.port)}}.dump() << std::endl;
      server.listen_after_bind();
      loader.join();
      if (!load_error.empty()) throw CheckpointError(load_error);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    // One parsable line, then the usage of the command that failed.
    std::string what = e.what();
    std::replace(what.begin(), what.end(), '\n', ' ');
    err << "error: usage: " << what << "\n";
    const auto used = app.get_subcommands();
    err << (used.empty() ? app.help() : used.front()->help());
    return 64;
  }
  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << "\n";
  } catch (const CLI::Error& e) {
    err << "error: config: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace irisdeform::app
