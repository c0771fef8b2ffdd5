// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion passes. Usage: irisdeform_acceptance [name...]
// restricts the run to the named criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "irisdeform/checkpoint.hpp"
#include "irisdeform/dataset.hpp"
#include "irisdeform/deform_net.hpp"
#include "irisdeform/geometry.hpp"
#include "irisdeform/losses.hpp"
#include "irisdeform/metrics.hpp"
#include "irisdeform/ops.hpp"
#include "irisdeform/perceptual.hpp"
#include "irisdeform/protocol.hpp"
#include "irisdeform/segmenter.hpp"
#include "irisdeform/synth.hpp"
#include "irisdeform/training.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace {

using namespace irisdeform;
namespace fs = std::filesystem;
using irisdeform::testing::TempDir;

const fs::path kSource = IRISDEFORM_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

// Trend benchmark regenerated from the shipped configs, shared by the
// criteria that need it.
class TrendData {
 public:
  const std::vector<dataset::SampleRecord>& records() {
    ensure();
    return records_;
  }
  const dataset::SplitSpec& split() {
    ensure();
    return split_;
  }
  std::vector<dataset::SampleRecord> test() { return dataset::select_eyes(records(), split().test_eyes); }
  const fs::path& dir() {
    ensure();
    return dir_.path();
  }

 private:
  void ensure() {
    if (ready_) return;
    const auto cfg = synth::SynthConfig::from_json(slurp(kSource / "configs" / "trend_synth.json"));
    records_ = synth::synth_generate(cfg, dir_.path() / "data");
    const auto sj = nlohmann::json::parse(slurp(kSource / "configs" / "trend_split.json"));
    const auto f = sj.at("fractions").get<std::vector<double>>();
    split_ = dataset::split_eye_disjoint(records_, {f.at(0), f.at(1), f.at(2)}, sj.at("seed").get<std::uint64_t>());
    ready_ = true;
  }
  TempDir dir_{"acceptance_trend"};
  bool ready_ = false;
  std::vector<dataset::SampleRecord> records_;
  dataset::SplitSpec split_;
};

eval::EvalConfig eval_config() { return eval::EvalConfig::from_json(slurp(kSource / "configs" / "eval.json")); }

const fs::path kModel = kSource / "models" / "deform_net.bin";
const fs::path kSegmenter = kSource / "models" / "segmenter.bin";

// Both trend criteria come from the same pair of protocol runs.
struct TrendReports {
  eval::EvalReport linear, model;
};

TrendReports& trend_reports(TrendData& data) {
  static std::optional<TrendReports> cached;
  if (cached) return *cached;
  if (!fs::exists(kModel)) throw IoError("trained checkpoint missing: " + kModel.string());
  const auto model = load_model(kModel);
  const auto cfg = eval_config();
  const auto test = data.test();
  const FilterBank bank = default_filter_bank();
  TrendReports r;
  r.linear = eval::run_protocol(test, eval::LinearRectifier(cfg.grid_width, cfg.grid_height), bank, cfg);
  r.model = eval::run_protocol(test, eval::ModelRectifier(*model), bank, cfg);
  cached = std::move(r);
  return *cached;
}

Outcome trend_dprime(TrendData& data) {
  const auto& r = trend_reports(data);
  const double gap = r.model.dprime.mean - r.linear.dprime.mean;
  const double combined = r.model.dprime.std + r.linear.dprime.std;
  const bool fast = r.model.runtime_seconds < 600 && r.linear.runtime_seconds < 600;
  return {gap > combined && fast,
          fmt("d' model %.3f +- %.3f vs linear %.3f +- %.3f (gap %.3f, combined std %.3f); eval %.0fs / %.0fs",
              r.model.dprime.mean, r.model.dprime.std, r.linear.dprime.mean, r.linear.dprime.std, gap, combined,
              r.model.runtime_seconds, r.linear.runtime_seconds)};
}

Outcome trend_genuine(TrendData& data) {
  const auto& r = trend_reports(data);
  const double drop = r.linear.genuine_percent.mean - r.model.genuine_percent.mean;
  return {drop >= 3.0, fmt("genuine %% model %.2f vs linear %.2f (drop %.2f pp); imposter %% model %.2f vs linear %.2f",
                           r.model.genuine_percent.mean, r.linear.genuine_percent.mean, drop,
                           r.model.imposter_percent.mean, r.linear.imposter_percent.mean)};
}

Outcome linear_sanity() {
  TempDir dir("acceptance_sanity");
  const auto cfg = synth::SynthConfig::from_json(slurp(kSource / "configs" / "sanity_synth.json"));
  const auto records = synth::synth_generate(cfg, dir.path());
  const auto ecfg = eval_config();
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = eval::run_protocol(records, eval::LinearRectifier(ecfg.grid_width, ecfg.grid_height),
                                      default_filter_bank(), ecfg);
  const double secs = seconds_since(t0);
  return {rep.genuine_percent.mean < 5.0 && rep.dprime.mean > 3.0 && secs < 300,
          fmt("strength 0: genuine %.2f%%, d' %.2f, %.0fs", rep.genuine_percent.mean, rep.dprime.mean, secs)};
}

Outcome geometry_checks() {
  using geometry::source_point;
  constexpr double kPi = std::numbers::pi;
  const auto c = irisdeform::testing::concentric(64, 64, 16, 48);
  const geometry::EyeAnnotation off{60, 64, 10, 64, 64, 40, "e"};
  const struct {
    geometry::Point2 got, want;
  } points[] = {{source_point(c, 0.0, 0.0), {80, 64}},
                {source_point(c, 0.5, kPi / 2), {64, 96}},
                {source_point(off, 0.25, 0.0), {78.5, 64}}};
  double worst_point = 0;
  for (const auto& p : points)
    worst_point = std::max({worst_point, std::abs(p.got.x - p.want.x), std::abs(p.got.y - p.want.y)});

  double worst_psnr = 1e9;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ann = irisdeform::testing::concentric(64, 48, 14, 40);
    const Image img = irisdeform::testing::smooth_texture(96, 128, seed);
    const Image back = geometry::denormalize(geometry::normalize(img, ann, 512, 64), ann, 96, 128);
    const Mask m = geometry::rasterize_mask(ann, 96, 128);
    worst_psnr = std::min(worst_psnr, psnr(img, back, &m));
  }
  return {worst_point <= 1e-9 && worst_psnr >= 30.0,
          fmt("round-trip PSNR >= %.1f dB over 5 textures; worst point error %.2e", worst_psnr, worst_point)};
}

// Reference implementations written independently of the library.
double rank_sum_auc(const eval::ScoreSet& s) {
  double wins = 0;
  for (double g : s.genuine)
    for (double i : s.imposter) wins += g < i ? 1.0 : (g == i ? 0.5 : 0.0);
  return wins / (static_cast<double>(s.genuine.size()) * s.imposter.size());
}

double counted_eer(const eval::ScoreSet& s) {
  std::set<double> ts(s.genuine.begin(), s.genuine.end());
  ts.insert(s.imposter.begin(), s.imposter.end());
  double pf = 0, pn = 1;
  for (double t : ts) {
    double fa = 0, fr = 0;
    for (double i : s.imposter) fa += i <= t;
    for (double g : s.genuine) fr += g > t;
    const double f = fa / s.imposter.size(), n = fr / s.genuine.size();
    if (f >= n) {
      if (f == n) return f;
      const double a = (pn - pf) / ((pn - pf) + (f - n));
      return pf + a * (f - pf);
    }
    pf = f;
    pn = n;
  }
  return 0.5;
}

double direct_dprime(const eval::ScoreSet& s) {
  auto moments = [](const std::vector<double>& v) {
    long double m = 0, q = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) q += (x - m) * (x - m);
    return std::pair<double, double>(static_cast<double>(m), static_cast<double>(q / v.size()));
  };
  const auto [mg, vg] = moments(s.genuine);
  const auto [mi, vi] = moments(s.imposter);
  return std::abs(mg - mi) / std::sqrt((vg + vi) / 2);
}

Outcome metric_oracles() {
  Rng rng(2718);
  double worst_eer = 0, worst_auc = 0, worst_d = 0;
  for (int t = 0; t < 100; ++t) {
    eval::ScoreSet s;
    const double shift = rng.uniform(0.0, 0.3);
    for (int i = 0; i < 1000; ++i) s.genuine.push_back(std::round(rng.uniform(0.0, 0.6) * 400) / 400);
    for (int i = 0; i < 1000; ++i) s.imposter.push_back(std::round(rng.uniform(shift, 0.6 + shift) * 400) / 400);
    const auto roc = eval::roc_eer_auc(s);
    worst_eer = std::max(worst_eer, std::abs(roc.eer - counted_eer(s)));
    worst_auc = std::max(worst_auc, std::abs(roc.auc - rank_sum_auc(s)));
    worst_d = std::max(worst_d, std::abs(eval::decidability(s) - direct_dprime(s)));
  }
  eval::IrisCode a(8, 64, 4);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 64; ++c)
      for (int f = 0; f < 4; ++f) a.set(r, c, f, rng.uniform() < 0.5, true);
  const double shifted = eval::compare_codes(a, a.shifted(3), 8);
  return {worst_eer <= 1e-9 && worst_auc <= 1e-9 && worst_d <= 1e-12 && shifted == 0.0,
          fmt("max |EER-ref| %.1e, |AUC-ref| %.1e, |d'-direct| %.1e; shift-3 score %.3f", worst_eer, worst_auc,
              worst_d, shifted)};
}

Outcome loss_correctness() {
  using nn::Tensor;
  using nn::Var;
  Segmenter<double> seg{SegmenterConfig{8, 3}};
  seg.set_requires_grad(false);
  PerceptualPyramid<double> pyramid{23, 4};
  pyramid.set_requires_grad(false);
  const FilterBank bank = default_filter_bank(3, 5, 7);
  const Var<double> bank_var{loss::bank_weights<double>(bank)};
  const std::vector<std::shared_ptr<const geometry::SamplingPlan>> plans{
      loss::identity_plan(irisdeform::testing::concentric(7.5, 7.5, 2.5, 6.5), 16, 16, 32, 8)};
  loss::LossSuite<double> suite;
  suite.segmenter = &seg;
  suite.bank = bank_var;
  suite.perceptual = &pyramid;
  suite.grid_width = 32;
  suite.grid_height = 8;
  auto crop = [](std::uint64_t s) { return irisdeform::testing::random_tensor<double>({1, 1, 16, 16}, s, 0.05, 0.95); };

  const Var<double> x(crop(1));
  const double at_equal = loss::mask_loss(x, x, seg).value().item() + loss::identity_loss(x, x, plans, bank_var).value().item() +
                          loss::l1_loss(x, x).value().item() + loss::perceptual_loss(x, x, pyramid).value().item();

  using Term = std::function<Var<double>(const Var<double>&, const Var<double>&)>;
  const std::vector<Term> terms = {
      [&](const Var<double>& o, const Var<double>& t) { return loss::mask_loss(o, t, seg); },
      [&](const Var<double>& o, const Var<double>& t) { return loss::identity_loss(o, t, plans, bank_var); },
      [&](const Var<double>& o, const Var<double>& t) { return loss::l1_loss(o, t); },
      [&](const Var<double>& o, const Var<double>& t) { return loss::perceptual_loss(o, t, pyramid); },
      [&](const Var<double>& o, const Var<double>& t) {
        return loss::composite_loss(o, t, plans, loss::LossWeights{0.5, 2, 1, 3}, suite).total;
      }};
  double worst_fd = 0;
  for (const auto& term : terms) {
    const auto r = irisdeform::testing::grad_check(
        [&](const std::vector<Var<double>>& v) { return term(v[0], Var<double>(crop(21))); }, {crop(20)});
    worst_fd = std::max(worst_fd, r.norm_rel_error);
  }

  const Var<double> a(crop(30)), b(crop(31));
  const auto t = loss::values_of(loss::composite_loss(a, b, plans, loss::LossWeights{}, suite));
  double worst_lin = 0;
  for (const loss::LossWeights& w : {loss::LossWeights{1, 0, 0, 0}, loss::LossWeights{0, 1, 0, 0},
                                     loss::LossWeights{0, 0, 1, 0}, loss::LossWeights{0, 0, 0, 1},
                                     loss::LossWeights{0.3, 1.7, 2.5, 0.2}}) {
    const auto v = loss::values_of(loss::composite_loss(a, b, plans, w, suite));
    worst_lin = std::max(worst_lin, std::abs(v.total - (w.mask * t.mask + w.identity * t.identity + w.l1 * t.l1 +
                                                        w.perceptual * t.perceptual)));
  }
  return {at_equal == 0.0 && worst_fd < 1e-3 && worst_lin <= 1e-9,
          fmt("sum of terms at equality %.1e; worst FD relative error %.2e; linearity error %.1e", at_equal, worst_fd,
              worst_lin)};
}

Outcome model_contracts(TrendData& data) {
  const auto tcfg = train::TrainConfig::from_json(slurp(kSource / "configs" / "trend_train.json"));
  bool shapes = true;
  {
    const nn::DeformNet<float> net(tcfg.model);
    for (auto [h, w] : {std::pair{480, 640}, std::pair{96, 128}}) {
      const Image out = net.infer(irisdeform::testing::random_image(h, w, 1), Mask(h, w, 1));
      shapes = shapes && out.height() == h && out.width() == w;
    }
  }
  bool shuffle = true;
  for (int s : {2, 3}) {
    const auto x = irisdeform::testing::random_tensor<float>({2, 2 * s * s, 5, 7}, 90 + s);
    const auto y = nn::pixel_shuffle(nn::Var<float>(x), s).value();
    std::vector<float> va(x.values().begin(), x.values().end()), vb(y.values().begin(), y.values().end());
    std::sort(va.begin(), va.end());
    std::sort(vb.begin(), vb.end());
    shuffle = shuffle && va == vb && y.shape() == nn::Shape{2, 2, 5 * s, 7 * s};
  }

  // Overfit one 128x96 pair of the trend data with a desk-scale model.
  const auto pairs = dataset::build_pairs(dataset::select_eyes(data.records(), data.split().train_eyes), 1, 1);
  const std::vector<dataset::PairRecord> one{pairs.front()};
  train::TrainConfig oc = tcfg;
  oc.batch_size = 1;
  oc.bidirectional = false;
  oc.max_steps = 500;
  oc.learning_rate = 2e-3;
  oc.model.depth = 3;
  oc.model.base_channels = 16;
  oc.grid_width = 128;
  oc.grid_height = 32;
  oc.checkpoint_every = 0;
  oc.validate_every = 0;
  const auto seg = load_segmenter(kSegmenter);
  TempDir run("acceptance_overfit");
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train::train(one, {}, oc, {seg.get(), default_filter_bank()}, run.path());
  const double secs = seconds_since(t0);
  const double l1 = result.log.back().values.l1;

  const auto loaded = load_model(result.final_checkpoint);
  save_model(run / "first.bin", *loaded);
  const auto reloaded = load_model(run / "first.bin");
  save_model(run / "second.bin", *reloaded);
  const bool bit_identical = slurp(run / "first.bin") == slurp(run / "second.bin") &&
                             parameter_hash(*loaded) == parameter_hash(*reloaded);
  return {shapes && shuffle && l1 < 0.02 && secs < 300 && bit_identical,
          fmt("shapes %s, shuffle bijection %s, overfit L1 %.4f after 500 steps in %.0fs, checkpoint round trip %s",
              shapes ? "ok" : "BAD", shuffle ? "ok" : "BAD", l1, secs, bit_identical ? "bit-identical" : "DIFFERS")};
}

Outcome pipeline_audits(TrendData& data) {
  const int violations = dataset::split_violations(data.split(), data.records());
  const auto pj = nlohmann::json::parse(slurp(kSource / "configs" / "trend_pairs.json"));
  const auto train_records = dataset::select_eyes(data.records(), data.split().train_eyes);
  const auto pairs = dataset::build_pairs(train_records, pj.at("cap").get<int>(), pj.at("seed").get<std::uint64_t>());
  std::size_t bad_pairs = 0;
  for (const auto& p : pairs)
    bad_pairs += !(p.source.bin && p.target.bin && *p.source.bin < *p.target.bin &&
                   p.source.eye_id() == p.target.eye_id());

  TempDir a("acceptance_audit_a"), b("acceptance_audit_b");
  const auto cfg = synth::SynthConfig::from_json(slurp(kSource / "configs" / "sanity_synth.json"));
  for (const TempDir* d : {&a, &b}) {
    const auto recs = synth::synth_generate(cfg, d->path() / "data");
    dataset::write_split(d->path() / "split.json", dataset::split_eye_disjoint(recs, {0.7, 0.1, 0.2}, 2026));
    dataset::write_pairs(d->path() / "pairs.jsonl", dataset::build_pairs(recs, 20, 2026));
  }
  const bool identical = tree(a.path()) == tree(b.path());
  return {violations == 0 && bad_pairs == 0 && !pairs.empty() && identical,
          fmt("split violations %d; %zu of %zu pairs break the higher-bin rule; seeded reruns %s", violations,
              bad_pairs, pairs.size(), identical ? "byte-identical" : "DIFFER")};
}

Outcome mask_adherence(TrendData& data) {
  if (!fs::exists(kModel)) throw IoError("trained checkpoint missing: " + kModel.string());
  const auto model = load_model(kModel);
  const auto seg = load_segmenter(kSegmenter);
  const auto pairs = dataset::build_pairs(data.test(), 2, 5);
  const double iou = eval::mask_adherence(*model, *seg, pairs);
  return {iou >= 0.90, fmt("mean IoU %.4f over %zu test-split pairs", iou, pairs.size())};
}

}  // namespace

int main(int argc, char** argv) {
  TrendData data;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"trend-dprime", [&] { return trend_dprime(data); }},
      {"trend-genuine-drop", [&] { return trend_genuine(data); }},
      {"linear-sanity", linear_sanity},
      {"geometry", geometry_checks},
      {"metric-oracles", metric_oracles},
      {"loss-correctness", loss_correctness},
      {"model-contracts", [&] { return model_contracts(data); }},
      {"pipeline-audits", [&] { return pipeline_audits(data); }},
      {"mask-adherence", [&] { return mask_adherence(data); }},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << fmt(" [%.0fs]", seconds_since(t0))
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
