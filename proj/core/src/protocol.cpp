// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace irisdeform::eval {
namespace fs = std::filesystem;
using nlohmann::json;

Image LinearRectifier::rectify(const std::string&, const dataset::SampleRecord& probe,
                               const Image& probe_image, const dataset::SampleRecord& gallery,
                               const Mask&) const {
  return geometry::linear_rectify(probe_image, probe.ann, gallery.ann, gw_, gh_);
}

Image ModelRectifier::rectify(const std::string&, const dataset::SampleRecord&, const Image& probe_image,
                              const dataset::SampleRecord&, const Mask& gallery_mask) const {
  return model_.infer(probe_image, gallery_mask);
}

ExternalDirRectifier::ExternalDirRectifier(fs::path dir) : dir_(std::move(dir)) {
  const fs::path idx = dir_ / "index.json";
  std::ifstream in(idx);
  if (!in) throw IoError("external rectifier: cannot open " + idx.string());
  try {
    const json j = json::parse(in);
    for (const auto& p : j.at("pairs"))
      index_[p.at("pair_id").get<std::string>()] = {p.at("probe").get<std::string>(),
                                                    p.at("gallery").get<std::string>()};
  } catch (const json::exception& e) {
    throw ParseError(idx.string() + ": " + e.what());
  }
}

Image ExternalDirRectifier::rectify(const std::string& pair_id, const dataset::SampleRecord& probe,
                                    const Image&, const dataset::SampleRecord& gallery,
                                    const Mask&) const {
  const auto it = index_.find(pair_id);
  if (it == index_.end()) throw ProtocolError("external rectifier: pair " + pair_id + " not in index");
  if (it->second.first != probe.sample_id || it->second.second != gallery.sample_id)
    throw ProtocolError("external rectifier: index entry for " + pair_id + " names other samples");
  return read_image_png(dir_ / (pair_id + ".png"));
}

void EvalConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (pairs_per_subject < 1) throw ConfigError("pairs_per_subject must be >= 1");
  if (imposters_per_gallery < 0) throw ConfigError("imposters_per_gallery must be >= 0");
  if (max_shift < 0) throw ConfigError("max_shift must be >= 0");
  for (const auto& b : {gallery_bin, probe_bin})
    if (b && (*b < 0 || *b >= dataset::kBinCount)) throw ConfigError("eval bins must be in 0..4");
  if (gallery_bin && probe_bin && *gallery_bin >= *probe_bin)
    throw ConfigError("gallery bin must be below the probe bin");
}

std::string EvalConfig::to_json() const {
  json j = {{"repeats", repeats},
            {"pairs_per_subject", pairs_per_subject},
            {"imposters_per_gallery", imposters_per_gallery},
            {"max_shift", max_shift},
            {"grid_width", grid_width},
            {"grid_height", grid_height},
            {"seed", seed}};
  j["gallery_bin"] = gallery_bin ? json(*gallery_bin) : json(nullptr);
  j["probe_bin"] = probe_bin ? json(*probe_bin) : json(nullptr);
  return j.dump(2);
}

EvalConfig EvalConfig::from_json(std::string_view text) {
  static const std::set<std::string> keys = {"repeats",     "pairs_per_subject", "imposters_per_gallery",
                                             "max_shift",   "grid_width",        "grid_height",
                                             "seed",        "gallery_bin",       "probe_bin"};
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("eval config must be a JSON object");
    for (const auto& [k, v] : j.items())
      if (!keys.count(k)) throw ConfigError("unknown eval config key '" + k + "'");
    EvalConfig c;
    c.repeats = j.value("repeats", c.repeats);
    c.pairs_per_subject = j.value("pairs_per_subject", c.pairs_per_subject);
    c.imposters_per_gallery = j.value("imposters_per_gallery", c.imposters_per_gallery);
    c.max_shift = j.value("max_shift", c.max_shift);
    c.grid_width = j.value("grid_width", c.grid_width);
    c.grid_height = j.value("grid_height", c.grid_height);
    c.seed = j.value("seed", c.seed);
    if (j.contains("gallery_bin") && !j["gallery_bin"].is_null()) c.gallery_bin = j["gallery_bin"].get<int>();
    if (j.contains("probe_bin") && !j["probe_bin"].is_null()) c.probe_bin = j["probe_bin"].get<int>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("eval config: ") + e.what());
  }
}

namespace {

struct Planned {
  int repeat;
  bool genuine;
  const dataset::SampleRecord* gallery;
  const dataset::SampleRecord* probe;
  std::string pair_id;
};

struct Plan {
  int gallery_bin = 0, probe_bin = 0;
  std::vector<std::string> used, skipped, warnings;
  std::vector<Planned> items;
};

std::string pair_name(const dataset::SampleRecord& probe, const dataset::SampleRecord& gallery) {
  return probe.sample_id + "__to__" + gallery.sample_id;
}

Plan make_plan(const std::vector<dataset::SampleRecord>& test, const EvalConfig& cfg) {
  cfg.validate();
  Plan plan;
  std::set<int> populated;
  for (const auto& r : test)
    if (r.bin) populated.insert(*r.bin);
  if (populated.size() < 2 && !(cfg.gallery_bin && cfg.probe_bin))
    throw ProtocolError("test manifest populates fewer than two curated bins");
  plan.gallery_bin = cfg.gallery_bin.value_or(populated.empty() ? 0 : *populated.begin());
  plan.probe_bin = cfg.probe_bin.value_or(populated.empty() ? 0 : *populated.rbegin());
  if (plan.gallery_bin >= plan.probe_bin) throw ProtocolError("gallery bin must be below the probe bin");

  std::map<std::string, std::pair<std::vector<const dataset::SampleRecord*>,
                                  std::vector<const dataset::SampleRecord*>>>
      by_eye;
  for (const auto& r : test) {
    auto& slot = by_eye[r.eye_id()];
    if (r.bin == plan.gallery_bin) slot.first.push_back(&r);
    if (r.bin == plan.probe_bin) slot.second.push_back(&r);
  }
  std::vector<std::string> eyes;
  for (const auto& [eye, lists] : by_eye) {
    if (lists.first.empty() || lists.second.empty()) {
      plan.skipped.push_back(eye);
      plan.warnings.push_back("eye " + eye + " skipped: no frames in bin " +
                              std::to_string(lists.first.empty() ? plan.gallery_bin : plan.probe_bin));
    } else {
      eyes.push_back(eye);
    }
  }
  if (eyes.empty()) throw ProtocolError("every eye lacks frames in one of the eval bins");
  if (eyes.size() < 2) throw ProtocolError("protocol needs at least two usable eyes");
  plan.used = eyes;

  for (int rep = 0; rep < cfg.repeats; ++rep) {
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(rep)));
    for (const auto& eye : eyes) {
      const auto& [gal, prb] = by_eye.at(eye);
      std::vector<std::pair<std::size_t, std::size_t>> cross;
      for (std::size_t g = 0; g < gal.size(); ++g)
        for (std::size_t p = 0; p < prb.size(); ++p) cross.emplace_back(g, p);
      rng.shuffle(cross);
      if (cross.size() > static_cast<std::size_t>(cfg.pairs_per_subject)) cross.resize(cfg.pairs_per_subject);
      for (auto [g, p] : cross) {
        plan.items.push_back({rep, true, gal[g], prb[p], pair_name(*prb[p], *gal[g])});
        std::vector<std::string> others;
        for (const auto& o : eyes)
          if (o != eye) others.push_back(o);
        rng.shuffle(others);
        if (cfg.imposters_per_gallery > 0 && others.size() > static_cast<std::size_t>(cfg.imposters_per_gallery))
          others.resize(cfg.imposters_per_gallery);
        for (const auto& o : others) {
          const auto& oprb = by_eye.at(o).second;
          const auto* probe = oprb[rng.index(oprb.size())];
          plan.items.push_back({rep, false, gal[g], probe, pair_name(*probe, *gal[g])});
        }
      }
    }
  }
  return plan;
}

}  // namespace

std::vector<ProtocolPair> protocol_pairs(const std::vector<dataset::SampleRecord>& test,
                                         const EvalConfig& cfg) {
  const Plan plan = make_plan(test, cfg);
  std::vector<ProtocolPair> out;
  std::set<std::string> seen;
  for (const auto& it : plan.items)
    if (seen.insert(it.pair_id).second) out.push_back({it.pair_id, *it.probe, *it.gallery});
  return out;
}

EvalReport run_protocol(const std::vector<dataset::SampleRecord>& test, const Rectifier& rectifier,
                        const FilterBank& bank, const EvalConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const Plan plan = make_plan(test, cfg);
  EvalReport rep;
  rep.rectifier = rectifier.name();
  rep.config = cfg;
  rep.gallery_bin = plan.gallery_bin;
  rep.probe_bin = plan.probe_bin;
  rep.eyes_used = plan.used;
  rep.eyes_skipped = plan.skipped;
  rep.warnings = plan.warnings;

  std::map<std::string, dataset::LoadedSample> images;
  auto sample = [&](const dataset::SampleRecord& r) -> const dataset::LoadedSample& {
    auto it = images.find(r.sample_id);
    if (it == images.end()) it = images.emplace(r.sample_id, dataset::load_sample(r)).first;
    return it->second;
  };
  std::map<std::string, IrisCode> gallery_codes, probe_codes;
  auto gallery_code = [&](const dataset::SampleRecord& g) -> const IrisCode& {
    auto it = gallery_codes.find(g.sample_id);
    if (it == gallery_codes.end()) {
      const auto& s = sample(g);
      it = gallery_codes
               .emplace(g.sample_id, encode_iris(s.image, g.ann, s.mask, bank, cfg.grid_width, cfg.grid_height))
               .first;
    }
    return it->second;
  };
  auto probe_code = [&](const Planned& p) -> const IrisCode& {
    auto it = probe_codes.find(p.pair_id);
    if (it == probe_codes.end()) {
      const auto& g = sample(*p.gallery);
      const Image rectified = rectifier.rectify(p.pair_id, *p.probe, sample(*p.probe).image, *p.gallery, g.mask);
      if (!rectified.same_shape(g.image))
        throw ProtocolError("rectified image for " + p.pair_id + " has the wrong size");
      it = probe_codes
               .emplace(p.pair_id, encode_iris(rectified, p.gallery->ann, g.mask, bank, cfg.grid_width,
                                               cfg.grid_height))
               .first;
    }
    return it->second;
  };

  std::vector<ScoreSet> per_repeat(cfg.repeats);
  ScoreSet pooled;
  for (const auto& it : plan.items) {
    const double s = compare_codes(gallery_code(*it.gallery), probe_code(it), cfg.max_shift);
    Comparison c{it.pair_id,          it.gallery->sample_id, it.probe->sample_id, it.gallery->eye_id(),
                 it.probe->eye_id(), it.genuine,            it.repeat,           s};
    if (c.genuine != (c.gallery_eye == c.probe_eye)) ++rep.audit_violations;
    rep.comparisons.push_back(std::move(c));
    (it.genuine ? per_repeat[it.repeat].genuine : per_repeat[it.repeat].imposter).push_back(s);
    (it.genuine ? pooled.genuine : pooled.imposter).push_back(s);
  }

  std::vector<double> gm, im, dp;
  for (const auto& s : per_repeat) {
    RepeatStats r;
    r.n_genuine = s.genuine.size();
    r.n_imposter = s.imposter.size();
    r.genuine_mean = 100.0 * mean_std(s.genuine).mean;
    r.imposter_mean = 100.0 * mean_std(s.imposter).mean;
    r.dprime = decidability(s);
    gm.push_back(r.genuine_mean);
    im.push_back(r.imposter_mean);
    dp.push_back(r.dprime);
    rep.repeats.push_back(r);
  }
  rep.genuine_percent = mean_std(gm);
  rep.imposter_percent = mean_std(im);
  rep.dprime = mean_std(dp);
  const RocResult roc = roc_eer_auc(pooled);
  rep.eer = roc.eer;
  rep.auc = roc.auc;
  rep.roc = roc.points;
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string EvalReport::to_json(bool include_comparisons) const {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  json j;
  j["rectifier"] = rectifier;
  j["config"] = json::parse(config.to_json());
  j["gallery_bin"] = gallery_bin;
  j["probe_bin"] = probe_bin;
  j["genuine_percent"] = ms(genuine_percent);
  j["imposter_percent"] = ms(imposter_percent);
  j["dprime"] = ms(dprime);
  j["eer"] = eer;
  j["auc"] = auc;
  json roc_points = json::array();
  for (const auto& p : roc)
    roc_points.push_back({{"threshold", std::isfinite(p.threshold) ? json(p.threshold) : json(nullptr)},
                          {"fmr", p.fmr},
                          {"tmr", p.tmr}});
  j["roc"] = roc_points;
  json reps = json::array();
  for (const auto& r : repeats)
    reps.push_back({{"genuine_percent", r.genuine_mean},
                    {"imposter_percent", r.imposter_mean},
                    {"dprime", r.dprime},
                    {"n_genuine", r.n_genuine},
                    {"n_imposter", r.n_imposter}});
  j["repeats"] = reps;
  j["eyes_used"] = eyes_used;
  j["eyes_skipped"] = eyes_skipped;
  j["warnings"] = warnings;
  j["audit_violations"] = audit_violations;
  j["runtime_seconds"] = runtime_seconds;
  if (include_comparisons) {
    json cs = json::array();
    for (const auto& c : comparisons)
      cs.push_back({{"pair_id", c.pair_id},
                    {"gallery", c.gallery_id},
                    {"probe", c.probe_id},
                    {"genuine", c.genuine},
                    {"repeat", c.repeat},
                    {"score", c.score}});
    j["comparisons"] = cs;
  }
  return j.dump(2);
}

std::string EvalReport::roc_csv() const {
  std::ostringstream out;
  out << "threshold,fmr,tmr\n";
  char buf[128];
  for (const auto& p : roc) {
    if (std::isfinite(p.threshold))
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.fmr, p.tmr);
    else
      std::snprintf(buf, sizeof buf, "-inf,%.17g,%.17g\n", p.fmr, p.tmr);
    out << buf;
  }
  return out.str();
}

double mask_adherence(const nn::DeformNet<float>& model, const Segmenter<float>& seg,
                      const std::vector<dataset::PairRecord>& pairs) {
  if (pairs.empty()) throw ProtocolError("mask_adherence: no pairs");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const auto src = dataset::load_sample(p.source);
    const auto dst = dataset::load_sample(p.target);
    sum += mask_iou(seg.segment(model.infer(src.image, dst.mask)), dst.mask);
  }
  return sum / static_cast<double>(pairs.size());
}

Image render_roc(const std::vector<RocPoint>& roc, int size) {
  Image img(size, size, 1.0f);
  const int m = size / 16;
  const int span = size - 2 * m;
  auto plot = [&](double fx, double fy, float v) {
    const int x = m + static_cast<int>(std::lround(fx * span));
    const int y = size - 1 - m - static_cast<int>(std::lround(fy * span));
    if (img.contains(y, x)) img.at(y, x) = v;
  };
  for (int i = 0; i <= span; ++i) {
    const double t = static_cast<double>(i) / span;
    plot(t, 0.0, 0.0f);
    plot(0.0, t, 0.0f);
    plot(t, t, 0.7f);  // chance diagonal
  }
  for (std::size_t k = 1; k < roc.size(); ++k) {
    const int steps = 2 * span;
    for (int s = 0; s <= steps; ++s) {
      const double a = static_cast<double>(s) / steps;
      plot(roc[k - 1].fmr + a * (roc[k].fmr - roc[k - 1].fmr), roc[k - 1].tmr + a * (roc[k].tmr - roc[k - 1].tmr),
           0.0f);
    }
  }
  return img;
}

}  // namespace irisdeform::eval
