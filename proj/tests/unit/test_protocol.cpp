// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <chrono>
#include "json.hpp"
#include <set>

#include "irisdeform/error.hpp"
#include "irisdeform/protocol.hpp"
#include "irisdeform/synth.hpp"
#include "test_util.hpp"

namespace irisdeform::eval {
namespace {

using nlohmann::json;
using irisdeform::testing::TempDir;

struct ProtocolData : ::testing::Test {
  static void SetUpTestSuite() {
    dir = new TempDir("protocol");
    synth::SynthConfig c;
    c.seed = 41;
    c.n_eyes = 12;
    c.frames_per_eye = 12;
    c.deformation_strength = 0.0;
    records = new std::vector<dataset::SampleRecord>(synth::synth_generate(c, dir->path()));
  }
  static void TearDownTestSuite() {
    delete records;
    delete dir;
  }
  static EvalConfig small_config() {
    EvalConfig cfg;
    cfg.repeats = 3;
    cfg.pairs_per_subject = 3;
    cfg.seed = 8;
    return cfg;
  }
  static inline TempDir* dir = nullptr;
  static inline std::vector<dataset::SampleRecord>* records = nullptr;
};

TEST_F(ProtocolData, LinearOnUndeformedDataSeparatesClasses) {
  const auto t0 = std::chrono::steady_clock::now();
  const EvalReport rep = run_protocol(*records, LinearRectifier(), default_filter_bank(), small_config());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(rep.genuine_percent.mean, 5.0);
  EXPECT_GT(rep.dprime.mean, 3.0);
  EXPECT_GT(rep.imposter_percent.mean, 40.0);
  EXPECT_EQ(rep.audit_violations, 0);
  EXPECT_EQ(rep.repeats.size(), 3u);
  EXPECT_EQ(rep.rectifier, "linear");
  EXPECT_LT(secs, 300.0);
  EXPECT_GT(rep.auc, 0.99);
}

TEST_F(ProtocolData, ComparisonsRespectEyeIdentity) {
  const EvalReport rep = run_protocol(*records, LinearRectifier(), default_filter_bank(), small_config());
  ASSERT_FALSE(rep.comparisons.empty());
  std::size_t genuine = 0;
  for (const auto& c : rep.comparisons) {
    EXPECT_EQ(c.genuine, c.gallery_eye == c.probe_eye) << c.pair_id;
    genuine += c.genuine;
  }
  EXPECT_GT(genuine, 0u);
  EXPECT_LT(genuine, rep.comparisons.size());
  for (const auto& r : rep.repeats) {
    EXPECT_GT(r.n_genuine, 0u);
    EXPECT_GT(r.n_imposter, 0u);
  }
}

TEST_F(ProtocolData, SeededRunsAreIdentical) {
  const auto a = run_protocol(*records, LinearRectifier(), default_filter_bank(), small_config());
  const auto b = run_protocol(*records, LinearRectifier(), default_filter_bank(), small_config());
  ASSERT_EQ(a.comparisons.size(), b.comparisons.size());
  for (std::size_t i = 0; i < a.comparisons.size(); ++i) {
    EXPECT_EQ(a.comparisons[i].pair_id, b.comparisons[i].pair_id);
    EXPECT_EQ(a.comparisons[i].score, b.comparisons[i].score);
  }
  EXPECT_EQ(a.dprime.mean, b.dprime.mean);
  EvalConfig other = small_config();
  other.seed = 9;
  const auto c = run_protocol(*records, LinearRectifier(), default_filter_bank(), other);
  std::vector<std::string> ia, ic;
  for (const auto& x : a.comparisons) ia.push_back(x.pair_id);
  for (const auto& x : c.comparisons) ic.push_back(x.pair_id);
  EXPECT_NE(ia, ic);
}

TEST_F(ProtocolData, ProtocolPairsDrawGalleryLowAndProbeHigh) {
  const EvalConfig cfg = small_config();
  const auto pairs = protocol_pairs(*records, cfg);
  ASSERT_FALSE(pairs.empty());
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    EXPECT_TRUE(ids.insert(p.pair_id).second);
    ASSERT_TRUE(p.gallery.bin && p.probe.bin);
    EXPECT_LT(*p.gallery.bin, *p.probe.bin);
  }
}

TEST_F(ProtocolData, EyesWithoutFramesInABinAreSkipped) {
  // Drop every high-bin frame of one eye.
  const std::string victim = records->front().eye_id();
  std::vector<dataset::SampleRecord> pruned;
  int top = 0;
  for (const auto& r : *records)
    if (r.bin) top = std::max(top, *r.bin);
  for (const auto& r : *records)
    if (!(r.eye_id() == victim && r.bin == top)) pruned.push_back(r);
  EvalConfig cfg = small_config();
  cfg.gallery_bin = 0;
  cfg.probe_bin = top;
  const auto rep = run_protocol(pruned, LinearRectifier(), default_filter_bank(), cfg);
  ASSERT_EQ(rep.eyes_skipped.size(), 1u);
  EXPECT_EQ(rep.eyes_skipped[0], victim);
  ASSERT_FALSE(rep.warnings.empty());
  EXPECT_NE(rep.warnings[0].find(victim), std::string::npos);
  for (const auto& c : rep.comparisons) EXPECT_NE(c.probe_eye, victim);
}

TEST_F(ProtocolData, NoUsableEyesIsAProtocolError) {
  std::vector<dataset::SampleRecord> low;
  for (const auto& r : *records)
    if (r.bin == 0) low.push_back(r);
  EvalConfig cfg = small_config();
  cfg.gallery_bin = 0;
  cfg.probe_bin = 4;
  EXPECT_THROW(run_protocol(low, LinearRectifier(), default_filter_bank(), cfg), ProtocolError);
  EXPECT_THROW(run_protocol({}, LinearRectifier(), default_filter_bank(), cfg), ProtocolError);
}

TEST_F(ProtocolData, ExternalDirectoryReproducesLinearScores) {
  const EvalConfig cfg = small_config();
  TempDir ext("external");
  json index = json::array();
  const LinearRectifier lin;
  for (const auto& p : protocol_pairs(*records, cfg)) {
    const auto probe = dataset::load_sample(p.probe);
    const auto gallery = dataset::load_sample(p.gallery);
    write_image_png(ext.path() / (p.pair_id + ".png"),
                    lin.rectify(p.pair_id, p.probe, probe.image, p.gallery, gallery.mask));
    index.push_back({{"pair_id", p.pair_id}, {"probe", p.probe.sample_id}, {"gallery", p.gallery.sample_id}});
  }
  irisdeform::testing::write_bytes(ext.path() / "index.json", json{{"pairs", index}}.dump());
  const auto a = run_protocol(*records, lin, default_filter_bank(), cfg);
  const auto b = run_protocol(*records, ExternalDirRectifier(ext.path()), default_filter_bank(), cfg);
  EXPECT_EQ(b.rectifier, "external-dir");
  ASSERT_EQ(a.comparisons.size(), b.comparisons.size());
  // PNG storage quantizes to 8 bits, which can flip a handful of near-zero responses.
  for (std::size_t i = 0; i < a.comparisons.size(); ++i) {
    EXPECT_EQ(a.comparisons[i].pair_id, b.comparisons[i].pair_id);
    EXPECT_NEAR(a.comparisons[i].score, b.comparisons[i].score, 0.02);
  }
  EXPECT_NEAR(a.genuine_percent.mean, b.genuine_percent.mean, 0.5);
}

TEST_F(ProtocolData, ExternalDirectoryErrors) {
  TempDir ext("external_bad");
  EXPECT_THROW(ExternalDirRectifier(ext.path()), IoError);
  irisdeform::testing::write_bytes(ext.path() / "index.json", "{\"pairs\": 3");
  EXPECT_THROW(ExternalDirRectifier(ext.path()), ParseError);
  irisdeform::testing::write_bytes(ext.path() / "index.json", "{\"pairs\": []}");
  EXPECT_THROW(run_protocol(*records, ExternalDirRectifier(ext.path()), default_filter_bank(), small_config()),
               ProtocolError);
}

TEST_F(ProtocolData, ReportSerializes) {
  const auto rep = run_protocol(*records, LinearRectifier(), default_filter_bank(), small_config());
  const json j = json::parse(rep.to_json());
  for (const char* k : {"rectifier", "genuine_percent", "imposter_percent", "dprime", "eer", "auc", "repeats",
                        "eyes_used", "eyes_skipped", "audit_violations", "runtime_seconds", "config"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_DOUBLE_EQ(j["dprime"]["mean"].get<double>(), rep.dprime.mean);
  EXPECT_FALSE(j.contains("comparisons"));
  EXPECT_TRUE(json::parse(rep.to_json(true)).contains("comparisons"));
  const std::string csv = rep.roc_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "threshold,fmr,tmr");
  const Image plot = render_roc(rep.roc);
  EXPECT_EQ(plot.width(), 256);
  EXPECT_EQ(plot.height(), 256);
}

TEST(EvalConfig, JsonAndValidation) {
  EvalConfig c;
  c.repeats = 4;
  c.gallery_bin = 1;
  c.seed = 77;
  const EvalConfig r = EvalConfig::from_json(c.to_json());
  EXPECT_EQ(r.repeats, 4);
  EXPECT_EQ(r.gallery_bin, 1);
  EXPECT_FALSE(r.probe_bin.has_value());
  EXPECT_EQ(r.seed, 77u);
  EXPECT_THROW(EvalConfig::from_json("{\"repeats\": 0}"), ConfigError);
  EXPECT_THROW(EvalConfig::from_json("{\"bogus\": 1}"), ConfigError);
  EXPECT_THROW(EvalConfig::from_json("{"), ParseError);
}

}  // namespace
}  // namespace irisdeform::eval
