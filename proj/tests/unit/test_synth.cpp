// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "irisdeform/filter_bank.hpp"
#include "irisdeform/iris_code.hpp"
#include "irisdeform/metrics.hpp"
#include "irisdeform/synth.hpp"
#include "test_util.hpp"

namespace irisdeform::synth {
namespace {

using irisdeform::testing::read_bytes;
using irisdeform::testing::TempDir;

SynthConfig small_config(std::uint64_t seed = 3) {
  SynthConfig c;
  c.seed = seed;
  c.n_eyes = 3;
  c.frames_per_eye = 4;
  return c;
}

TEST(SynthConfig, JsonRoundTripAndValidation) {
  SynthConfig c = small_config();
  c.deformation_model = DeformationModel::kLinear;
  c.eyelids = true;
  c.ratio_min = 0.25;
  const SynthConfig back = SynthConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(SynthConfig::from_json(R"({"n_eyes": 3, "bogus": 1})"), ConfigError);
  EXPECT_THROW(SynthConfig::from_json(R"({"n_eyes": 0})"), ConfigError);
  EXPECT_THROW(SynthConfig::from_json(R"({"ratio_range": [0.0, 0.7]})"), ConfigError);
  EXPECT_THROW(SynthConfig::from_json(R"({"ratio_range": [0.6, 0.3]})"), ConfigError);
  EXPECT_THROW(SynthConfig::from_json(R"({"deformation_model": "twist"})"), ConfigError);
}

TEST(TextureRadius, FixesBoundariesAndIsIdentityWhenLinear) {
  for (double ratio : {0.2, 0.45, 0.7})
    for (double s : {0.0, 0.15, 0.3}) {
      EXPECT_NEAR(texture_radius(0.0, ratio, DeformationModel::kGaussianStretch, s), 0.0, 1e-12);
      EXPECT_NEAR(texture_radius(1.0, ratio, DeformationModel::kGaussianStretch, s), 1.0, 1e-12);
    }
  for (double r : {0.1, 0.5, 0.9}) {
    EXPECT_DOUBLE_EQ(texture_radius(r, 0.7, DeformationModel::kLinear, 0.3), r);
    EXPECT_DOUBLE_EQ(texture_radius(r, 0.7, DeformationModel::kGaussianStretch, 0.0), r);
    EXPECT_NEAR(texture_radius(r, 0.45, DeformationModel::kGaussianStretch, 0.3), r, 1e-12);
  }
  // Opposite displacement at the two ends of the ratio range; monotone in r.
  const double lo = texture_radius(0.5, 0.2, DeformationModel::kGaussianStretch, 0.15);
  const double hi = texture_radius(0.5, 0.7, DeformationModel::kGaussianStretch, 0.15);
  EXPECT_GT(lo, 0.5);
  EXPECT_LT(hi, 0.5);
  double prev = -1;
  for (int i = 0; i <= 100; ++i) {
    const double u = texture_radius(i / 100.0, 0.7, DeformationModel::kGaussianStretch, 0.15);
    EXPECT_GT(u, prev);
    prev = u;
  }
}

TEST(SynthGenerate, SeededRunsAreByteIdentical) {
  TempDir a("synth_a"), b("synth_b");
  const auto ra = synth_generate(small_config(), a.path());
  const auto rb = synth_generate(small_config(), b.path());
  ASSERT_EQ(ra.size(), 12u);
  ASSERT_EQ(rb.size(), 12u);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(read_bytes(ra[i].image_path), read_bytes(rb[i].image_path));
    EXPECT_EQ(read_bytes(ra[i].mask_path), read_bytes(rb[i].mask_path));
  }
  EXPECT_EQ(read_bytes(a / "manifest.jsonl"), read_bytes(b / "manifest.jsonl"));
  EXPECT_EQ(read_bytes(a / "synth_config.json"), read_bytes(b / "synth_config.json"));
}

TEST(SynthGenerate, DifferentSeedsDiffer) {
  TempDir a("synth_s1"), b("synth_s2");
  const auto ra = synth_generate(small_config(1), a.path());
  const auto rb = synth_generate(small_config(2), b.path());
  EXPECT_NE(read_bytes(ra[0].image_path), read_bytes(rb[0].image_path));
}

TEST(SynthGenerate, RecordsAreConsistent) {
  TempDir d("synth_rec");
  SynthConfig c = small_config();
  c.eyelids = true;
  const auto recs = synth_generate(c, d.path());
  std::set<std::string> eyes, ids;
  for (const auto& r : recs) {
    eyes.insert(r.eye_id());
    EXPECT_TRUE(ids.insert(r.sample_id).second);
    EXPECT_GE(r.ratio, c.ratio_min);
    EXPECT_LE(r.ratio, c.ratio_max);
    EXPECT_EQ(r.bin, dataset::bin_for_ratio(r.ratio));
    const Image img = read_image_png(r.image_path);
    const Mask m = read_mask_png(r.mask_path);
    EXPECT_EQ(img.height(), c.height);
    EXPECT_EQ(img.width(), c.width);
    // Eyelid-clipped masks stay inside the annulus.
    const Mask annulus = geometry::rasterize_mask(r.ann, c.height, c.width);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m.pixels()[i]) {
        EXPECT_EQ(annulus.pixels()[i], 1);
      }
  }
  EXPECT_EQ(eyes.size(), 3u);
  EXPECT_EQ(dataset::read_manifest(d / "manifest.jsonl"), recs);
}

TEST(RenderFrame, AnnotationTracksRatio) {
  const SynthConfig c = small_config();
  const SynthEye eye = make_eye(c, 0);
  FrameParams p;
  p.ratio = 0.55;
  const auto f = render_frame(c, eye, p, 1);
  EXPECT_NEAR(geometry::pupil_to_iris_ratio(f.ann), 0.55, 1e-12);
  EXPECT_NO_THROW(f.ann.validate());
  EXPECT_EQ(f.mask, geometry::rasterize_mask(f.ann, c.height, c.width));
  for (float v : f.image.pixels()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

// Scores over frame pairs of a strength-0 dataset: same-eye frames after
// linear rectification and frames of different eyes.
TEST(SynthStatistics, LinearGroundTruthAndImposterLevel) {
  SynthConfig c;
  c.seed = 17;
  c.n_eyes = 12;
  c.frames_per_eye = 6;
  c.deformation_strength = 0.0;
  const FilterBank bank = default_filter_bank();
  std::vector<std::vector<SynthFrame>> frames(c.n_eyes);
  std::vector<std::vector<eval::IrisCode>> codes(c.n_eyes);
  for (int e = 0; e < c.n_eyes; ++e)
    for (int f = 0; f < c.frames_per_eye; ++f) {
      frames[e].push_back(render_frame(c, e, f));
      codes[e].push_back(eval::encode_iris(frames[e].back().image, frames[e].back().ann, bank));
    }
  std::vector<double> genuine, imposter;
  for (int e = 0; e < c.n_eyes; ++e)
    for (int f = 1; f < c.frames_per_eye; ++f) {
      const auto& g = frames[e][0];
      const auto& p = frames[e][f];
      const Image rect = geometry::linear_rectify(p.image, p.ann, g.ann);
      genuine.push_back(eval::compare_codes(codes[e][0], eval::encode_iris(rect, g.ann, bank)));
    }
  for (int e = 0; e < c.n_eyes; ++e)
    for (int o = 0; o < c.n_eyes; ++o)
      if (o != e)
        for (int f = 0; f < 2; ++f) imposter.push_back(eval::compare_codes(codes[e][0], codes[o][f]));
  ASSERT_GE(imposter.size(), 100u);
  const double g = eval::mean_std(genuine).mean, i = eval::mean_std(imposter).mean;
  EXPECT_LT(g, 0.05);
  EXPECT_GE(i, 0.45);
  EXPECT_LE(i, 0.50);
}

}  // namespace
}  // namespace irisdeform::synth
