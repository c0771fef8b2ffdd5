// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "irisdeform/checkpoint.hpp"
#include "irisdeform/deform_net.hpp"
#include "irisdeform/segmenter.hpp"
#include "irisdeform/synth.hpp"
#include "test_util.hpp"

namespace irisdeform {
namespace {

using irisdeform::testing::TempDir;

std::vector<dataset::SampleRecord> small_synth(const std::filesystem::path& dir, std::uint64_t seed, int eyes,
                                               int frames) {
  synth::SynthConfig c;
  c.seed = seed;
  c.n_eyes = eyes;
  c.frames_per_eye = frames;
  c.width = 64;
  c.height = 48;
  return synth::synth_generate(c, dir);
}

TEST(MaskIou, Basics) {
  Mask a(4, 4, 0), b(4, 4, 0);
  EXPECT_EQ(mask_iou(a, b), 1.0);
  a(0, 0) = a(0, 1) = 1;
  b(0, 1) = b(0, 2) = 1;
  EXPECT_DOUBLE_EQ(mask_iou(a, b), 1.0 / 3.0);
  EXPECT_THROW(mask_iou(a, Mask(3, 4, 0)), ShapeError);
}

TEST(Segmenter, FrozenLogitsAreRepeatableAndInputDependent) {
  Segmenter<float> seg;
  seg.set_requires_grad(false);
  const auto x = irisdeform::testing::random_tensor<float>({1, 1, 48, 64}, 3, 0, 1);
  const auto a = seg.logits(nn::Var<float>(x)).value();
  const auto b = seg.logits(nn::Var<float>(x)).value();
  ASSERT_EQ(a.shape(), (nn::Shape{1, 1, 48, 64}));
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  auto y = x;
  y.data()[100] += 0.5f;
  const auto c = seg.logits(nn::Var<float>(y)).value();
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
  // Odd sizes are padded internally.
  EXPECT_EQ(seg.logits(nn::Var<float>(nn::Tensor<float>({1, 1, 45, 61}))).shape(), (nn::Shape{1, 1, 45, 61}));
}

TEST(Segmenter, PreparedOnSyntheticDataReachesTarget) {
  TempDir tr("seg_train"), va("seg_val");
  const auto train = small_synth(tr.path(), 41, 8, 6);
  const auto val = small_synth(va.path(), 42, 3, 4);
  SegmenterTrainConfig tc;
  tc.max_epochs = 60;
  SegmenterReport rep;
  auto seg = prepare_segmenter(train, val, SegmenterConfig{}, tc, &rep);
  EXPECT_GE(rep.val_iou, 0.95);
  EXPECT_GE(segmenter_iou(*seg, val), 0.95);
  for (auto& p : seg->parameters()) EXPECT_FALSE(p.requires_grad());

  // Deterministic under the seed.
  auto again = prepare_segmenter(train, val, SegmenterConfig{}, tc);
  EXPECT_EQ(parameter_hash(*seg), parameter_hash(*again));

  TempDir out("seg_ckpt");
  save_segmenter(out / "seg.bin", *seg);
  auto loaded = load_segmenter(out / "seg.bin");
  EXPECT_EQ(parameter_hash(*seg), parameter_hash(*loaded));
  const Image img = read_image_png(val[0].image_path);
  EXPECT_EQ(seg->segment(img), loaded->segment(img));
}

TEST(Segmenter, BudgetExhaustionReportsHistory) {
  TempDir tr("seg_fail_train"), va("seg_fail_val");
  const auto train = small_synth(tr.path(), 43, 2, 2);
  const auto val = small_synth(va.path(), 44, 1, 2);
  SegmenterTrainConfig tc;
  tc.max_epochs = 1;
  tc.target_iou = 0.999999;
  try {
    prepare_segmenter(train, val, SegmenterConfig{}, tc);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("history"), std::string::npos);
  }
  EXPECT_THROW(prepare_segmenter({}, val, SegmenterConfig{}, tc), TrainingError);
}

TEST(Segmenter, CheckpointKindIsChecked) {
  TempDir d("seg_kind");
  nn::ModelConfig mc;
  mc.base_channels = 8;
  mc.depth = 2;
  nn::DeformNet<float> net(mc);
  save_model(d / "m.bin", net);
  EXPECT_THROW(load_segmenter(d / "m.bin"), CheckpointError);
  Segmenter<float> seg;
  save_segmenter(d / "s.bin", seg);
  EXPECT_THROW(load_model(d / "s.bin"), CheckpointError);
}

}  // namespace
}  // namespace irisdeform
