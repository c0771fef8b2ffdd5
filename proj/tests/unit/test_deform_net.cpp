// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "irisdeform/checkpoint.hpp"
#include "irisdeform/deform_net.hpp"
#include "test_util.hpp"

namespace irisdeform::nn {
namespace {

using irisdeform::testing::random_tensor;
using irisdeform::testing::TempDir;

ModelConfig tiny(int depth = 4, int base = 8) {
  ModelConfig c;
  c.depth = depth;
  c.base_channels = base;
  c.seed = 5;
  return c;
}

TEST(ModelConfig, ValidationAndJson) {
  EXPECT_NO_THROW(ModelConfig{}.validate());
  auto bad = [](auto mutate) {
    ModelConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](ModelConfig& c) { c.depth = 1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](ModelConfig& c) { c.base_channels = 6; }).validate(), ConfigError);
  EXPECT_THROW(bad([](ModelConfig& c) { c.base_channels = 9; }).validate(), ConfigError);
  EXPECT_THROW(bad([](ModelConfig& c) { c.input_channels = 3; }).validate(), ConfigError);
  const ModelConfig c = tiny(3, 16);
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
  EXPECT_EQ(ModelConfig{}.channels(1), 64);
  EXPECT_EQ(ModelConfig{}.channels(4), 512);
  EXPECT_EQ(ModelConfig{}.channels(0), 64);
}

TEST(DownBlock, ShapeContract) {
  Rng rng(1);
  DownBlock<float> block(32, 64, ModelConfig{}, rng);
  const auto y = block(Var<float>(random_tensor<float>({1, 32, 64, 64}, 2))).value();
  EXPECT_EQ(y.shape(), (Shape{1, 64, 32, 32}));
  EXPECT_THROW(block(Var<float>(Tensor<float>({1, 32, 63, 64}))), ShapeError);
}

TEST(DownBlock, ZeroInputGivesSpatiallyConstantResponse) {
  Rng rng(1);
  ModelConfig cfg;
  cfg.instance_norm = false;
  DownBlock<float> block(4, 8, cfg, rng);
  // Non-zero biases so the response is not trivially zero.
  for (auto* conv : {&block.strided, &block.resampled})
    for (std::size_t i = 0; i < conv->bias.value().numel(); ++i)
      conv->bias.mutable_value().data()[i] = 0.1f * static_cast<float>(i + 1) - 0.2f;
  const auto y = block(Var<float>(Tensor<float>({1, 4, 16, 16}))).value();
  for (int c = 0; c < 8; ++c)
    for (int yy = 0; yy < 8; ++yy)
      for (int xx = 0; xx < 8; ++xx) ASSERT_EQ(y.at(0, c, yy, xx), y.at(0, c, 0, 0));
  EXPECT_NE(y.at(0, 0, 0, 0), y.at(0, 7, 0, 0));
}

TEST(UpBlock, ShapeContract) {
  Rng rng(3);
  UpBlock<float> block(128, 64, 64, ModelConfig{}, rng);
  const auto y = block(Var<float>(random_tensor<float>({1, 128, 16, 16}, 4)),
                       Var<float>(random_tensor<float>({1, 64, 32, 32}, 5)))
                     .value();
  EXPECT_EQ(y.shape(), (Shape{1, 64, 32, 32}));
  EXPECT_THROW(block(Var<float>(Tensor<float>({1, 128, 16, 16})), Var<float>(Tensor<float>({1, 64, 30, 32}))),
               ShapeError);
}

// Untrained sub-pixel/bilinear upsampling should not favour any of the four
// output phases: per-phase means agree to a small fraction of the spread.
TEST(UpBlock, NoCheckerboardAtInitialization) {
  double phase_sum[2][2] = {{0, 0}, {0, 0}};
  double total = 0, total_sq = 0;
  long count = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + trial);
    UpBlock<float> block(16, 8, 16, tiny(), rng);
    const auto x = random_tensor<float>({1, 16, 8, 8}, 5000 + trial, 0.0, 1.0);
    const auto y = block.upsample(Var<float>(x)).value();
    for (int c = 0; c < y.shape().c; ++c)
      for (int yy = 0; yy < y.shape().h; ++yy)
        for (int xx = 0; xx < y.shape().w; ++xx) {
          const double v = y.at(0, c, yy, xx);
          phase_sum[yy % 2][xx % 2] += v;
          total += v;
          total_sq += v * v;
          ++count;
        }
  }
  const double mean = total / count;
  const double sd = std::sqrt(total_sq / count - mean * mean);
  const double per_phase = count / 4.0;
  double lo = 1e300, hi = -1e300;
  for (auto& row : phase_sum)
    for (double s : row) {
      lo = std::min(lo, s / per_phase);
      hi = std::max(hi, s / per_phase);
    }
  EXPECT_LT(hi - lo, 0.05 * sd);
  // Even vs odd pixel positions, per axis.
  const double even_x = (phase_sum[0][0] + phase_sum[1][0]) / (2 * per_phase);
  const double odd_x = (phase_sum[0][1] + phase_sum[1][1]) / (2 * per_phase);
  EXPECT_LT(std::abs(even_x - odd_x), 0.05 * sd);
}

TEST(UpBlock, SubPixelBranchIsTheDefinitionalShuffle) {
  Rng rng(7);
  UpBlock<float> block(4, 4, 8, tiny(), rng);
  const Var<float> x(random_tensor<float>({1, 4, 4, 4}, 8));
  const auto conv = block.subpixel(x).value();
  const auto shuffled = pixel_shuffle(Var<float>(conv), 2).value();
  for (int c = 0; c < shuffled.shape().c; ++c)
    for (int y = 0; y < 8; ++y)
      for (int xx = 0; xx < 8; ++xx)
        ASSERT_EQ(shuffled.at(0, c, y, xx), conv.at(0, c * 4 + (y % 2) * 2 + (xx % 2), y / 2, xx / 2));
}

TEST(DeformNet, ShapePreservationAtCanonicalSizes) {
  const DeformNet<float> net(tiny());
  for (auto [h, w] : {std::pair{480, 640}, std::pair{96, 128}}) {
    const Image img = irisdeform::testing::random_image(h, w, 1);
    const Mask mask(h, w, 1);
    const Image out = net.infer(img, mask);
    EXPECT_EQ(out.height(), h);
    EXPECT_EQ(out.width(), w);
  }
}

TEST(DeformNet, OutputInUnitInterval) {
  const DeformNet<float> net(tiny(3));
  const auto x = random_tensor<float>({2, 2, 32, 32}, 9, -50.0, 50.0);
  NoGradGuard g;
  const auto y = net.forward(Var<float>(x)).value();
  EXPECT_EQ(y.shape(), (Shape{2, 1, 32, 32}));
  for (float v : y.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(DeformNet, NonDivisibleInputs) {
  const DeformNet<float> net(tiny());
  EXPECT_THROW(net.forward(Var<float>(Tensor<float>({1, 2, 24, 24}))), ShapeError);
  EXPECT_THROW(net.forward(Var<float>(Tensor<float>({1, 3, 32, 32}))), ShapeError);
  NoGradGuard g;
  const auto y = net.forward_any(Var<float>(random_tensor<float>({1, 2, 75, 100}, 3, 0, 1))).value();
  EXPECT_EQ(y.shape(), (Shape{1, 1, 75, 100}));
}

TEST(DeformNet, DeterministicUnderSeed) {
  const DeformNet<float> a(tiny()), b(tiny());
  const Image img = irisdeform::testing::random_image(48, 64, 2);
  const Mask mask(48, 64, 1);
  EXPECT_EQ(a.infer(img, mask), b.infer(img, mask));
  ModelConfig other = tiny();
  other.seed = 6;
  EXPECT_NE(DeformNet<float>(other).infer(img, mask), a.infer(img, mask));
}

TEST(DeformNet, ParameterCountIndependentOfInput) {
  DeformNet<float> net(tiny());
  const std::size_t n = net.parameter_count();
  NoGradGuard g;
  (void)net.forward(Var<float>(Tensor<float>({1, 2, 32, 32})));
  (void)net.forward(Var<float>(Tensor<float>({1, 2, 64, 48})));
  EXPECT_EQ(net.parameter_count(), n);
  EXPECT_GT(n, 0u);
}

TEST(DeformNet, EveryParameterReceivesGradient) {
  DeformNet<float> net(tiny(3));
  const Var<float> x(random_tensor<float>({2, 2, 32, 32}, 11, 0, 1));
  const Var<float> target(random_tensor<float>({2, 1, 32, 32}, 12, 0, 1));
  Var<float> loss = mean_abs_diff(net.forward(x), target);
  loss.backward();
  for (auto& [name, p] : net.named_parameters()) {
    ASSERT_TRUE(p.has_grad()) << name;
    double s = 0;
    for (float g : p.grad().values()) s += std::abs(g);
    EXPECT_GT(s, 0.0) << name;
  }
}

TEST(DeformNet, FiniteDifferenceGradientOnSmallCrop) {
  ModelConfig cfg = tiny(2, 8);
  cfg.dense_layers_per_block = 1;
  DeformNet<double> net(cfg);
  const auto target = random_tensor<double>({1, 1, 16, 16}, 13, 0, 1);
  auto f = [&](const std::vector<Var<double>>& v) { return mean_sq_diff(net.forward(v[0]), Var<double>(target)); };
  const auto r = irisdeform::testing::grad_check(f, {random_tensor<double>({1, 2, 16, 16}, 14, 0, 1)});
  EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(DeformNet, PrecisionsAgree) {
  const DeformNet<float> f(tiny(2));
  DeformNet<double> d(tiny(2));
  copy_parameters(const_cast<DeformNet<float>&>(f), d);
  const auto x = random_tensor<double>({1, 2, 16, 16}, 15, 0, 1);
  NoGradGuard g;
  const auto yf = f.forward(Var<float>(x.cast<float>())).value();
  const auto yd = d.forward(Var<double>(x)).value();
  for (std::size_t i = 0; i < yd.numel(); ++i) EXPECT_NEAR(yf.data()[i], yd.data()[i], 1e-5);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  TempDir dir("ckpt");
  DeformNet<float> net(tiny());
  save_model(dir / "m.bin", net, R"({"note":"x"})");
  const auto back = load_model(dir / "m.bin");
  EXPECT_EQ(back->config(), net.config());
  const Image img = irisdeform::testing::random_image(48, 64, 3);
  const Mask mask = geometry::rasterize_mask(irisdeform::testing::concentric(32, 24, 6, 20), 48, 64);
  const Image a = net.infer(img, mask), b = back->infer(img, mask);
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a.pixels()[i] - b.pixels()[i])));
  EXPECT_EQ(worst, 0.0);
  EXPECT_EQ(parameter_hash(net), parameter_hash(*back));
  EXPECT_TRUE(std::filesystem::exists(dir / "m.bin.json"));
  const std::string sidecar = irisdeform::testing::read_bytes(dir / "m.bin.json");
  EXPECT_NE(sidecar.find(file_sha256(dir / "m.bin")), std::string::npos);
  EXPECT_NE(sidecar.find("base_channels"), std::string::npos);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  TempDir dir("ckpt_trunc");
  DeformNet<float> net(tiny(2));
  save_model(dir / "m.bin", net);
  const std::string bytes = irisdeform::testing::read_bytes(dir / "m.bin");
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    irisdeform::testing::write_bytes(dir / "t.bin", bytes.substr(0, cut));
    EXPECT_THROW(load_model(dir / "t.bin"), CheckpointError) << cut;
  }
  EXPECT_THROW(load_model(dir / "missing.bin"), IoError);
}

TEST(Checkpoint, VersionAndConfigMismatch) {
  TempDir dir("ckpt_ver");
  DeformNet<float> net(tiny(4));
  save_model(dir / "m.bin", net);
  EXPECT_THROW(load_model(dir / "m.bin", tiny(3)), CheckpointError);
  EXPECT_NO_THROW(load_model(dir / "m.bin", tiny(4)));
  std::string bytes = irisdeform::testing::read_bytes(dir / "m.bin");
  bytes[8] = static_cast<char>(bytes[8] + 1);  // version word follows the 8-byte magic
  irisdeform::testing::write_bytes(dir / "v.bin", bytes);
  EXPECT_THROW(load_model(dir / "v.bin"), CheckpointError);
  bytes = irisdeform::testing::read_bytes(dir / "m.bin");
  bytes[0] = 'X';
  irisdeform::testing::write_bytes(dir / "x.bin", bytes);
  EXPECT_THROW(load_model(dir / "x.bin"), CheckpointError);
}

TEST(Checkpoint, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc", 3), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace irisdeform::nn
