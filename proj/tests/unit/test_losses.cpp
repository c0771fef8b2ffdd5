// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "gradcheck.hpp"
#include "irisdeform/deform_net.hpp"
#include "irisdeform/filter_bank.hpp"
#include "irisdeform/losses.hpp"
#include "irisdeform/perceptual.hpp"
#include "irisdeform/segmenter.hpp"
#include "test_util.hpp"

namespace irisdeform::loss {
namespace {

using irisdeform::testing::concentric;
using irisdeform::testing::grad_check;
using irisdeform::testing::random_tensor;
using nn::Tensor;
using nn::Var;
using Plans = std::vector<std::shared_ptr<const geometry::SamplingPlan>>;

// Double-precision evaluators on 16x16 crops.
struct Fixture {
  Segmenter<double> seg{SegmenterConfig{8, 3}};
  PerceptualPyramid<double> pyramid{23, 4};
  FilterBank bank = default_filter_bank(3, 5, 7);
  Var<double> bank_var{bank_weights<double>(bank)};
  geometry::EyeAnnotation ann = concentric(7.5, 7.5, 2.5, 6.5);
  Plans plans{identity_plan(ann, 16, 16, 32, 8)};

  Fixture() {
    seg.set_requires_grad(false);
    pyramid.set_requires_grad(false);
  }
  LossSuite<double> suite() const {
    LossSuite<double> s;
    s.segmenter = &seg;
    s.bank = bank_var;
    s.perceptual = &pyramid;
    s.grid_width = 32;
    s.grid_height = 8;
    return s;
  }
};

Tensor<double> crop_image(std::uint64_t seed) { return random_tensor<double>({1, 1, 16, 16}, seed, 0.05, 0.95); }

TEST(Losses, EveryTermIsZeroAtEquality) {
  Fixture fx;
  const Var<double> x(crop_image(1));
  EXPECT_EQ(mask_loss(x, x, fx.seg).value().item(), 0.0);
  EXPECT_EQ(identity_loss(x, x, fx.plans, fx.bank_var).value().item(), 0.0);
  EXPECT_EQ(l1_loss(x, x).value().item(), 0.0);
  EXPECT_EQ(perceptual_loss(x, x, fx.pyramid).value().item(), 0.0);
  for (const LossWeights& w : {LossWeights{}, LossWeights{3, 0, 0.5, 2}, LossWeights{0, 0, 0, 1}})
    EXPECT_EQ(values_of(composite_loss(x, x, fx.plans, w, fx.suite())).total, 0.0);
}

TEST(Losses, TermsAreNonNegativeAndSymmetric) {
  Fixture fx;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Var<double> a(crop_image(10 + s)), b(crop_image(100 + s));
    const double m = mask_loss(a, b, fx.seg).value().item();
    EXPECT_GT(m, 0.0);
    EXPECT_DOUBLE_EQ(m, mask_loss(b, a, fx.seg).value().item());
    const double p = perceptual_loss(a, b, fx.pyramid).value().item();
    EXPECT_GT(p, 0.0);
    EXPECT_DOUBLE_EQ(p, perceptual_loss(b, a, fx.pyramid).value().item());
    const double l = l1_loss(a, b).value().item();
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
    EXPECT_GT(identity_loss(a, b, fx.plans, fx.bank_var).value().item(), 0.0);
  }
}

TEST(Losses, L1OfConstantOffset) {
  const Tensor<double> a = crop_image(3);
  Tensor<double> b = a;
  for (auto& v : b.values()) v += 0.1;
  EXPECT_NEAR(l1_loss(Var<double>(a), Var<double>(b)).value().item(), 0.1, 1e-12);
}

TEST(Losses, IdentityIgnoresConstantShifts) {
  Fixture fx;
  const Tensor<double> a = crop_image(4), b = crop_image(5);
  Tensor<double> a_shift = a, b_shift = b;
  for (auto& v : a_shift.values()) v += 0.13;
  for (auto& v : b_shift.values()) v -= 0.07;
  const double base = identity_loss(Var<double>(a), Var<double>(b), fx.plans, fx.bank_var).value().item();
  EXPECT_NEAR(identity_loss(Var<double>(a_shift), Var<double>(b), fx.plans, fx.bank_var).value().item(), base, 1e-12);
  EXPECT_NEAR(identity_loss(Var<double>(a), Var<double>(b_shift), fx.plans, fx.bank_var).value().item(), base, 1e-12);
  EXPECT_NEAR(identity_loss(Var<double>(a_shift), Var<double>(a), fx.plans, fx.bank_var).value().item(), 0.0, 1e-12);
}

TEST(Losses, IdentityDetectsAngularShift) {
  const auto ann = concentric(64, 48, 14, 40);
  const FilterBank bank = default_filter_bank();
  const Var<double> w(bank_weights<double>(bank));
  const Plans plans{identity_plan(ann, 96, 128, 512, 64)};
  auto texture = [](double shift) {
    return irisdeform::testing::render(96, 128, [&](double x, double y) {
      const double t = std::atan2(y - 48, x - 64) - shift;
      const double r = std::hypot(x - 64, y - 48);
      return 0.5 + 0.2 * std::sin(7 * t) * std::cos(r / 5.0) + 0.1 * std::sin(13 * t + r / 3.0);
    });
  };
  const Image a = texture(0.0), b = texture(10.0 * std::numbers::pi / 180.0);
  const double d = identity_loss(Var<double>(nn::image_to_tensor<double>(a)), Var<double>(nn::image_to_tensor<double>(b)),
                                 plans, w).value().item();
  EXPECT_GT(d, 1e-3);
}

TEST(Losses, IdentityPlanRejectsAnnulusOutsideImage) {
  EXPECT_THROW(identity_plan(concentric(10, 48, 5, 30), 96, 128, 64, 8), GeometryError);
  EXPECT_NO_THROW(identity_plan(concentric(64, 48, 10, 40), 96, 128, 64, 8));
}

TEST(Losses, MaskLossDependsOnlyOnLogits) {
  Fixture fx;
  const Var<double> a(crop_image(6));
  // Same image content through a copy: identical logits, zero loss.
  const Var<double> b(Tensor<double>(a.value()));
  EXPECT_EQ(mask_loss(a, b, fx.seg).value().item(), 0.0);
}

TEST(Losses, ShapeMismatch) {
  Fixture fx;
  const Var<double> a(crop_image(7)), b(random_tensor<double>({1, 1, 16, 12}, 8));
  EXPECT_THROW(mask_loss(a, b, fx.seg), ShapeError);
  EXPECT_THROW(identity_loss(a, b, fx.plans, fx.bank_var), ShapeError);
  EXPECT_THROW(l1_loss(a, b), ShapeError);
  EXPECT_THROW(perceptual_loss(a, b, fx.pyramid), ShapeError);
}

void expect_fd_ok(const std::function<Var<double>(const Var<double>&, const Var<double>&)>& term) {
  const auto r = grad_check([&](const std::vector<Var<double>>& v) { return term(v[0], Var<double>(crop_image(21))); },
                            {crop_image(20)});
  EXPECT_LT(r.norm_rel_error, 1e-3) << "max element rel " << r.max_rel_error;
  EXPECT_GT(r.grad_scale, 0.0);
}

TEST(LossGradients, MaskTerm) {
  Fixture fx;
  expect_fd_ok([&](const Var<double>& o, const Var<double>& t) { return mask_loss(o, t, fx.seg); });
}

TEST(LossGradients, IdentityTerm) {
  Fixture fx;
  expect_fd_ok([&](const Var<double>& o, const Var<double>& t) { return identity_loss(o, t, fx.plans, fx.bank_var); });
}

TEST(LossGradients, L1Term) {
  expect_fd_ok([&](const Var<double>& o, const Var<double>& t) { return l1_loss(o, t); });
}

TEST(LossGradients, PerceptualTerm) {
  Fixture fx;
  expect_fd_ok([&](const Var<double>& o, const Var<double>& t) { return perceptual_loss(o, t, fx.pyramid); });
}

TEST(LossGradients, CompositeTotal) {
  Fixture fx;
  const auto suite = fx.suite();
  expect_fd_ok([&](const Var<double>& o, const Var<double>& t) {
    return composite_loss(o, t, fx.plans, LossWeights{0.5, 2, 1, 3}, suite).total;
  });
}

TEST(Composite, LinearInWeights) {
  Fixture fx;
  const auto suite = fx.suite();
  const Var<double> a(crop_image(30)), b(crop_image(31));
  const LossValues t = values_of(composite_loss(a, b, fx.plans, LossWeights{}, suite));
  const LossWeights ws[] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {0.3, 1.7, 2.5, 0.2}};
  for (const auto& w : ws) {
    const LossValues v = values_of(composite_loss(a, b, fx.plans, w, suite));
    EXPECT_NEAR(v.total, w.mask * t.mask + w.identity * t.identity + w.l1 * t.l1 + w.perceptual * t.perceptual, 1e-9);
    const LossValues d = values_of(composite_loss(a, b, fx.plans, w.scaled(2.0), suite));
    EXPECT_NEAR(d.total, 2.0 * v.total, 1e-9);
  }
  const LossValues only_l1 = values_of(composite_loss(a, b, fx.plans, LossWeights{0, 0, 1, 0}, suite));
  EXPECT_EQ(only_l1.total, l1_loss(a, b).value().item());
  EXPECT_EQ(only_l1.total, only_l1.l1);
}

TEST(Composite, ExternalPerceptualAdapter) {
  Fixture fx;
  auto suite = fx.suite();
  int calls = 0;
  suite.external_perceptual = [&](const Var<double>& o, const Var<double>& t) {
    ++calls;
    return nn::scale(nn::mean_abs_diff(o, t), 10.0);
  };
  const Var<double> a(crop_image(32)), b(crop_image(33));
  const LossValues v = values_of(composite_loss(a, b, fx.plans, LossWeights{0, 0, 0, 1}, suite));
  EXPECT_EQ(calls, 1);
  EXPECT_NEAR(v.perceptual, 10.0 * l1_loss(a, b).value().item(), 1e-12);
}

TEST(Composite, ImageWrapperAndErrors) {
  Fixture fx;
  const auto suite = fx.suite();
  const Image a = nn::tensor_to_image(crop_image(34)), b = nn::tensor_to_image(crop_image(35));
  const LossValues v = composite_loss<double>(a, b, fx.ann, LossWeights{}, suite);
  EXPECT_GT(v.total, 0.0);
  EXPECT_THROW(composite_loss<double>(a, b, fx.ann, LossWeights{0, 0, 0, 0}, suite), ConfigError);
  EXPECT_THROW(composite_loss<double>(a, b, fx.ann, LossWeights{-1, 1, 1, 1}, suite), ConfigError);
  LossSuite<double> empty;
  EXPECT_THROW(composite_loss<double>(a, b, fx.ann, LossWeights{}, empty), ConfigError);
}

TEST(Perceptual, BlurScoresBelowUnrelatedImage) {
  const PerceptualPyramid<double> pyr;
  int wins = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Image img = irisdeform::testing::detailed_texture(48, 64, 100 + trial);
    const Image blurred = irisdeform::testing::gaussian_blur(img, 1.0);
    Image other = irisdeform::testing::detailed_texture(48, 64, 900 + trial);
    irisdeform::testing::match_moments(other, img);
    const auto t = [](const Image& i) { return Var<double>(nn::image_to_tensor<double>(i)); };
    const double db = pyr.distance(t(img), t(blurred)).value().item();
    const double du = pyr.distance(t(img), t(other)).value().item();
    wins += db < du;
  }
  EXPECT_EQ(wins, 50);
}

TEST(FilterBankFile, MeanRemovedOnLoad) {
  std::vector<std::uint8_t> bytes(12 + 9 * 8);
  const std::uint32_t hdr[3] = {1, 3, 3};
  std::memcpy(bytes.data(), hdr, 12);
  for (int i = 0; i < 9; ++i) {
    const double v = 0.5;
    std::memcpy(bytes.data() + 12 + 8 * i, &v, 8);
  }
  const FilterBank b = parse_filter_bank(bytes);
  ASSERT_EQ(b.size(), 1);
  for (double v : b.kernels[0]) EXPECT_EQ(v, 0.0);
}

TEST(FilterBankFile, RoundTripBitExact) {
  irisdeform::testing::TempDir dir("bank");
  const FilterBank bank = default_filter_bank(7, 17, 7);
  EXPECT_EQ(bank.size(), 7);
  EXPECT_EQ(bank.height, 17);
  save_filter_bank(dir / "bank.bin", bank);
  const FilterBank back = load_filter_bank(dir / "bank.bin");
  ASSERT_EQ(back.size(), 7);
  EXPECT_EQ(back.height, 17);
  EXPECT_EQ(back.width, 17);
  for (int k = 0; k < 7; ++k) EXPECT_EQ(back.kernels[k], bank.kernels[k]);
  EXPECT_EQ(serialize_filter_bank(back), serialize_filter_bank(bank));
}

TEST(FilterBankFile, MalformedInputs) {
  EXPECT_THROW(parse_filter_bank({}), ParseError);
  std::vector<std::uint8_t> header(12, 0);
  EXPECT_THROW(parse_filter_bank(header), ParseError);  // k = 0
  const std::uint32_t hdr[3] = {2, 3, 3};
  std::memcpy(header.data(), hdr, 12);
  header.resize(12 + 9 * 8);  // one kernel short
  EXPECT_THROW(parse_filter_bank(header), ParseError);
  header.resize(12 + 18 * 8 + 3);  // trailing bytes
  EXPECT_THROW(parse_filter_bank(header), ParseError);
}

TEST(FilterBankFile, DefaultBankIsZeroMeanOrthonormal) {
  const FilterBank bank = default_filter_bank();
  for (int a = 0; a < bank.size(); ++a) {
    double sum = 0;
    for (double v : bank.kernels[a]) sum += v;
    EXPECT_NEAR(sum, 0.0, 1e-6);
    for (int b = 0; b < bank.size(); ++b) {
      double dot = 0;
      for (std::size_t i = 0; i < bank.kernels[a].size(); ++i) dot += bank.kernels[a][i] * bank.kernels[b][i];
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-9);
    }
  }
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW(LossWeights{}.validate());
  EXPECT_NO_THROW((LossWeights{0, 0, 1, 0}.validate()));
  EXPECT_THROW((LossWeights{0, 0, 0, 0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{1, -0.1, 1, 1}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{1, NAN, 1, 1}.validate()), ConfigError);
}

}  // namespace
}  // namespace irisdeform::loss
