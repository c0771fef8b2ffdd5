// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/segmenter.hpp"

#include <numeric>
#include <sstream>

#include "irisdeform/checkpoint.hpp"
#include "irisdeform/deform_net.hpp"
#include "irisdeform/optim.hpp"
#include "json.hpp"

namespace irisdeform {
using nn::Var;

std::string SegmenterConfig::to_json() const {
  return nlohmann::json{{"width", width}, {"seed", seed}}.dump();
}

SegmenterConfig SegmenterConfig::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SegmenterConfig c;
    c.width = j.value("width", c.width);
    c.seed = j.value("seed", c.seed);
    if (c.width < 2) throw ConfigError("segmenter width must be >= 2");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("segmenter config: ") + e.what());
  }
}

template <typename T>
Segmenter<T>::Segmenter(const SegmenterConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.seed);
  const int w = cfg.width;
  in_ = nn::Conv2d<T>(1, w, 3, 1, rng);
  down1_ = nn::Conv2d<T>(w, 2 * w, 3, 2, rng);
  down2_ = nn::Conv2d<T>(2 * w, 4 * w, 3, 2, rng);
  mid_ = nn::Conv2d<T>(4 * w, 4 * w, 3, 1, rng);
  up1_ = nn::Conv2d<T>(4 * w, 2 * w, 3, 1, rng);
  fuse1_ = nn::Conv2d<T>(4 * w, 2 * w, 3, 1, rng);
  up0_ = nn::Conv2d<T>(2 * w, w, 3, 1, rng);
  fuse0_ = nn::Conv2d<T>(2 * w, w, 3, 1, rng);
  head_ = nn::Conv2d<T>(w, 1, 1, 1, rng);
}

template <typename T>
Var<T> Segmenter<T>::forward(const Var<T>& x) const {
  const T s = T(0.2);
  const nn::Shape sh = x.shape();
  Var<T> e0 = nn::leaky_relu(in_(x), s);
  Var<T> e1 = nn::leaky_relu(down1_(e0), s);
  Var<T> e2 = nn::leaky_relu(down2_(e1), s);
  Var<T> m = nn::leaky_relu(mid_(e2), s);
  Var<T> u1 = nn::leaky_relu(up1_(nn::resize_bilinear(m, sh.h / 2, sh.w / 2)), s);
  Var<T> d1 = nn::leaky_relu(fuse1_(nn::concat_channels<T>({u1, e1})), s);
  Var<T> u0 = nn::leaky_relu(up0_(nn::resize_bilinear(d1, sh.h, sh.w)), s);
  Var<T> d0 = nn::leaky_relu(fuse0_(nn::concat_channels<T>({u0, e0})), s);
  return head_(d0);
}

template <typename T>
Var<T> Segmenter<T>::logits(const Var<T>& x) const {
  const nn::Shape s = x.shape();
  if (s.c != 1) throw ShapeError("segmenter expects one input channel, got " + s.str());
  const int ph = (4 - s.h % 4) % 4, pw = (4 - s.w % 4) % 4;
  if (ph == 0 && pw == 0) return forward(x);
  return nn::crop(forward(nn::reflect_pad(x, ph, pw)), s.h, s.w);
}

template <typename T>
Mask Segmenter<T>::segment(const Image& image) const {
  nn::NoGradGuard guard;
  const auto out = logits(Var<T>(nn::image_to_tensor<T>(image))).value();
  Mask m(image.height(), image.width());
  for (std::size_t i = 0; i < m.size(); ++i) m.pixels()[i] = out.data()[i] > T(0) ? 1 : 0;
  return m;
}

template <typename T>
void Segmenter<T>::visit_parameters(const std::string& prefix,
                                    const typename nn::Module<T>::Visitor& fn) {
  in_.visit_parameters(prefix + "in.", fn);
  down1_.visit_parameters(prefix + "down1.", fn);
  down2_.visit_parameters(prefix + "down2.", fn);
  mid_.visit_parameters(prefix + "mid.", fn);
  up1_.visit_parameters(prefix + "up1.", fn);
  fuse1_.visit_parameters(prefix + "fuse1.", fn);
  up0_.visit_parameters(prefix + "up0.", fn);
  fuse0_.visit_parameters(prefix + "fuse0.", fn);
  head_.visit_parameters(prefix + "head.", fn);
}

template class Segmenter<float>;
template class Segmenter<double>;

double mask_iou(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw ShapeError("mask_iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.pixels()[i] != 0, y = b.pixels()[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double segmenter_iou(const Segmenter<float>& seg, const std::vector<dataset::SampleRecord>& records) {
  if (records.empty()) throw TrainingError("segmenter_iou: no records");
  double sum = 0.0;
  for (const auto& r : records) {
    const auto s = dataset::load_sample(r);
    sum += mask_iou(seg.segment(s.image), s.mask);
  }
  return sum / static_cast<double>(records.size());
}

std::unique_ptr<Segmenter<float>> prepare_segmenter(const std::vector<dataset::SampleRecord>& train,
                                                    const std::vector<dataset::SampleRecord>& val,
                                                    const SegmenterConfig& cfg,
                                                    const SegmenterTrainConfig& tcfg,
                                                    SegmenterReport* report) {
  if (train.empty() || val.empty()) throw TrainingError("prepare_segmenter: empty train or val set");
  std::vector<dataset::LoadedSample> data;
  data.reserve(train.size());
  for (const auto& r : train) data.push_back(dataset::load_sample(r));
  std::vector<dataset::LoadedSample> val_data;
  for (const auto& r : val) val_data.push_back(dataset::load_sample(r));
  const int h = data[0].image.height(), w = data[0].image.width();

  auto seg = std::make_unique<Segmenter<float>>(cfg);
  nn::Adam opt(seg->parameters(), tcfg.learning_rate);
  Rng rng(tcfg.seed);
  std::vector<std::size_t> order(data.size());
  SegmenterReport rep;
  const std::size_t per_epoch = tcfg.samples_per_epoch > 0
                                    ? std::min<std::size_t>(tcfg.samples_per_epoch, data.size())
                                    : data.size();
  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t b = 0; b < per_epoch; b += tcfg.batch_size) {
      const std::size_t e = std::min(per_epoch, b + tcfg.batch_size);
      const int n = static_cast<int>(e - b);
      nn::Tensor<float> x(nn::Shape{n, 1, h, w}), y(nn::Shape{n, 1, h, w});
      for (int i = 0; i < n; ++i) {
        const auto& s = data[order[b + i]];
        if (s.image.height() != h || s.image.width() != w)
          throw ShapeError("prepare_segmenter: all training images must share one size");
        for (std::size_t p = 0; p < s.image.size(); ++p) {
          x.data()[i * s.image.size() + p] = s.image.pixels()[p];
          y.data()[i * s.image.size() + p] = s.mask.pixels()[p] ? 1.0f : 0.0f;
        }
      }
      opt.zero_grad();
      Var<float> loss = nn::bce_with_logits(seg->logits(Var<float>(std::move(x))), y);
      if (!std::isfinite(loss.value().item())) throw TrainingError("segmenter loss became non-finite");
      loss.backward();
      opt.step();
    }
    double iou = 0.0;
    for (const auto& s : val_data) iou += mask_iou(seg->segment(s.image), s.mask);
    iou /= static_cast<double>(val_data.size());
    rep.epoch_iou.push_back(iou);
    rep.epochs = epoch;
    rep.val_iou = iou;
    if (iou >= tcfg.target_iou) break;
  }
  if (report) *report = rep;
  if (rep.val_iou < tcfg.target_iou) {
    std::ostringstream msg;
    msg << "segmenter reached IoU " << rep.val_iou << " < target " << tcfg.target_iou << " after "
        << rep.epochs << " epochs; history:";
    for (double v : rep.epoch_iou) msg << " " << v;
    throw TrainingError(msg.str());
  }
  seg->set_requires_grad(false);
  return seg;
}

void save_segmenter(const std::filesystem::path& path, Segmenter<float>& seg, const std::string& meta) {
  CheckpointData d;
  d.kind = kSegmenterKind;
  d.config = seg.config().to_json();
  d.meta = meta;
  d.tensors = collect_tensors(seg);
  save_checkpoint(path, d);
}

std::unique_ptr<Segmenter<float>> load_segmenter(const std::filesystem::path& path) {
  const CheckpointData d = load_checkpoint(path);
  if (d.kind != kSegmenterKind)
    throw CheckpointError("checkpoint kind '" + d.kind + "' is not " + kSegmenterKind);
  auto seg = std::make_unique<Segmenter<float>>(SegmenterConfig::from_json(d.config));
  assign_tensors(*seg, d.tensors);
  seg->set_requires_grad(false);
  return seg;
}

}  // namespace irisdeform
