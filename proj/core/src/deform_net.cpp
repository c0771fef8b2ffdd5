// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/deform_net.hpp"

#include "json.hpp"

namespace irisdeform::nn {

void ModelConfig::validate() const {
  if (depth < 2) throw ConfigError("model depth must be >= 2");
  if (depth > 8) throw ConfigError("model depth must be <= 8");
  if (base_channels < 8) throw ConfigError("base_channels must be >= 8");
  if (base_channels % 2 != 0) throw ConfigError("base_channels must be even");
  if (growth < 1) throw ConfigError("growth must be >= 1");
  if (input_channels != 2) throw ConfigError("input_channels must be 2 (image + mask)");
  if (output_channels != 1) throw ConfigError("output_channels must be 1");
  if (dense_layers_per_block < 1) throw ConfigError("dense_layers_per_block must be >= 1");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must be in [0, 1)");
}

int ModelConfig::channels(int level) const {
  if (level <= 1) return base_channels;
  int c = base_channels;
  for (int k = 1; k < level; ++k) c *= growth;
  return c;
}

std::string ModelConfig::to_json() const {
  const nlohmann::json j = {{"depth", depth},
                            {"base_channels", base_channels},
                            {"growth", growth},
                            {"input_channels", input_channels},
                            {"output_channels", output_channels},
                            {"dense_layers_per_block", dense_layers_per_block},
                            {"leaky_slope", leaky_slope},
                            {"instance_norm", instance_norm},
                            {"seed", seed}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.growth = j.value("growth", c.growth);
    c.input_channels = j.value("input_channels", c.input_channels);
    c.output_channels = j.value("output_channels", c.output_channels);
    c.dense_layers_per_block = j.value("dense_layers_per_block", c.dense_layers_per_block);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.instance_norm = j.value("instance_norm", c.instance_norm);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
}

template <typename T>
DownBlock<T>::DownBlock(int in_channels, int out_channels, const ModelConfig& cfg, Rng& rng)
    : strided(in_channels, out_channels / 2, 3, 2, rng),
      resampled(in_channels, out_channels / 2, 3, 1, rng),
      norm(out_channels),
      use_norm(cfg.instance_norm),
      slope(static_cast<T>(cfg.leaky_slope)) {}

template <typename T>
Var<T> DownBlock<T>::operator()(const Var<T>& x) const {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0)
    throw ShapeError("down_block: spatial dims must be even, got " + s.str());
  Var<T> a = strided(x);
  Var<T> b = resampled(resize_bilinear(x, s.h / 2, s.w / 2));
  Var<T> y = concat_channels<T>({a, b});
  if (use_norm) y = norm(y);
  return leaky_relu(y, slope);
}

template <typename T>
void DownBlock<T>::visit_parameters(const std::string& prefix,
                                    const typename Module<T>::Visitor& fn) {
  strided.visit_parameters(prefix + "strided.", fn);
  resampled.visit_parameters(prefix + "resampled.", fn);
  if (use_norm) norm.visit_parameters(prefix + "norm.", fn);
}

template <typename T>
UpBlock<T>::UpBlock(int in_channels, int skip_channels, int out_channels, const ModelConfig& cfg,
                    Rng& rng)
    : subpixel(in_channels, 4 * (out_channels / 2), 3, 1, rng),
      resampled(in_channels, out_channels / 2, 3, 1, rng),
      up_norm(out_channels),
      use_norm(cfg.instance_norm),
      slope(static_cast<T>(cfg.leaky_slope)) {
  icnr_init(subpixel, 2, rng);
  int cin = out_channels + skip_channels;
  for (int i = 0; i < cfg.dense_layers_per_block; ++i) {
    dense.emplace_back(cin, out_channels, 3, 1, rng);
    dense_norm.emplace_back(out_channels);
    cin += out_channels;
  }
}

template <typename T>
Var<T> UpBlock<T>::upsample(const Var<T>& x) const {
  const Shape s = x.shape();
  Var<T> a = pixel_shuffle(subpixel(x), 2);
  Var<T> b = resampled(resize_bilinear(x, 2 * s.h, 2 * s.w));
  Var<T> u = concat_channels<T>({a, b});
  if (use_norm) u = up_norm(u);
  return leaky_relu(u, slope);
}

template <typename T>
Var<T> UpBlock<T>::operator()(const Var<T>& x, const Var<T>& skip) const {
  const Shape s = x.shape();
  const Shape k = skip.shape();
  if (k.n != s.n || k.h != 2 * s.h || k.w != 2 * s.w)
    throw ShapeError("up_block: skip " + k.str() + " must be twice the spatial size of " + s.str());
  std::vector<Var<T>> stack{upsample(x), skip};
  Var<T> y;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    y = dense[i](concat_channels(stack));
    if (use_norm) y = dense_norm[i](y);
    y = leaky_relu(y, slope);
    stack.push_back(y);
  }
  return y;
}

template <typename T>
void UpBlock<T>::visit_parameters(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  subpixel.visit_parameters(prefix + "subpixel.", fn);
  resampled.visit_parameters(prefix + "resampled.", fn);
  if (use_norm) up_norm.visit_parameters(prefix + "up_norm.", fn);
  for (std::size_t i = 0; i < dense.size(); ++i) {
    dense[i].visit_parameters(prefix + "dense" + std::to_string(i) + ".", fn);
    if (use_norm) dense_norm[i].visit_parameters(prefix + "dense_norm" + std::to_string(i) + ".", fn);
  }
}

template <typename T>
DeformNet<T>::DeformNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  int cin = cfg_.input_channels;
  for (int level = 1; level <= cfg_.depth; ++level) {
    down_.emplace_back(cin, cfg_.channels(level), cfg_, rng);
    cin = cfg_.channels(level);
  }
  for (int level = 0; level < cfg_.depth; ++level) {
    const int in = cfg_.channels(level + 1);
    const int skip = level == 0 ? cfg_.input_channels : cfg_.channels(level);
    up_.emplace_back(in, skip, cfg_.channels(level), cfg_, rng);
  }
  head_ = Conv2d<T>(cfg_.channels(0), cfg_.output_channels, 1, 1, rng);
}

template <typename T>
Var<T> DeformNet<T>::forward(const Var<T>& input) const {
  const Shape s = input.shape();
  if (s.c != cfg_.input_channels)
    throw ShapeError("forward: expected " + std::to_string(cfg_.input_channels) + " input channels");
  const int m = cfg_.stride_multiple();
  if (s.h % m != 0 || s.w % m != 0)
    throw ShapeError("forward: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " not divisible by " + std::to_string(m));
  std::vector<Var<T>> levels{input};
  for (const auto& block : down_) levels.push_back(block(levels.back()));
  Var<T> y = levels.back();
  for (int level = cfg_.depth - 1; level >= 0; --level) y = up_[level](y, levels[level]);
  return sigmoid(head_(y));
}

template <typename T>
Var<T> DeformNet<T>::forward_any(const Var<T>& input) const {
  const Shape s = input.shape();
  const int m = cfg_.stride_multiple();
  const int ph = (m - s.h % m) % m;
  const int pw = (m - s.w % m) % m;
  if (ph == 0 && pw == 0) return forward(input);
  return crop(forward(reflect_pad(input, ph, pw)), s.h, s.w);
}

template <typename T>
Image DeformNet<T>::infer(const Image& image, const Mask& target_mask) const {
  if (!image.same_shape(target_mask)) throw ShapeError("infer: image and mask sizes differ");
  NoGradGuard guard;
  const Var<T> in(make_input<T>({&image}, {&target_mask}));
  return tensor_to_image(forward_any(in).value());
}

template <typename T>
void DeformNet<T>::visit_parameters(const std::string& prefix,
                                    const typename Module<T>::Visitor& fn) {
  for (std::size_t i = 0; i < down_.size(); ++i)
    down_[i].visit_parameters(prefix + "down" + std::to_string(i + 1) + ".", fn);
  for (std::size_t i = 0; i < up_.size(); ++i)
    up_[i].visit_parameters(prefix + "up" + std::to_string(i) + ".", fn);
  head_.visit_parameters(prefix + "head.", fn);
}

template <typename T>
Tensor<T> make_input(const std::vector<const Image*>& images, const std::vector<const Mask*>& masks) {
  if (images.empty() || images.size() != masks.size())
    throw ShapeError("make_input: need matching, non-empty image and mask lists");
  const int h = images[0]->height();
  const int w = images[0]->width();
  Tensor<T> t(Shape{static_cast<int>(images.size()), 2, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n]->height() != h || images[n]->width() != w || !images[n]->same_shape(*masks[n]))
      throw ShapeError("make_input: all images and masks must share one size");
    T* img = t.data() + n * 2 * hw;
    T* msk = img + hw;
    const auto ip = images[n]->pixels();
    const auto mp = masks[n]->pixels();
    for (std::size_t i = 0; i < hw; ++i) {
      img[i] = static_cast<T>(ip[i]);
      msk[i] = mp[i] ? T{1} : T{0};
    }
  }
  return t;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  Tensor<T> t(Shape{1, 1, image.height(), image.width()});
  for (std::size_t i = 0; i < image.size(); ++i) t.data()[i] = static_cast<T>(image.pixels()[i]);
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int index) {
  const Shape s = t.shape();
  if (index < 0 || index >= s.n) throw ShapeError("tensor_to_image: index out of range");
  Image img(s.h, s.w);
  const T* src = t.data() + static_cast<std::size_t>(index) * s.c * s.plane();
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels()[i] = static_cast<float>(src[i]);
  return img;
}

template class DownBlock<float>;
template class DownBlock<double>;
template class UpBlock<float>;
template class UpBlock<double>;
template class DeformNet<float>;
template class DeformNet<double>;
template Tensor<float> make_input(const std::vector<const Image*>&, const std::vector<const Mask*>&);
template Tensor<double> make_input(const std::vector<const Image*>&, const std::vector<const Mask*>&);
template Tensor<float> image_to_tensor(const Image&);
template Tensor<double> image_to_tensor(const Image&);
template Image tensor_to_image(const Tensor<float>&, int);
template Image tensor_to_image(const Tensor<double>&, int);

}  // namespace irisdeform::nn
