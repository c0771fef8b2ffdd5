// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace irisdeform::synth {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kBumpCenter = 0.5;
constexpr double kBumpSigma = 0.18;
constexpr double kMidRatio = 0.45;
constexpr double kHalfRange = 0.25;

double bump(double r) {
  const double d = (r - kBumpCenter) / kBumpSigma;
  return std::exp(-0.5 * d * d);
}

// Signed angular distance wrapped into (-pi, pi].
double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 2.0 * kPi);
  if (d > kPi) d -= 2.0 * kPi;
  if (d <= -kPi) d += 2.0 * kPi;
  return d;
}

}  // namespace

std::string_view to_string(DeformationModel m) {
  return m == DeformationModel::kLinear ? "linear" : "gaussian-stretch";
}

DeformationModel deformation_model_from_string(std::string_view s) {
  if (s == "linear") return DeformationModel::kLinear;
  if (s == "gaussian-stretch") return DeformationModel::kGaussianStretch;
  throw ConfigError("unknown deformation_model '" + std::string(s) + "'");
}

void SynthConfig::validate() const {
  if (n_eyes < 1) throw ConfigError("n_eyes must be >= 1");
  if (frames_per_eye < 1) throw ConfigError("frames_per_eye must be >= 1");
  if (width < 32 || height < 32) throw ConfigError("image size must be at least 32x32");
  if (!(ratio_min > 0.0 && ratio_min < ratio_max && ratio_max < 1.0))
    throw ConfigError("ratio_range must satisfy 0 < min < max < 1");
  if (!(deformation_strength >= 0.0 && deformation_strength <= 0.25))
    throw ConfigError("deformation_strength must be in [0, 0.25] to keep the warp monotone");
  if (!(noise_sigma >= 0.0 && noise_sigma < 0.5)) throw ConfigError("noise_sigma must be in [0, 0.5)");
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 30.0))
    throw ConfigError("max_rotation_deg must be in [0, 30]");
}

std::string SynthConfig::to_json() const {
  const nlohmann::json j = {{"seed", seed},
                            {"n_eyes", n_eyes},
                            {"frames_per_eye", frames_per_eye},
                            {"width", width},
                            {"height", height},
                            {"ratio_range", {ratio_min, ratio_max}},
                            {"deformation_model", std::string(to_string(deformation_model))},
                            {"deformation_strength", deformation_strength},
                            {"eyelids", eyelids},
                            {"noise_sigma", noise_sigma},
                            {"max_rotation_deg", max_rotation_deg}};
  return j.dump(2);
}

SynthConfig SynthConfig::from_json(std::string_view text) {
  static const char* kKeys[] = {"seed",           "n_eyes",      "frames_per_eye",
                                "width",          "height",      "ratio_range",
                                "deformation_model", "deformation_strength", "eyelids",
                                "noise_sigma",    "max_rotation_deg"};
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
    for (const auto& [k, v] : j.items())
      if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* s) { return k == s; }) ==
          std::end(kKeys))
        throw ConfigError("unknown synth config key '" + k + "'");
    SynthConfig c;
    c.seed = j.value("seed", c.seed);
    c.n_eyes = j.value("n_eyes", c.n_eyes);
    c.frames_per_eye = j.value("frames_per_eye", c.frames_per_eye);
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    if (j.contains("ratio_range")) {
      const auto rr = j.at("ratio_range").get<std::vector<double>>();
      if (rr.size() != 2) throw ConfigError("ratio_range must have two entries");
      c.ratio_min = rr[0];
      c.ratio_max = rr[1];
    }
    if (j.contains("deformation_model"))
      c.deformation_model = deformation_model_from_string(j.at("deformation_model").get<std::string>());
    c.deformation_strength = j.value("deformation_strength", c.deformation_strength);
    c.eyelids = j.value("eyelids", c.eyelids);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.max_rotation_deg = j.value("max_rotation_deg", c.max_rotation_deg);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("synth config: ") + e.what());
  }
}

IrisTexture::IrisTexture(Rng& rng) {
  base_ = 0.45 + rng.uniform(-0.05, 0.05);
  const int n_waves = 48;
  for (int i = 0; i < n_waves; ++i) {
    Wave w;
    w.freq_theta = 3 + static_cast<int>(rng.index(26));
    if (rng.uniform() < 0.5) w.freq_theta = -w.freq_theta;
    w.freq_u = rng.uniform(0.2, 2.0);
    w.phase = rng.uniform(0.0, 2.0 * kPi);
    w.amplitude = 0.17 / std::sqrt(static_cast<double>(n_waves)) * rng.uniform(0.5, 1.5);
    waves_.push_back(w);
  }
  const int n_furrows = 10 + static_cast<int>(rng.index(6));
  for (int i = 0; i < n_furrows; ++i) {
    Furrow f;
    f.theta = rng.uniform(0.0, 2.0 * kPi);
    f.width = rng.uniform(0.03, 0.07);
    f.u_lo = rng.uniform(0.05, 0.4);
    f.u_hi = rng.uniform(0.6, 0.95);
    f.depth = rng.uniform(0.04, 0.1);
    furrows_.push_back(f);
  }
  const int n_crypts = 8 + static_cast<int>(rng.index(6));
  for (int i = 0; i < n_crypts; ++i) {
    Crypt c;
    c.u = rng.uniform(0.15, 0.85);
    c.theta = rng.uniform(0.0, 2.0 * kPi);
    c.su = rng.uniform(0.05, 0.1);
    c.st = rng.uniform(0.05, 0.12);
    c.depth = rng.uniform(0.06, 0.14);
    crypts_.push_back(c);
  }
  collarette_u_ = rng.uniform(0.3, 0.4);
  collarette_amp_ = rng.uniform(0.03, 0.06);
  collarette_m_ = 5 + static_cast<int>(rng.index(6));
  collarette_phase_ = rng.uniform(0.0, 2.0 * kPi);
}

double IrisTexture::value(double u, double theta) const {
  double v = base_;
  for (const auto& w : waves_)
    v += w.amplitude * std::cos(2.0 * kPi * w.freq_u * u + w.freq_theta * theta + w.phase);
  for (const auto& f : furrows_) {
    const double dt = angle_diff(theta, f.theta) / f.width;
    // Soft radial extent.
    const double lo = 1.0 / (1.0 + std::exp(-(u - f.u_lo) / 0.04));
    const double hi = 1.0 / (1.0 + std::exp((u - f.u_hi) / 0.04));
    v -= f.depth * std::exp(-0.5 * dt * dt) * lo * hi;
  }
  for (const auto& c : crypts_) {
    const double du = (u - c.u) / c.su;
    const double dt = angle_diff(theta, c.theta) / c.st;
    v -= c.depth * std::exp(-0.5 * (du * du + dt * dt));
  }
  const double dc = (u - collarette_u_) / 0.05;
  v += collarette_amp_ * std::exp(-0.5 * dc * dc) *
       (1.0 + 0.5 * std::cos(collarette_m_ * theta + collarette_phase_));
  return v;
}

double texture_radius(double r, double ratio, DeformationModel model, double strength) {
  if (model == DeformationModel::kLinear || strength == 0.0) return r;
  const double amplitude = strength * (ratio - kMidRatio) / kHalfRange;
  const double phi = bump(r) - bump(0.0);  // bump(0) == bump(1) by symmetry
  return std::clamp(r - amplitude * phi, 0.0, 1.0);
}

SynthEye make_eye(const SynthConfig& cfg, int eye_index) {
  Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(eye_index)));
  SynthEye e;
  char id[32];
  std::snprintf(id, sizeof id, "eye%03d", eye_index);
  e.eye_id = id;
  const double scale = std::min(cfg.width, cfg.height) / 96.0;
  e.iris_r = rng.uniform(36.0, 40.0) * scale;
  e.iris_x = cfg.width / 2.0 + rng.uniform(-3.0, 3.0) * scale;
  e.iris_y = cfg.height / 2.0 + rng.uniform(-1.5, 1.5) * scale;
  const double dir = rng.uniform(0.0, 2.0 * kPi);
  const double off = rng.uniform(0.0, 0.03);
  e.pupil_dx = off * std::cos(dir);
  e.pupil_dy = off * std::sin(dir);
  e.sclera = rng.uniform(0.62, 0.78);
  e.pupil_level = rng.uniform(0.05, 0.1);
  e.texture = IrisTexture(rng);
  return e;
}

FrameParams draw_frame_params(const SynthConfig& cfg, int eye_index, int frame_index) {
  Rng rng(Rng::derive(Rng::derive(cfg.seed, static_cast<std::uint64_t>(eye_index)),
                      1000 + static_cast<std::uint64_t>(frame_index)));
  FrameParams p;
  p.ratio = rng.uniform(cfg.ratio_min, cfg.ratio_max);
  p.rotation = rng.uniform(-1.0, 1.0) * cfg.max_rotation_deg * kPi / 180.0;
  p.gain = rng.uniform(0.95, 1.05);
  p.shift_x = rng.uniform(-1.5, 1.5);
  p.shift_y = rng.uniform(-1.5, 1.5);
  return p;
}

geometry::EyeAnnotation frame_annotation(const SynthEye& eye, const FrameParams& p) {
  geometry::EyeAnnotation a;
  a.eye_id = eye.eye_id;
  a.iris_x = eye.iris_x + p.shift_x;
  a.iris_y = eye.iris_y + p.shift_y;
  a.iris_r = eye.iris_r;
  a.pupil_r = p.ratio * eye.iris_r;
  // The pupil offset shrinks as the pupil grows so it always stays inside.
  const double slack = 1.0 - p.ratio;
  a.pupil_x = a.iris_x + eye.pupil_dx * eye.iris_r * slack;
  a.pupil_y = a.iris_y + eye.pupil_dy * eye.iris_r * slack;
  a.validate();
  return a;
}

SynthFrame render_frame(const SynthConfig& cfg, const SynthEye& eye, const FrameParams& p,
                        std::uint64_t noise_seed) {
  SynthFrame f;
  f.ann = frame_annotation(eye, p);
  f.image = Image(cfg.height, cfg.width);
  f.mask = geometry::rasterize_mask(f.ann, cfg.height, cfg.width);
  Rng noise(noise_seed);
  const double r_i = f.ann.iris_r;
  // Upper and lower lid parabolas, used only when eyelids are enabled.
  const double lid_top = f.ann.iris_y - 0.8 * r_i;
  const double lid_bottom = f.ann.iris_y + 0.95 * r_i;
  const double lid_curv = 1.2 / r_i;
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      double v;
      const double dxp = x - f.ann.pupil_x, dyp = y - f.ann.pupil_y;
      const double dxi = x - f.ann.iris_x, dyi = y - f.ann.iris_y;
      if (dxp * dxp + dyp * dyp <= f.ann.pupil_r * f.ann.pupil_r) {
        v = eye.pupil_level;
      } else if (dxi * dxi + dyi * dyi <= r_i * r_i) {
        const auto pc = geometry::polar_coordinate(f.ann, x, y);
        const double r = pc ? pc->r : 1.0;
        const double theta = pc ? pc->theta : std::atan2(dyi, dxi);
        const double u = texture_radius(r, p.ratio, cfg.deformation_model, cfg.deformation_strength);
        v = eye.texture.value(u, theta - p.rotation);
      } else {
        const double d = std::sqrt(dxi * dxi + dyi * dyi) / r_i;
        v = eye.sclera - 0.08 * (d - 1.0);
      }
      if (cfg.eyelids) {
        const double dx = x - f.ann.iris_x;
        const bool upper = y < lid_top + lid_curv * dx * dx * 0.5;
        const bool lower = y > lid_bottom - lid_curv * dx * dx * 0.5;
        if (upper || lower) {
          v = 0.55 + 0.05 * std::cos(0.2 * x);
          f.mask.at(y, x) = 0;
        }
      }
      v = v * p.gain + cfg.noise_sigma * noise.normal();
      f.image.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  f.image = quantize8(f.image);
  return f;
}

SynthFrame render_frame(const SynthConfig& cfg, int eye_index, int frame_index) {
  const SynthEye eye = make_eye(cfg, eye_index);
  const FrameParams p = draw_frame_params(cfg, eye_index, frame_index);
  const std::uint64_t noise_seed =
      Rng::derive(Rng::derive(cfg.seed, static_cast<std::uint64_t>(eye_index)),
                  500000 + static_cast<std::uint64_t>(frame_index));
  return render_frame(cfg, eye, p, noise_seed);
}

std::vector<dataset::SampleRecord> synth_generate(const SynthConfig& cfg,
                                                  const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path root = fs::absolute(out_dir).lexically_normal();
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::vector<dataset::SampleRecord> records;
  for (int e = 0; e < cfg.n_eyes; ++e) {
    for (int k = 0; k < cfg.frames_per_eye; ++k) {
      const SynthFrame f = render_frame(cfg, e, k);
      char name[48];
      std::snprintf(name, sizeof name, "%s_f%03d", f.ann.eye_id.c_str(), k);
      dataset::SampleRecord r;
      r.sample_id = name;
      r.image_path = (root / "images" / (r.sample_id + ".png")).string();
      r.mask_path = (root / "masks" / (r.sample_id + ".png")).string();
      r.ann = f.ann;
      write_image_png(r.image_path, f.image);
      write_mask_png(r.mask_path, f.mask);
      records.push_back(std::move(r));
    }
  }
  records = dataset::assign_bins(std::move(records));
  dataset::write_manifest(root / "manifest.jsonl", records);
  std::ofstream(root / "synth_config.json") << cfg.to_json() << "\n";
  return records;
}

}  // namespace irisdeform::synth
