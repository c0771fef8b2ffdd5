// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "irisdeform/dataset.hpp"
#include "irisdeform/geometry.hpp"
#include "irisdeform/image.hpp"
#include "irisdeform/random.hpp"

namespace irisdeform::synth {

enum class DeformationModel { kLinear, kGaussianStretch };

std::string_view to_string(DeformationModel m);
DeformationModel deformation_model_from_string(std::string_view s);

struct SynthConfig {
  std::uint64_t seed = 0;
  int n_eyes = 20;
  int frames_per_eye = 20;
  int width = 128;
  int height = 96;
  double ratio_min = 0.2;
  double ratio_max = 0.7;
  DeformationModel deformation_model = DeformationModel::kGaussianStretch;
  double deformation_strength = 0.15;
  bool eyelids = false;
  double noise_sigma = 0.005;
  double max_rotation_deg = 2.0;

  /// Throws ConfigError.
  void validate() const;
  std::string to_json() const;
  /// Missing keys keep defaults; unknown keys are rejected.
  static SynthConfig from_json(std::string_view text);
};

/// Identity texture of one synthetic eye over normalized coordinates
/// u in [0, 1] (pupil to iris boundary) and theta. Smooth by construction:
/// a finite sum of low-order Fourier terms plus Gaussian furrows, crypts
/// and a collarette ring.
class IrisTexture {
 public:
  IrisTexture() = default;
  explicit IrisTexture(Rng& rng);
  double value(double u, double theta) const;

 private:
  struct Wave {
    double amplitude, freq_u, phase;
    int freq_theta;
  };
  struct Furrow {
    double theta, width, u_lo, u_hi, depth;
  };
  struct Crypt {
    double u, theta, su, st, depth;
  };
  double base_ = 0.45;
  std::vector<Wave> waves_;
  std::vector<Furrow> furrows_;
  std::vector<Crypt> crypts_;
  double collarette_u_ = 0.35;
  double collarette_amp_ = 0.05;
  int collarette_m_ = 7;
  double collarette_phase_ = 0.0;
};

/// Texture coordinate sampled at radial position r of a frame with
/// pupil-to-iris ratio `ratio`. Linear: u = r. Gaussian stretch: features
/// move radially by a Gaussian bump whose signed amplitude grows linearly
/// with the ratio's distance from the mid ratio 0.45 and equals `strength`
/// at the range ends; the bump vanishes at both boundaries.
double texture_radius(double r, double ratio, DeformationModel model, double strength);

struct SynthEye {
  std::string eye_id;
  IrisTexture texture;
  double iris_x = 0, iris_y = 0, iris_r = 0;
  double pupil_dx = 0, pupil_dy = 0;  // pupil offset direction scaled per frame
  double sclera = 0.7;
  double pupil_level = 0.08;
};

struct FrameParams {
  double ratio = 0.45;
  double rotation = 0.0;  // radians added to theta
  double gain = 1.0;
  double shift_x = 0.0, shift_y = 0.0;
};

struct SynthFrame {
  geometry::EyeAnnotation ann;
  Image image;
  Mask mask;
};

SynthEye make_eye(const SynthConfig& cfg, int eye_index);
FrameParams draw_frame_params(const SynthConfig& cfg, int eye_index, int frame_index);
geometry::EyeAnnotation frame_annotation(const SynthEye& eye, const FrameParams& p);
/// Renders one frame; `noise_seed` drives sensor noise only.
SynthFrame render_frame(const SynthConfig& cfg, const SynthEye& eye, const FrameParams& p,
                        std::uint64_t noise_seed);
SynthFrame render_frame(const SynthConfig& cfg, int eye_index, int frame_index);

/// Writes images/, masks/, manifest.jsonl and synth_config.json under
/// `out_dir`; returns the manifest records (absolute paths).
std::vector<dataset::SampleRecord> synth_generate(const SynthConfig& cfg,
                                                  const std::filesystem::path& out_dir);

}  // namespace irisdeform::synth
