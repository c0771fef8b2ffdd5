// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "irisdeform/deform_net.hpp"
#include "irisdeform/geometry.hpp"
#include "irisdeform/image.hpp"

namespace httplib {
class Server;
}

namespace irisdeform::app {

enum class DeformMode { kModel, kLinear };

inline constexpr double kMinTargetRatio = 0.05;
inline constexpr double kMaxTargetRatio = 0.95;

/// Exactly one of `mask` and `ratio` is set.
struct DeformInput {
  Image image;
  std::optional<geometry::EyeAnnotation> annotation;
  std::optional<Mask> mask;
  std::optional<double> ratio;
  DeformMode mode = DeformMode::kModel;
};

struct DeformOutput {
  Image image;
  double applied_ratio = 0.0;
};

/// Pupil-to-iris ratio implied by an annulus mask: inner over outer radius
/// of its pixels about their centroid.
double mask_ratio(const Mask& mask);

/// Shared by the HTTP handler and the `deform` command. Throws
/// ConfigError for contract violations (both or neither target, ratio out
/// of range, missing annotation) and GeometryError for invalid geometry.
DeformOutput run_deform(const DeformInput& in, const nn::DeformNet<float>* model);

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

struct ServiceOptions {
  /// When set, request and response images are written here (debug only).
  std::filesystem::path debug_persist_dir;
};

/// Thread-safe request handlers. Until a checkpoint is installed every
/// endpoint answers 503.
class DeformService {
 public:
  explicit DeformService(ServiceOptions options = {});

  void load_checkpoint(const std::filesystem::path& path);
  void install_model(std::unique_ptr<nn::DeformNet<float>> model, std::string version);
  bool ready() const { return ready_.load(); }
  std::string model_version() const;

  HttpReply health() const;
  HttpReply deform(const std::string& body) const;

  /// Routes GET /v1/health and POST /v1/deform.
  void mount(httplib::Server& server) const;

 private:
  ServiceOptions options_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<nn::DeformNet<float>> model_;
  std::string version_;
  std::atomic<bool> ready_{false};
  mutable std::atomic<std::uint64_t> request_counter_{0};
};

}  // namespace irisdeform::app
