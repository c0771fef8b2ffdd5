// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "service.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "httplib.h"
#include "irisdeform/checkpoint.hpp"
#include "json.hpp"

namespace irisdeform::app {
using nlohmann::json;

double mask_ratio(const Mask& mask) {
  double cx = 0, cy = 0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(y, x)) {
        cx += x;
        cy += y;
        ++n;
      }
  if (n == 0) throw GeometryError("target mask is empty");
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  double inner = std::numeric_limits<double>::infinity(), outer = 0.0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(y, x)) {
        const double d = std::hypot(x - cx, y - cy);
        inner = std::min(inner, d);
        outer = std::max(outer, d);
      }
  if (outer <= 0.0) throw GeometryError("target mask has no extent");
  // Pixel centers sit half a pixel inside either boundary.
  return std::clamp((inner - 0.5) / (outer + 0.5), 0.0, 1.0);
}

DeformOutput run_deform(const DeformInput& in, const nn::DeformNet<float>* model) {
  if (in.mask.has_value() == in.ratio.has_value())
    throw ConfigError("exactly one of target mask and target ratio is required");
  if (in.ratio && !(*in.ratio > kMinTargetRatio && *in.ratio < kMaxTargetRatio))
    throw ConfigError("target ratio must lie in (0.05, 0.95)");
  if (in.annotation) in.annotation->validate();
  if (in.ratio && !in.annotation) throw ConfigError("a ratio target needs the image annotation");
  if (in.mode == DeformMode::kLinear && !in.ratio)
    throw ConfigError("linear mode needs a ratio target and an annotation");

  DeformOutput out;
  if (in.mode == DeformMode::kLinear) {
    const auto target = in.annotation->with_ratio(*in.ratio);
    out.image = geometry::linear_rectify(in.image, *in.annotation, target);
    out.applied_ratio = *in.ratio;
    return out;
  }
  if (!model) throw ConfigError("model mode needs a loaded checkpoint");
  Mask target_mask;
  if (in.ratio) {
    target_mask = geometry::rasterize_mask(in.annotation->with_ratio(*in.ratio), in.image.height(),
                                           in.image.width());
    out.applied_ratio = *in.ratio;
  } else {
    if (!in.mask->same_shape(in.image)) throw GeometryError("target mask size differs from the image");
    target_mask = *in.mask;
    out.applied_ratio = mask_ratio(target_mask);
  }
  out.image = model->infer(in.image, target_mask);
  return out;
}

DeformService::DeformService(ServiceOptions options) : options_(std::move(options)) {}

void DeformService::load_checkpoint(const std::filesystem::path& path) {
  auto model = load_model(path);
  install_model(std::move(model), file_sha256(path));
}

void DeformService::install_model(std::unique_ptr<nn::DeformNet<float>> model, std::string version) {
  std::unique_lock lock(mutex_);
  model_ = std::move(model);
  version_ = std::move(version);
  ready_.store(model_ != nullptr);
}

std::string DeformService::model_version() const {
  std::shared_lock lock(mutex_);
  return version_;
}

namespace {

HttpReply error_reply(int status, const std::string& code, const std::string& message) {
  return {status, json{{"error", code}, {"message", message}}.dump()};
}

}  // namespace

HttpReply DeformService::health() const {
  if (!ready()) return {503, json{{"status", "loading"}, {"model_version", nullptr}}.dump()};
  return {200, json{{"status", "ok"}, {"model_version", model_version()}}.dump()};
}

HttpReply DeformService::deform(const std::string& body) const {
  const auto t0 = std::chrono::steady_clock::now();
  if (!ready()) return error_reply(503, "unavailable", "model checkpoint not loaded");

  DeformInput in;
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error_reply(400, "malformed", std::string("request is not JSON: ") + e.what());
  }
  try {
    if (!req.is_object()) return error_reply(400, "malformed", "request must be a JSON object");
    if (!req.contains("image") || !req["image"].is_string())
      return error_reply(400, "malformed", "field 'image' (base64 PNG) is required");
    in.image = decode_png_image(base64_decode(req["image"].get<std::string>()));
    const std::string mode = req.value("mode", std::string("model"));
    if (mode == "model")
      in.mode = DeformMode::kModel;
    else if (mode == "linear")
      in.mode = DeformMode::kLinear;
    else
      return error_reply(400, "malformed", "mode must be 'model' or 'linear'");
    if (!req.contains("target") || !req["target"].is_object())
      return error_reply(400, "malformed", "field 'target' must be an object");
    const json& target = req["target"];
    const bool has_mask = target.contains("mask"), has_ratio = target.contains("ratio");
    if (has_mask == has_ratio)
      return error_reply(400, "malformed", "target needs exactly one of 'mask' and 'ratio'");
    if (has_mask) {
      if (!target["mask"].is_string()) return error_reply(400, "malformed", "target.mask must be base64 PNG");
      in.mask = decode_png_mask(base64_decode(target["mask"].get<std::string>()));
    } else {
      if (!target["ratio"].is_number()) return error_reply(400, "malformed", "target.ratio must be a number");
      in.ratio = target["ratio"].get<double>();
    }
    if (req.contains("annotation") && !req["annotation"].is_null()) {
      geometry::EyeAnnotation ann;
      try {
        ann = geometry::annotation_from_json(req["annotation"].dump());
      } catch (const ParseError& e) {
        return error_reply(400, "malformed", e.what());
      }
      in.annotation = ann;
    }
  } catch (const ParseError& e) {
    return error_reply(400, "malformed", e.what());
  } catch (const json::exception& e) {
    return error_reply(400, "malformed", e.what());
  }

  std::shared_lock lock(mutex_);
  DeformOutput out;
  try {
    out = run_deform(in, model_.get());
  } catch (const GeometryError& e) {
    return error_reply(422, "geometry", e.what());
  } catch (const ConfigError& e) {
    return error_reply(400, "malformed", e.what());
  }
  const auto png = encode_png(out.image);
  if (!options_.debug_persist_dir.empty()) {
    const auto id = std::to_string(request_counter_.fetch_add(1));
    std::filesystem::create_directories(options_.debug_persist_dir);
    write_image_png(options_.debug_persist_dir / ("request_" + id + ".png"), in.image);
    write_image_png(options_.debug_persist_dir / ("response_" + id + ".png"), out.image);
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  json resp = {{"image", base64_encode(png)},
               {"applied_ratio", out.applied_ratio},
               {"mode", in.mode == DeformMode::kModel ? "model" : "linear"},
               {"model_version", version_},
               {"latency_ms", ms}};
  return {200, resp.dump()};
}

void DeformService::mount(httplib::Server& server) const {
  server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    const HttpReply r = health();
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server.Post("/v1/deform", [this](const httplib::Request& req, httplib::Response& res) {
    const HttpReply r = deform(req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
}

}  // namespace irisdeform::app
