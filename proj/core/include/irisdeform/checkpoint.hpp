// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "irisdeform/deform_net.hpp"
#include "irisdeform/tensor.hpp"

namespace irisdeform {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, nn::Tensor<float>>>;

/// Contents of one checkpoint file. `config` and `meta` are JSON text;
/// `state` (optional) carries resumable training state such as optimizer
/// moments and generator positions.
struct CheckpointData {
  std::string kind;
  std::string config;
  std::string meta = "{}";
  NamedTensors tensors;
  std::string state;
  NamedTensors state_tensors;
};

/// Writes to a temporary file and renames into place, then writes the
/// `<path>.json` sidecar with kind, version, config and meta.
void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
/// Throws CheckpointError on bad magic, version mismatch or truncation.
CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);
std::string sha256_hex(const void* data, std::size_t size);

NamedTensors collect_tensors(nn::Module<float>& module);
/// Assigns by name; every module parameter must be present with its shape.
void assign_tensors(nn::Module<float>& module, const NamedTensors& tensors);
/// SHA-256 over parameter names and raw values.
std::string parameter_hash(nn::Module<float>& module);

inline constexpr const char* kModelKind = "deform-net";

void save_model(const std::filesystem::path& path, nn::DeformNet<float>& model,
                const std::string& meta = "{}");
std::unique_ptr<nn::DeformNet<float>> model_from_checkpoint(const CheckpointData& data);
std::unique_ptr<nn::DeformNet<float>> load_model(const std::filesystem::path& path);
/// As load_model, but throws CheckpointError when the embedded config differs.
std::unique_ptr<nn::DeformNet<float>> load_model(const std::filesystem::path& path,
                                                 const nn::ModelConfig& expected);

}  // namespace irisdeform
