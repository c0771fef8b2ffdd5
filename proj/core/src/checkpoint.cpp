// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace irisdeform {
namespace {

constexpr char kMagic[8] = {'I', 'R', 'D', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kEndMarker = 0x444E4521;  // "!END"

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void tensors(const NamedTensors& ts) {
    u32(static_cast<std::uint32_t>(ts.size()));
    for (const auto& [name, t] : ts) {
      str(name);
      const auto& s = t.shape();
      for (int d : {s.n, s.c, s.h, s.w}) u32(static_cast<std::uint32_t>(d));
      for (float f : t.values()) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
      }
    }
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  NamedTensors tensors() {
    const std::uint32_t count = u32();
    NamedTensors out;
    for (std::uint32_t k = 0; k < count; ++k) {
      std::string name = str();
      std::array<std::uint32_t, 4> d{};
      for (auto& v : d) v = u32();
      const std::size_t numel = static_cast<std::size_t>(d[0]) * d[1] * d[2] * d[3];
      if (numel == 0 || numel > (buf_.size() - pos_) / 4) throw CheckpointError("truncated checkpoint");
      nn::Tensor<float> t(nn::Shape{static_cast<int>(d[0]), static_cast<int>(d[1]),
                                    static_cast<int>(d[2]), static_cast<int>(d[3])});
      for (float& f : t.values()) {
        const std::uint32_t bits = u32();
        std::memcpy(&f, &bits, 4);
      }
      out.emplace_back(std::move(name), std::move(t));
    }
    return out;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  std::string_view peek(std::size_t n) const {
    need(n);
    return std::string_view(buf_).substr(pos_, n);
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(data.kind);
  w.str(data.config);
  w.str(data.meta);
  w.tensors(data.tensors);
  w.u32(data.state.empty() ? 0u : 1u);
  if (!data.state.empty()) {
    w.str(data.state);
    w.tensors(data.state_tensors);
  }
  w.u32(kEndMarker);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);

  nlohmann::json side = {{"kind", data.kind},
                         {"format_version", kCheckpointVersion},
                         {"sha256", sha256_hex(w.bytes().data(), w.bytes().size())}};
  side["config"] = nlohmann::json::parse(data.config);
  side["meta"] = nlohmann::json::parse(data.meta);
  auto side_path = path;
  side_path += ".json";
  std::ofstream out(side_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + side_path.string());
  out << side.dump(2) << "\n";
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  Reader r(read_file(path));
  if (r.peek(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic))
    throw CheckpointError("not a checkpoint file: " + path.string());
  r.skip(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  CheckpointData d;
  d.kind = r.str();
  d.config = r.str();
  d.meta = r.str();
  d.tensors = r.tensors();
  const std::uint32_t has_state = r.u32();
  if (has_state > 1) throw CheckpointError("corrupt checkpoint state flag");
  if (has_state) {
    d.state = r.str();
    d.state_tensors = r.tensors();
  }
  if (r.u32() != kEndMarker || !r.at_end()) throw CheckpointError("corrupt checkpoint trailer");
  return d;
}

std::string sha256_hex(const void* data, std::size_t size) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data, size, md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return sha256_hex(bytes.data(), bytes.size());
}

NamedTensors collect_tensors(nn::Module<float>& module) {
  NamedTensors out;
  for (auto& [name, p] : module.named_parameters()) out.emplace_back(name, p.value());
  return out;
}

void assign_tensors(nn::Module<float>& module, const NamedTensors& tensors) {
  auto params = module.named_parameters();
  if (params.size() != tensors.size())
    throw CheckpointError("checkpoint holds " + std::to_string(tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != tensors[i].first)
      throw CheckpointError("tensor name mismatch: " + params[i].first + " vs " + tensors[i].first);
    if (params[i].second.shape() != tensors[i].second.shape())
      throw CheckpointError("tensor shape mismatch at " + params[i].first);
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].second.mutable_value() = tensors[i].second;
}

std::string parameter_hash(nn::Module<float>& module) {
  std::string buf;
  for (auto& [name, p] : module.named_parameters()) {
    buf += name;
    buf.push_back('\0');
    const auto v = p.value().values();
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  return sha256_hex(buf.data(), buf.size());
}

void save_model(const std::filesystem::path& path, nn::DeformNet<float>& model,
                const std::string& meta) {
  CheckpointData d;
  d.kind = kModelKind;
  d.config = model.config().to_json();
  d.meta = meta;
  d.tensors = collect_tensors(model);
  save_checkpoint(path, d);
}

std::unique_ptr<nn::DeformNet<float>> model_from_checkpoint(const CheckpointData& data) {
  if (data.kind != kModelKind)
    throw CheckpointError("checkpoint kind '" + data.kind + "' is not " + kModelKind);
  auto model = std::make_unique<nn::DeformNet<float>>(nn::ModelConfig::from_json(data.config));
  assign_tensors(*model, data.tensors);
  return model;
}

std::unique_ptr<nn::DeformNet<float>> load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(load_checkpoint(path));
}

std::unique_ptr<nn::DeformNet<float>> load_model(const std::filesystem::path& path,
                                                 const nn::ModelConfig& expected) {
  const CheckpointData data = load_checkpoint(path);
  const auto cfg = nn::ModelConfig::from_json(data.config);
  if (!(cfg == expected))
    throw CheckpointError("config mismatch: checkpoint " + cfg.to_json() + ", expected " +
                          expected.to_json());
  return model_from_checkpoint(data);
}

}  // namespace irisdeform
