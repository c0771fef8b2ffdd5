// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "irisdeform/random.hpp"
#include "json.hpp"

namespace irisdeform::dataset {
namespace fs = std::filesystem;
using nlohmann::json;

std::optional<int> bin_for_ratio(double ratio) {
  if (!std::isfinite(ratio) || ratio < kRatioMin || ratio > kRatioMax) return std::nullopt;
  if (ratio == kRatioMax) return kBinCount - 1;
  // Tolerance so that 0.3, 0.4, ... (inexact in binary) open their own bin.
  const int b = static_cast<int>(std::floor((ratio - kRatioMin) / kBinWidth + 1e-9));
  return std::clamp(b, 0, kBinCount - 1);
}

std::vector<SampleRecord> assign_bins(std::vector<SampleRecord> records) {
  for (auto& r : records) {
    r.ratio = geometry::pupil_to_iris_ratio(r.ann);
    r.bin = bin_for_ratio(r.ratio);
  }
  return records;
}

std::vector<PairRecord> build_pairs(const std::vector<SampleRecord>& records, int per_pair_cap,
                                    std::uint64_t seed) {
  if (per_pair_cap < 1) throw ConfigError("per_pair_cap must be >= 1");
  // eye -> bin -> record indices, in manifest order
  std::map<std::string, std::array<std::vector<std::size_t>, kBinCount>> by_eye;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].bin) by_eye[records[i].eye_id()][*records[i].bin].push_back(i);

  Rng rng(seed);
  std::vector<PairRecord> pairs;
  for (const auto& [eye, bins] : by_eye) {
    for (int b = 0; b < kBinCount; ++b) {
      for (int t = b + 1; t < kBinCount; ++t) {
        std::vector<std::pair<std::size_t, std::size_t>> cands;
        for (std::size_t s : bins[b])
          for (std::size_t d : bins[t]) cands.emplace_back(s, d);
        if (cands.empty()) continue;
        if (cands.size() > static_cast<std::size_t>(per_pair_cap)) {
          rng.shuffle(cands);
          cands.resize(per_pair_cap);
        }
        for (auto [s, d] : cands) {
          PairRecord p;
          p.source = records[s];
          p.target = records[d];
          p.pair_id = p.source.sample_id + "__" + p.target.sample_id;
          pairs.push_back(std::move(p));
        }
      }
    }
  }
  return pairs;
}

SplitSpec split_eye_disjoint(const std::vector<SampleRecord>& records,
                             std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions)
    if (!(f >= 0.0)) throw SplitError("split fractions must be nonnegative");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-6)
    throw SplitError("split fractions must sum to 1");
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.eye_id());
  if (unique.size() < 3)
    throw SplitError("need at least 3 eyes to split, got " + std::to_string(unique.size()));
  std::vector<std::string> eyes(unique.begin(), unique.end());
  Rng rng(seed);
  rng.shuffle(eyes);
  const auto n = static_cast<double>(eyes.size());
  const auto n_val = static_cast<std::size_t>(std::lround(n * fractions[1]));
  const auto n_test = static_cast<std::size_t>(std::lround(n * fractions[2]));
  if (n_val + n_test > eyes.size()) throw SplitError("split fractions leave no training eyes");
  const std::size_t n_train = eyes.size() - n_val - n_test;
  SplitSpec s;
  s.train_eyes.assign(eyes.begin(), eyes.begin() + n_train);
  s.val_eyes.assign(eyes.begin() + n_train, eyes.begin() + n_train + n_val);
  s.test_eyes.assign(eyes.begin() + n_train + n_val, eyes.end());
  for (auto* part : {&s.train_eyes, &s.val_eyes, &s.test_eyes}) std::sort(part->begin(), part->end());
  return s;
}

std::vector<SampleRecord> select_eyes(const std::vector<SampleRecord>& records,
                                      const std::vector<std::string>& eyes) {
  const std::set<std::string> keep(eyes.begin(), eyes.end());
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (keep.count(r.eye_id())) out.push_back(r);
  return out;
}

std::vector<PairRecord> select_eyes(const std::vector<PairRecord>& pairs,
                                    const std::vector<std::string>& eyes) {
  const std::set<std::string> keep(eyes.begin(), eyes.end());
  std::vector<PairRecord> out;
  for (const auto& p : pairs)
    if (keep.count(p.source.eye_id())) out.push_back(p);
  return out;
}

int split_violations(const SplitSpec& split, const std::vector<SampleRecord>& records) {
  std::map<std::string, int> count;
  for (const auto* part : {&split.train_eyes, &split.val_eyes, &split.test_eyes})
    for (const auto& e : std::set<std::string>(part->begin(), part->end())) ++count[e];
  int violations = 0;
  for (const auto& [eye, c] : count)
    if (c > 1) ++violations;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.eye_id()).second && !count.count(r.eye_id())) ++violations;
  return violations;
}

namespace {

std::string relative_to(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty()) return p;
  const fs::path path(p);
  if (path.is_relative()) return p;
  const fs::path rel = path.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p;
  return rel.generic_string();
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

json record_json(const SampleRecord& r, const fs::path& base) {
  json j;
  j["sample_id"] = r.sample_id;
  j["image"] = relative_to(r.image_path, base);
  j["mask"] = relative_to(r.mask_path, base);
  j["annotation"] = json::parse(geometry::annotation_to_json(r.ann));
  j["ratio"] = r.ratio;
  if (r.bin)
    j["bin"] = *r.bin;
  else
    j["bin"] = "out-of-range";
  return j;
}

SampleRecord record_from(const json& j, const fs::path& base) {
  SampleRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.image_path = resolve(j.at("image").get<std::string>(), base);
  r.mask_path = resolve(j.value("mask", std::string()), base);
  r.ann = geometry::annotation_from_json(j.at("annotation").dump());
  // Ratio and bin are derived data; recompute rather than trust the file.
  r.ratio = geometry::pupil_to_iris_ratio(r.ann);
  r.bin = bin_for_ratio(r.ratio);
  return r;
}

fs::path base_of(const fs::path& file) {
  return fs::absolute(file).parent_path().lexically_normal();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

template <typename F>
void for_each_line(const fs::path& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::string record_to_json(const SampleRecord& r, const fs::path& base) {
  return record_json(r, base).dump();
}

SampleRecord record_from_json(std::string_view line, const fs::path& base) {
  try {
    return record_from(json::parse(line), base);
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest record: ") + e.what());
  }
}

void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records) {
  const fs::path base = base_of(path);
  auto out = open_out(path);
  for (const auto& r : records) out << record_json(r, base).dump() << "\n";
}

std::vector<SampleRecord> read_manifest(const fs::path& path) {
  const fs::path base = base_of(path);
  std::vector<SampleRecord> out;
  for_each_line(path, [&](const json& j) { out.push_back(record_from(j, base)); });
  return out;
}

void write_pairs(const fs::path& path, const std::vector<PairRecord>& pairs) {
  const fs::path base = base_of(path);
  auto out = open_out(path);
  for (const auto& p : pairs) {
    const json j = {{"pair_id", p.pair_id},
                    {"source", record_json(p.source, base)},
                    {"target", record_json(p.target, base)}};
    out << j.dump() << "\n";
  }
}

std::vector<PairRecord> read_pairs(const fs::path& path) {
  const fs::path base = base_of(path);
  std::vector<PairRecord> out;
  for_each_line(path, [&](const json& j) {
    PairRecord p;
    p.pair_id = j.at("pair_id").get<std::string>();
    p.source = record_from(j.at("source"), base);
    p.target = record_from(j.at("target"), base);
    out.push_back(std::move(p));
  });
  return out;
}

void write_split(const fs::path& path, const SplitSpec& split) {
  const json j = {{"train", split.train_eyes}, {"val", split.val_eyes}, {"test", split.test_eyes}};
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

SplitSpec read_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const json j = json::parse(in);
    SplitSpec s;
    s.train_eyes = j.at("train").get<std::vector<std::string>>();
    s.val_eyes = j.at("val").get<std::vector<std::string>>();
    s.test_eyes = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

LoadedSample load_sample(const SampleRecord& r) {
  LoadedSample s;
  s.image = read_image_png(r.image_path);
  s.mask = r.mask_path.empty() ? geometry::rasterize_mask(r.ann, s.image.height(), s.image.width())
                               : read_mask_png(r.mask_path);
  if (!s.image.same_shape(s.mask))
    throw ShapeError("mask size differs from image for " + r.sample_id);
  return s;
}

}  // namespace irisdeform::dataset
