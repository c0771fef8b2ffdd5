// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "irisdeform/checkpoint.hpp"
#include "irisdeform/optim.hpp"
#include "irisdeform/perceptual.hpp"
#include "json.hpp"

namespace irisdeform::train {
namespace fs = std::filesystem;
using nlohmann::json;
using nn::Var;

namespace {

nlohmann::json weights_json(const loss::LossWeights& w) {
  return {{"mask", w.mask}, {"identity", w.identity}, {"l1", w.l1}, {"perceptual", w.perceptual}};
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* what) {
  for (const auto& [k, v] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; }))
      throw ConfigError(std::string("unknown ") + what + " key '" + k + "'");
}

std::string format_row(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(r.step),
                r.values.total, r.values.mask, r.values.identity, r.values.l1, r.values.perceptual);
  return buf;
}

struct Batch {
  nn::Tensor<float> input, target;
  std::vector<std::shared_ptr<const geometry::SamplingPlan>> plans;
  std::vector<std::string> ids;
};

Batch make_batch(const ExampleSet& set, const std::vector<std::size_t>& idx, int gw, int gh) {
  std::vector<const Image*> images;
  std::vector<const Mask*> masks;
  std::vector<const Image*> targets;
  Batch b;
  for (std::size_t i : idx) {
    const Example& e = set[i];
    images.push_back(e.source);
    masks.push_back(e.target_mask);
    targets.push_back(e.target);
    b.plans.push_back(loss::identity_plan(e.target_ann, set.height(), set.width(), gw, gh));
    b.ids.push_back(e.id);
  }
  b.input = nn::make_input<float>(images, masks);
  const int h = set.height(), w = set.width();
  b.target = nn::Tensor<float>(nn::Shape{static_cast<int>(idx.size()), 1, h, w});
  for (std::size_t n = 0; n < targets.size(); ++n)
    std::copy(targets[n]->pixels().begin(), targets[n]->pixels().end(),
              b.target.data() + n * static_cast<std::size_t>(h) * w);
  return b;
}

loss::LossSuite<float> make_suite(const LossResources& res, const PerceptualPyramid<float>& perceptual,
                                  int gw, int gh) {
  if (!res.segmenter) throw ConfigError("training needs a segmenter");
  loss::LossSuite<float> s;
  s.segmenter = res.segmenter;
  s.bank = Var<float>(loss::bank_weights<float>(res.bank));
  s.perceptual = &perceptual;
  s.grid_width = gw;
  s.grid_height = gh;
  return s;
}

bool all_finite(const loss::LossValues& v) {
  return std::isfinite(v.total) && std::isfinite(v.mask) && std::isfinite(v.identity) &&
         std::isfinite(v.l1) && std::isfinite(v.perceptual);
}

std::unique_ptr<nn::Optimizer> make_optimizer(const TrainConfig& cfg, nn::DeformNet<float>& model) {
  if (cfg.optimizer == OptimizerKind::kAdam)
    return std::make_unique<nn::Adam>(model.parameters(), cfg.learning_rate);
  return std::make_unique<nn::Sgd>(model.parameters(), cfg.learning_rate, 0.9);
}

void save_training_checkpoint(const fs::path& path, nn::DeformNet<float>& model,
                              const nn::Optimizer& opt, const TrainConfig& cfg, std::int64_t step,
                              double best_val) {
  CheckpointData d;
  d.kind = kModelKind;
  d.config = model.config().to_json();
  d.meta = json{{"step", step}, {"train_config", json::parse(cfg.to_json())}}.dump();
  d.tensors = collect_tensors(model);
  json st = {{"step", step},
             {"optimizer_steps", opt.steps()},
             {"optimizer", cfg.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"}};
  if (std::isfinite(best_val)) st["best_val_total"] = best_val;
  d.state = st.dump();
  d.state_tensors = opt.state_tensors();
  save_checkpoint(path, d);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (checkpoint_every < 0 || validate_every < 0) throw ConfigError("intervals must be >= 0");
  if (grid_width < 2 || grid_height < 2) throw ConfigError("grid dimensions must be >= 2");
  weights.validate();
  model.validate();
}

std::string TrainConfig::to_json() const {
  json j = {{"seed", seed},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"max_steps", max_steps},
            {"optimizer", optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
            {"weights", weights_json(weights)},
            {"model", json::parse(model.to_json())},
            {"checkpoint_every", checkpoint_every},
            {"validate_every", validate_every},
            {"bidirectional", bidirectional},
            {"grid_width", grid_width},
            {"grid_height", grid_height},
            {"perceptual_seed", perceptual_seed}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    reject_unknown(j,
                   {"seed", "batch_size", "learning_rate", "max_steps", "optimizer", "weights", "model",
                    "checkpoint_every", "validate_every", "bidirectional", "grid_width", "grid_height",
                    "perceptual_seed"},
                   "train config");
    TrainConfig c;
    c.seed = j.value("seed", c.seed);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_steps = j.value("max_steps", c.max_steps);
    if (j.contains("optimizer")) {
      const auto o = j.at("optimizer").get<std::string>();
      if (o == "adam")
        c.optimizer = OptimizerKind::kAdam;
      else if (o == "sgd")
        c.optimizer = OptimizerKind::kSgd;
      else
        throw ConfigError("optimizer must be 'adam' or 'sgd'");
    }
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      reject_unknown(w, {"mask", "identity", "l1", "perceptual"}, "weights");
      c.weights.mask = w.value("mask", c.weights.mask);
      c.weights.identity = w.value("identity", c.weights.identity);
      c.weights.l1 = w.value("l1", c.weights.l1);
      c.weights.perceptual = w.value("perceptual", c.weights.perceptual);
    }
    if (j.contains("model")) {
      reject_unknown(j.at("model"),
                     {"depth", "base_channels", "growth", "input_channels", "output_channels",
                      "dense_layers_per_block", "leaky_slope", "instance_norm", "seed"},
                     "model");
      c.model = nn::ModelConfig::from_json(j.at("model").dump());
    }
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.validate_every = j.value("validate_every", c.validate_every);
    c.bidirectional = j.value("bidirectional", c.bidirectional);
    c.grid_width = j.value("grid_width", c.grid_width);
    c.grid_height = j.value("grid_height", c.grid_height);
    c.perceptual_seed = j.value("perceptual_seed", c.perceptual_seed);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
}

ExampleSet::ExampleSet(const std::vector<dataset::PairRecord>& pairs, bool bidirectional) {
  auto load = [&](const dataset::SampleRecord& r) -> const dataset::LoadedSample& {
    auto it = cache_.find(r.sample_id);
    if (it == cache_.end()) it = cache_.emplace(r.sample_id, dataset::load_sample(r)).first;
    const auto& s = it->second;
    if (height_ == 0) {
      height_ = s.image.height();
      width_ = s.image.width();
    } else if (s.image.height() != height_ || s.image.width() != width_) {
      throw ShapeError("all training images must share one size");
    }
    return s;
  };
  for (const auto& p : pairs) {
    const auto& src = load(p.source);
    const auto& dst = load(p.target);
    examples_.push_back({p.pair_id, &src.image, &dst.mask, &dst.image, p.target.ann});
    if (bidirectional)
      examples_.push_back({p.pair_id + "~rev", &dst.image, &src.mask, &src.image, p.source.ann});
  }
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n, int batch_size,
                                       std::int64_t step) {
  if (n == 0) throw TrainingError("empty training set");
  std::vector<std::size_t> out;
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> perm(n);
  const std::int64_t first = (step - 1) * batch_size;
  for (std::int64_t k = first; k < first + batch_size; ++k) {
    const std::int64_t epoch = k / static_cast<std::int64_t>(n);
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(Rng::derive(seed, 0xDA7A0000ULL + static_cast<std::uint64_t>(epoch)));
      rng.shuffle(perm);
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<std::size_t>(k % static_cast<std::int64_t>(n))]);
  }
  return out;
}

double weighted_total(const loss::LossValues& v, const loss::LossWeights& w) {
  return w.mask * v.mask + w.identity * v.identity + w.l1 * v.l1 + w.perceptual * v.perceptual;
}

loss::LossValues validate(const nn::DeformNet<float>& model, const ExampleSet& val,
                          const loss::LossWeights& weights, const LossResources& res, int gw, int gh,
                          int batch_size, std::uint64_t perceptual_seed) {
  if (val.size() == 0) throw TrainingError("validation set is empty");
  nn::NoGradGuard guard;
  PerceptualPyramid<float> perceptual(perceptual_seed);
  const auto suite = make_suite(res, perceptual, gw, gh);
  loss::LossValues sum;
  for (std::size_t b = 0; b < val.size(); b += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(val.size(), b + batch_size); ++i) idx.push_back(i);
    const Batch batch = make_batch(val, idx, gw, gh);
    const Var<float> out = model.forward_any(Var<float>(batch.input));
    const auto terms = loss::values_of(
        loss::composite_loss(out, Var<float>(batch.target), batch.plans, weights, suite));
    const double n = static_cast<double>(idx.size());
    sum.mask += terms.mask * n;
    sum.identity += terms.identity * n;
    sum.l1 += terms.l1 * n;
    sum.perceptual += terms.perceptual * n;
  }
  const double n = static_cast<double>(val.size());
  sum.mask /= n;
  sum.identity /= n;
  sum.l1 /= n;
  sum.perceptual /= n;
  sum.total = weighted_total(sum, weights);
  return sum;
}

std::vector<StepRecord> read_metrics(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw ParseError("metrics log: bad header");
  std::vector<StepRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StepRecord r;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf", &step, &r.values.total, &r.values.mask,
                    &r.values.identity, &r.values.l1, &r.values.perceptual) != 6)
      throw ParseError("metrics log: bad row '" + line + "'");
    r.step = step;
    out.push_back(r);
  }
  return out;
}

TrainResult train(const std::vector<dataset::PairRecord>& pairs,
                  const std::vector<dataset::PairRecord>& val_pairs, const TrainConfig& cfg,
                  const LossResources& res, const fs::path& run_dir, const TrainOptions& options) {
  cfg.validate();
  if (pairs.empty()) throw TrainingError("no training pairs");
  fs::create_directories(run_dir);
  ExampleSet data(pairs, cfg.bidirectional);
  ExampleSet val(val_pairs, false);

  nn::DeformNet<float> model(cfg.model);
  auto opt = make_optimizer(cfg, model);
  PerceptualPyramid<float> perceptual(cfg.perceptual_seed);
  const auto suite = make_suite(res, perceptual, cfg.grid_width, cfg.grid_height);

  TrainResult result;
  result.best_val_total = std::numeric_limits<double>::infinity();
  std::int64_t start = 0;
  const fs::path csv = run_dir / "metrics.csv";
  const fs::path index = run_dir / "checkpoints.jsonl";
  if (!options.resume_from.empty()) {
    const CheckpointData ck = load_checkpoint(options.resume_from);
    if (nn::ModelConfig::from_json(ck.config) != cfg.model)
      throw CheckpointError("resume checkpoint model config differs from the train config");
    if (ck.state.empty()) throw CheckpointError("checkpoint has no training state to resume from");
    assign_tensors(model, ck.tensors);
    const json st = json::parse(ck.state);
    start = st.at("step").get<std::int64_t>();
    opt->load_state(st.at("optimizer_steps").get<std::int64_t>(), ck.state_tensors);
    result.best_val_total = st.value("best_val_total", result.best_val_total);
    if (fs::exists(run_dir / "best.bin")) result.best_checkpoint = run_dir / "best.bin";
    std::vector<StepRecord> kept;
    if (fs::exists(csv))
      for (const auto& r : read_metrics(csv))
        if (r.step <= start) kept.push_back(r);
    std::ofstream out(csv, std::ios::trunc);
    out << kMetricsHeader << "\n";
    for (const auto& r : kept) out << format_row(r) << "\n";
    result.log = kept;
  } else {
    std::ofstream(csv, std::ios::trunc) << kMetricsHeader << "\n";
    std::ofstream(index, std::ios::trunc);
    std::ofstream(run_dir / "train_config.json", std::ios::trunc) << cfg.to_json() << "\n";
  }
  std::ofstream log_out(csv, std::ios::app);
  auto record_ckpt = [&](const fs::path& p, std::int64_t step, const char* role) {
    std::ofstream(index, std::ios::app)
        << json{{"step", step}, {"role", role}, {"path", p.filename().string()}}.dump() << "\n";
  };

  for (std::int64_t step = start + 1; step <= cfg.max_steps; ++step) {
    const auto idx = batch_indices(cfg.seed, data.size(), cfg.batch_size, step);
    const Batch batch = make_batch(data, idx, cfg.grid_width, cfg.grid_height);
    opt->zero_grad();
    const Var<float> out = model.forward_any(Var<float>(batch.input));
    const auto terms = loss::composite_loss(out, Var<float>(batch.target), batch.plans, cfg.weights, suite);
    StepRecord rec{step, loss::values_of(terms)};
    if (!all_finite(rec.values)) {
      const fs::path dump = run_dir / ("nonfinite_step" + std::to_string(step) + ".json");
      std::ofstream(dump) << json{{"step", step},
                                  {"examples", batch.ids},
                                  {"terms", {rec.values.total, rec.values.mask, rec.values.identity,
                                             rec.values.l1, rec.values.perceptual}}}
                                 .dump(2)
                          << "\n";
      throw TrainingError("non-finite loss at step " + std::to_string(step) + "; batch dumped to " +
                          dump.string());
    }
    rec.values.total = weighted_total(rec.values, cfg.weights);
    Var<float> total = terms.total;
    total.backward();
    opt->step();

    log_out << format_row(rec) << "\n";
    log_out.flush();
    result.log.push_back(rec);

    if (cfg.validate_every > 0 && step % cfg.validate_every == 0 && val.size() > 0) {
      const auto v = validate(model, val, cfg.weights, res, cfg.grid_width, cfg.grid_height,
                              cfg.batch_size, cfg.perceptual_seed);
      if (v.total < result.best_val_total) {
        result.best_val_total = v.total;
        result.best_checkpoint = run_dir / "best.bin";
        save_training_checkpoint(result.best_checkpoint, model, *opt, cfg, step, v.total);
        record_ckpt(result.best_checkpoint, step, "best");
      }
    }
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      const fs::path p = run_dir / ("ckpt_step" + std::to_string(step) + ".bin");
      save_training_checkpoint(p, model, *opt, cfg, step, result.best_val_total);
      record_ckpt(p, step, "periodic");
    }
    if (options.on_step && !options.on_step(rec)) return result;
  }
  result.final_checkpoint = run_dir / "final.bin";
  save_training_checkpoint(result.final_checkpoint, model, *opt, cfg, cfg.max_steps, result.best_val_total);
  record_ckpt(result.final_checkpoint, cfg.max_steps, "final");
  return result;
}

}  // namespace irisdeform::train
