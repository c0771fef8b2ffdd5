// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

namespace irisdeform::eval {

/// Dissimilarity scores in [0, 1]; lower means more alike.
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> imposter;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};
MeanStd mean_std(const std::vector<double>& v);

/// |mu_g - mu_i| / sqrt((sigma_g^2 + sigma_i^2) / 2) with population
/// standard deviations. Throws MetricError on empty lists or 0/0.
double decidability(const ScoreSet& s);

struct RocPoint {
  double threshold = 0.0;
  double fmr = 0.0;  // imposters accepted (score <= threshold)
  double tmr = 0.0;  // 1 - FNMR
};

struct RocResult {
  std::vector<RocPoint> points;  // from (0, 0) through every distinct score
  double eer = 0.0;
  double auc = 0.0;
};

/// Threshold sweep over all distinct scores. EER is interpolated linearly
/// between the bracketing thresholds; AUC is trapezoidal. Throws
/// MetricError on empty lists.
RocResult roc_eer_auc(const ScoreSet& s);

}  // namespace irisdeform::eval
