// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>

#include "irisdeform/error.hpp"

namespace irisdeform::eval {

MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  // Summing in sorted order makes the result independent of input order.
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  double m = 0.0;
  for (double x : sorted) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : sorted) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

double decidability(const ScoreSet& s) {
  if (s.genuine.empty() || s.imposter.empty())
    throw MetricError("decidability needs non-empty genuine and imposter scores");
  const MeanStd g = mean_std(s.genuine), i = mean_std(s.imposter);
  const double num = std::abs(g.mean - i.mean);
  const double den = std::sqrt(0.5 * (g.std * g.std + i.std * i.std));
  if (den == 0.0) {
    if (num == 0.0) throw MetricError("decidability undefined: zero spread and equal means");
    return std::numeric_limits<double>::infinity();
  }
  return num / den;
}

RocResult roc_eer_auc(const ScoreSet& s) {
  if (s.genuine.empty() || s.imposter.empty())
    throw MetricError("roc needs non-empty genuine and imposter scores");
  std::vector<double> g = s.genuine, im = s.imposter;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> thresholds;
  thresholds.reserve(g.size() + im.size());
  std::merge(g.begin(), g.end(), im.begin(), im.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double ng = static_cast<double>(g.size()), ni = static_cast<double>(im.size());
  RocResult out;
  out.points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t gi = 0, ii = 0;
  for (double t : thresholds) {
    while (gi < g.size() && g[gi] <= t) ++gi;
    while (ii < im.size() && im[ii] <= t) ++ii;
    out.points.push_back({t, static_cast<double>(ii) / ni, static_cast<double>(gi) / ng});
  }

  // FMR rises and FNMR falls along the sweep; find their first crossing.
  out.eer = 0.5;
  for (std::size_t k = 0; k < out.points.size(); ++k) {
    const double f = out.points[k].fmr, n = 1.0 - out.points[k].tmr;
    if (f >= n) {
      if (k == 0 || f == n) {
        out.eer = f;
      } else {
        const double f0 = out.points[k - 1].fmr, n0 = 1.0 - out.points[k - 1].tmr;
        const double a = (n0 - f0) / ((f - f0) - (n - n0));
        out.eer = f0 + a * (f - f0);
      }
      break;
    }
  }

  double auc = 0.0;
  for (std::size_t k = 1; k < out.points.size(); ++k)
    auc += (out.points[k].fmr - out.points[k - 1].fmr) * 0.5 *
           (out.points[k].tmr + out.points[k - 1].tmr);
  out.auc = auc;
  return out;
}

}  // namespace irisdeform::eval
