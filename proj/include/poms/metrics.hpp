#pragma once

// Coverage curves, multi-seed summaries, and the rank-test comparison used to
// decide whether one variant's final coverage beats another's.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "poms/errors.hpp"
#include "poms/numkit.hpp"

namespace poms {

struct CurvePoint {
  std::size_t evals = 0;
  double coverage = 0.0;
};

struct CoverageCurve {
  std::vector<CurvePoint> points;  // evals strictly increasing, coverage non-decreasing
  std::uint64_t seed = 0;
  std::string variant;
  std::string env;
};

// Coverage is a step function of evaluations: the value at `evals` is the
// last recorded point at or before it, 0 before the first point, and the
// final value carried forward past the last (never extrapolated upward).
inline double step_value(const CoverageCurve& curve, std::size_t evals) {
  double v = 0.0;
  for (const auto& pt : curve.points) {
    if (pt.evals > evals) break;
    v = pt.coverage;
  }
  return v;
}

// Percentile by linear interpolation between closest ranks: rank h = q(n-1)
// over the sorted values.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptySample("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct SeedSummary {
  std::vector<std::size_t> checkpoints;
  std::vector<double> median, q25, q75;
};

// Order statistics across seeds on the union grid of all curves' checkpoints.
inline SeedSummary summarise(std::span<const CoverageCurve> curves) {
  if (curves.empty()) throw NoCurves("summarise: no curves");
  SeedSummary s;
  for (const auto& c : curves)
    for (const auto& pt : c.points) s.checkpoints.push_back(pt.evals);
  std::sort(s.checkpoints.begin(), s.checkpoints.end());
  s.checkpoints.erase(std::unique(s.checkpoints.begin(), s.checkpoints.end()),
                      s.checkpoints.end());
  s.median.reserve(s.checkpoints.size());
  s.q25.reserve(s.checkpoints.size());
  s.q75.reserve(s.checkpoints.size());
  std::vector<double> vals(curves.size());
  for (std::size_t k = 0; k < s.checkpoints.size(); ++k) {
    for (std::size_t i = 0; i < curves.size(); ++i)
      vals[i] = step_value(curves[i], s.checkpoints[k]);
    s.q25.push_back(percentile(vals, 0.25));
    s.median.push_back(percentile(vals, 0.50));
    s.q75.push_back(percentile(vals, 0.75));
  }
  return s;
}

// One-sided test that a's final coverages tend to exceed b's.
inline RankTestResult compare(std::span<const double> finals_a,
                              std::span<const double> finals_b) {
  if (finals_a.size() != finals_b.size())
    throw DimensionMismatch("compare: samples must have equal length");
  return mann_whitney_u(finals_a, finals_b, Alternative::greater);
}

}  // namespace poms
