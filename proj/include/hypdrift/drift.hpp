#pragma once

// Estimators and diagnostics shared by every walk: Kingman speed with
// batch-means error bars, increment stationarity, escape of the backward walk,
// and probe-point evaluations of empirical horofunction measures.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "stats.hpp"

namespace hypdrift {

inline constexpr std::size_t kDefaultBatches = 20;

/// Per-step quantities (d(x_n, x_{n+1}) or ξ(x_n) - ξ(x_{n+1})), one value per
/// `checkpointStride` steps.
struct IncrementSeries {
  std::vector<double> values;
  std::size_t checkpointStride = 1;
};

/// Speed from increments: batch means of per-step increments.
inline Estimate kingmanSpeed(const IncrementSeries& series, std::size_t batches = kDefaultBatches) {
  detail::require(series.checkpointStride >= 1, "kingmanSpeed: stride must be >= 1");
  detail::require(series.values.size() >= 2 * batches, "kingmanSpeed: series too short for batch count");
  Estimate e = batchMeans(series.values, batches);
  const double s = static_cast<double>(series.checkpointStride);
  e.value /= s;
  e.stdError /= s;
  return e;
}

/// Speed from distance checkpoints d(o, x_{k·stride}), k = 0, 1, ...
inline Estimate kingmanSpeedFromDistances(std::span<const double> distances, std::size_t stride,
                                          std::size_t batches = kDefaultBatches) {
  detail::require(distances.size() >= 2, "kingmanSpeed: need at least two checkpoints");
  IncrementSeries inc;
  inc.checkpointStride = stride;
  inc.values.reserve(distances.size() - 1);
  for (std::size_t i = 1; i < distances.size(); ++i) inc.values.push_back(distances[i] - distances[i - 1]);
  return kingmanSpeed(inc, batches);
}

struct StationarityReport {
  std::vector<double> windowMeans;
  std::vector<double> windowStdErrors;
  std::vector<double> windowVariances;
  double maxZ = 0.0;  // largest |m_i - m_j| / joint stderr over window pairs
  double threshold = 4.0;
  bool drift = false;
  bool passed() const { return !drift; }
};

namespace detail {

inline StationarityReport compareWindows(std::vector<double> means, std::vector<double> errs,
                                         std::vector<double> vars, double threshold) {
  StationarityReport rep;
  rep.threshold = threshold;
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      const double gap = std::abs(means[i] - means[j]);
      const double se = jointStdError(errs[i], errs[j]);
      const double z = se > 0 ? gap / se : (gap > 0 ? std::numeric_limits<double>::infinity() : 0.0);
      rep.maxZ = std::max(rep.maxZ, z);
    }
  }
  rep.drift = rep.maxZ > threshold;
  rep.windowMeans = std::move(means);
  rep.windowStdErrors = std::move(errs);
  rep.windowVariances = std::move(vars);
  return rep;
}

}  // namespace detail

/// Splits one series into `windows` equal windows; window stderr from
/// `subBatches` batch means inside each window.
inline StationarityReport stationarityDiagnostic(const IncrementSeries& series, std::size_t windows,
                                                 double threshold = 4.0,
                                                 std::size_t subBatches = kDefaultBatches) {
  detail::require(windows >= 2, "stationarityDiagnostic: need at least 2 windows");
  const std::size_t len = series.values.size() / windows;
  detail::require(len >= 2 * subBatches, "stationarityDiagnostic: windows too short");
  std::vector<double> means, errs, vars;
  for (std::size_t w = 0; w < windows; ++w) {
    std::span<const double> win(series.values.data() + w * len, len);
    const Estimate e = batchMeans(win, subBatches);
    RunningStats s;
    for (double x : win) s.add(x);
    means.push_back(s.mean());
    errs.push_back(e.stdError);
    vars.push_back(s.variance());
  }
  return detail::compareWindows(std::move(means), std::move(errs), std::move(vars), threshold);
}

/// Same check over independent trials: `perTrial[t]` is trial t's series;
/// window means are averaged over trials and stderrs taken across trials.
inline StationarityReport stationarityAcrossTrials(const std::vector<std::vector<double>>& perTrial,
                                                   std::size_t windows, double threshold = 4.0) {
  detail::require(windows >= 2, "stationarityAcrossTrials: need at least 2 windows");
  detail::require(perTrial.size() >= 2, "stationarityAcrossTrials: need at least 2 trials");
  std::size_t n = perTrial.front().size();
  for (const auto& s : perTrial) n = std::min(n, s.size());
  const std::size_t len = n / windows;
  detail::require(len >= 1, "stationarityAcrossTrials: series shorter than window count");
  std::vector<RunningStats> acc(windows);
  std::vector<RunningStats> pooledWin(windows);
  for (const auto& s : perTrial) {
    for (std::size_t w = 0; w < windows; ++w) {
      double sum = 0.0;
      for (std::size_t i = w * len; i < (w + 1) * len; ++i) {
        sum += s[i];
        pooledWin[w].add(s[i]);
      }
      acc[w].add(sum / static_cast<double>(len));
    }
  }
  std::vector<double> means, errs, vars;
  for (std::size_t w = 0; w < windows; ++w) {
    means.push_back(acc[w].mean());
    errs.push_back(acc[w].stdError());
    vars.push_back(pooledWin[w].variance());
  }
  return detail::compareWindows(std::move(means), std::move(errs), std::move(vars), threshold);
}

struct EscapeReport {
  std::vector<double> radii;
  std::vector<double> firstHalfFraction;  // indices [0, n/2)
  std::vector<double> lastHalfFraction;   // indices [n/2, n]
  double referenceRadius = 5.0;
  double threshold = 0.05;
  bool escapes = false;
};

inline std::vector<double> defaultRadiusLadder() { return {1, 2, 5, 10, 20, 50, 100}; }

/// Fraction of backward indices within each radius, early versus late.
/// The walk is reported as escaping when the late fraction at the reference
/// radius is at most `threshold`.
inline EscapeReport escapeDiagnostic(std::span<const double> backwardDistances,
                                     std::vector<double> radii = defaultRadiusLadder(),
                                     double referenceRadius = 5.0, double threshold = 0.05) {
  detail::require(!backwardDistances.empty(), "escapeDiagnostic: empty series");
  std::sort(radii.begin(), radii.end());
  if (std::find(radii.begin(), radii.end(), referenceRadius) == radii.end()) {
    radii.push_back(referenceRadius);
    std::sort(radii.begin(), radii.end());
  }
  EscapeReport rep;
  rep.radii = radii;
  rep.referenceRadius = referenceRadius;
  rep.threshold = threshold;
  const std::size_t n = backwardDistances.size();
  const std::size_t half = n / 2;
  std::vector<double> early(backwardDistances.begin(), backwardDistances.begin() + half);
  std::vector<double> late(backwardDistances.begin() + half, backwardDistances.end());
  std::sort(early.begin(), early.end());
  std::sort(late.begin(), late.end());
  auto fraction = [](const std::vector<double>& xs, double r) {
    if (xs.empty()) return 0.0;
    const auto it = std::upper_bound(xs.begin(), xs.end(), r);
    return static_cast<double>(it - xs.begin()) / static_cast<double>(xs.size());
  };
  for (double r : radii) {
    rep.firstHalfFraction.push_back(fraction(early, r));
    rep.lastHalfFraction.push_back(fraction(late, r));
  }
  rep.escapes = fraction(late, referenceRadius) <= threshold;
  return rep;
}

/// Largest violation of |ξ-increment| <= distance increment (0 when none).
inline double lipschitzAudit(std::span<const double> xiIncrements, std::span<const double> stepDistances) {
  detail::require(xiIncrements.size() == stepDistances.size(), "lipschitzAudit: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < xiIncrements.size(); ++i)
    worst = std::max(worst, std::abs(xiIncrements[i]) - stepDistances[i]);
  return worst;
}

/// values[i][j] = ξ_{x_{-i}}(z_j): the horofunction based at the i-th backward
/// point, evaluated at probe j. Each row is one atom of μ_n.
struct EmpiricalHorofunctionMeasure {
  std::vector<std::vector<double>> values;

  std::size_t atoms() const { return values.size(); }

  /// Mean of μ_n at probe j.
  double mean(std::size_t j) const {
    double s = 0.0;
    for (const auto& row : values) s += row.at(j);
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }
};

/// Builds μ_n from backward points and probes; `distance(a, b)` is the metric
/// and `origin` the base point.
template <class Point, class Dist>
EmpiricalHorofunctionMeasure empiricalHorofunctionMeasure(std::span<const Point> backward,
                                                          std::span<const Point> probes,
                                                          const Point& origin, Dist&& distance) {
  EmpiricalHorofunctionMeasure mu;
  mu.values.reserve(backward.size());
  for (const Point& x : backward) {
    const double base = distance(x, origin);
    std::vector<double> row;
    row.reserve(probes.size());
    for (const Point& z : probes) row.push_back(base - distance(x, z));
    mu.values.push_back(std::move(row));
  }
  return mu;
}

/// Largest violation of |ξ(z_j) - ξ(z_k)| <= d(z_j, z_k) over all atoms.
template <class Point, class Dist>
double lipschitzAudit(const EmpiricalHorofunctionMeasure& mu, std::span<const Point> probes,
                      Dist&& distance) {
  double worst = 0.0;
  for (std::size_t j = 0; j < probes.size(); ++j)
    for (std::size_t k = j + 1; k < probes.size(); ++k) {
      const double d = distance(probes[j], probes[k]);
      for (const auto& row : mu.values) worst = std::max(worst, std::abs(row[j] - row[k]) - d);
    }
  return worst;
}

/// CSV "index,value" with a header line.
inline void saveSeriesCsv(const std::string& path, std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  out << "index,value\n";
  for (std::size_t i = 0; i < values.size(); ++i) out << i << ',' << values[i] << '\n';
}

inline std::vector<double> loadSeriesCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path);
  std::vector<double> values;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || (lineNo == 1 && line.rfind("index", 0) == 0)) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path + ":" + std::to_string(lineNo) + ": expected index,value");
    try {
      const std::size_t idx = std::stoull(line.substr(0, comma));
      if (idx != values.size()) throw ParseError(path + ":" + std::to_string(lineNo) + ": indices must be consecutive");
      values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      throw ParseError(path + ":" + std::to_string(lineNo) + ": malformed number");
    }
  }
  return values;
}

}  // namespace hypdrift
