#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "errors.hpp"

namespace hypdrift {

/// Mean with its standard error and the number of samples behind it.
struct Estimate {
  double value = 0.0;
  double stdError = 0.0;
  std::size_t samples = 0;
};

inline double jointStdError(double a, double b) { return std::hypot(a, b); }

// Welford accumulator.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stdError() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }
  Estimate estimate() const { return {mean(), stdError(), n_}; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline Estimate meanEstimate(std::span<const double> xs) {
  RunningStats s;
  for (double x : xs) s.add(x);
  return s.estimate();
}

/// Batch-means estimate of the mean of a dependent series: equal-length
/// batches (the remainder is dropped), stderr from the spread of batch means.
inline Estimate batchMeans(std::span<const double> xs, std::size_t batches) {
  detail::require(batches >= 2, "batchMeans: need at least 2 batches");
  detail::require(xs.size() >= batches, "batchMeans: series shorter than batch count");
  const std::size_t len = xs.size() / batches;
  RunningStats s;
  for (std::size_t b = 0; b < batches; ++b) {
    double sum = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) sum += xs[i];
    s.add(sum / static_cast<double>(len));
  }
  Estimate e = s.estimate();
  e.samples = len * batches;
  return e;
}

}  // namespace hypdrift
