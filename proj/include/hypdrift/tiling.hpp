#pragma once

// Random walks on the {P,Q} tiling group generated by the half-turns about the
// midpoints of the Q edges at the origin, and the speed bounds built from f_ξ.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drift.hpp"
#include "errors.hpp"
#include "hyperbolic.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace hypdrift {

inline constexpr std::size_t kDefaultStride = 64;

struct TilingSpec {
  int P = 3;
  int Q = 10;
  double r = 0.0;  // edge length r(P,Q)
};

inline TilingSpec makeTilingSpec(int p, int q) { return {p, q, sideLength(p, q)}; }

inline std::string tilingName(const TilingSpec& s) {
  return "{" + (s.P == kIdealPolygon ? std::string("inf") : std::to_string(s.P)) + "," +
         std::to_string(s.Q) + "}";
}

/// σ_k = half-turn about the point at distance r/2 in disk direction 2πk/Q.
/// σ_k·o is the neighbor of o across edge k; the set is symmetric since σ_k² = 1.
struct GeneratorSet {
  TilingSpec spec;
  std::vector<Mobius> sigmas;
  std::vector<HPoint> images;  // σ_k·o

  std::size_t size() const { return sigmas.size(); }
};

inline GeneratorSet buildGenerators(const TilingSpec& spec) {
  const double r = sideLength(spec.P, spec.Q);
  GeneratorSet g;
  g.spec = spec;
  g.spec.r = r;
  const Mobius j = pointReflection(HPoint(0.0, std::exp(0.5 * r)));
  for (int k = 0; k < spec.Q; ++k) {
    const Mobius rot = Mobius::rotation(kTwoPi * k / spec.Q);
    const Mobius s = compose(compose(rot, j), rot.inverse());
    g.sigmas.push_back(s);
    g.images.push_back(apply(s, HPoint::origin()));
  }
  return g;
}

/// d(o, x_n) sampled every `stride` steps, starting with d(o, x_0) = 0; the final
/// step is always included.
struct WalkTrajectory {
  std::size_t steps = 0;
  Mobius runningElement;
  std::vector<std::size_t> checkpointSteps;
  std::vector<double> distances;
  std::vector<std::uint32_t> generatorLog;  // filled only on request
};

/// x_n = σ_{k_1}⋯σ_{k_n}·o with k_i uniform.
inline WalkTrajectory simulateTilingWalk(const GeneratorSet& gens, std::size_t nSteps, Rng& rng,
                                         std::size_t stride = kDefaultStride, bool logGenerators = false) {
  detail::require(stride >= 1, "simulateTilingWalk: stride must be >= 1");
  WalkTrajectory w;
  w.steps = nSteps;
  w.checkpointSteps.push_back(0);
  w.distances.push_back(0.0);
  Mobius m;
  for (std::size_t n = 1; n <= nSteps; ++n) {
    const std::size_t k = uniformIndex(rng, gens.size());
    if (logGenerators) w.generatorLog.push_back(static_cast<std::uint32_t>(k));
    m = compose(m, gens.sigmas[k]);
    if (n % stride == 0 || n == nSteps) {
      w.checkpointSteps.push_back(n);
      w.distances.push_back(distOrigin(m));
    }
  }
  w.runningElement = m;
  return w;
}

struct DriftReport {
  double speedEstimate = 0.0;
  double stdError = 0.0;
  std::size_t sampleCount = 0;
  std::optional<double> horofunctionEstimate;  // -mean ξ(x_1)
  std::optional<double> horofunctionStdError;
  std::optional<double> lowerBound;
  std::optional<double> upperBound;
  std::optional<double> dimUpperBound;
  double retainedFraction = 1.0;
};

struct TrialTrajectories {
  DriftReport report;
  std::vector<WalkTrajectory> trajectories;
};

/// Mean of d(o, x_n)/n over independent trials. With a single trial the
/// stderr comes from batch means along the checkpoints.
inline TrialTrajectories estimateSpeedDetailed(const TilingSpec& spec, std::size_t nSteps, std::size_t trials,
                                               std::uint64_t seed, std::size_t workers = 1,
                                               std::size_t stride = kDefaultStride) {
  detail::require(nSteps >= 1, "estimateSpeed: nSteps must be positive");
  detail::require(trials >= 1, "estimateSpeed: trials must be positive");
  const GeneratorSet gens = buildGenerators(spec);
  TrialTrajectories out;
  out.trajectories = runTrials(trials, workers, [&](std::size_t t) {
    Rng rng = makeStream(seed, t, StreamRole::forward);
    return simulateTilingWalk(gens, nSteps, rng, stride);
  });
  RunningStats s;
  for (const auto& w : out.trajectories) s.add(w.distances.back() / static_cast<double>(nSteps));
  DriftReport& rep = out.report;
  rep.speedEstimate = s.mean();
  rep.stdError = s.stdError();
  rep.sampleCount = trials;
  rep.upperBound = gens.spec.r;
  if (trials == 1 && out.trajectories[0].distances.size() > 2 * kDefaultBatches) {
    const auto& w = out.trajectories[0];
    if (nSteps % stride == 0) rep.stdError = kingmanSpeedFromDistances(w.distances, stride).stdError;
  }
  return out;
}

inline DriftReport estimateSpeed(const TilingSpec& spec, std::size_t nSteps, std::size_t trials,
                                 std::uint64_t seed, std::size_t workers = 1) {
  return estimateSpeedDetailed(spec, nSteps, trials, seed, workers).report;
}

/// S(φ) = Σ_k f_ξ(σ_k·o) for the Busemann function of the boundary point at disk angle φ.
inline double fSum(const GeneratorSet& gens, double phi) {
  const BoundaryPoint b(phi);
  double s = 0.0;
  for (const HPoint& x : gens.images) s += fXi(b, x);
  return s;
}

namespace detail {

template <class F>
double goldenMax(F&& f, double lo, double hi, double tol, double* argmax) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  double best = std::max({fc, fd, f(lo), f(hi)});
  if (argmax) *argmax = fc >= fd ? c : d;
  return best;
}

// Max of f over one period [0, period): grid scan, then golden-section search in
// the cells around the best `refine` grid points.
template <class F>
double periodicMax(F&& f, double period, std::size_t gridPoints, double tol, double* argmax = nullptr,
                   std::size_t refine = 3) {
  std::vector<std::pair<double, double>> grid;
  grid.reserve(gridPoints);
  const double h = period / static_cast<double>(gridPoints);
  for (std::size_t i = 0; i < gridPoints; ++i) {
    const double x = h * static_cast<double>(i);
    grid.emplace_back(f(x), x);
  }
  std::partial_sort(grid.begin(), grid.begin() + std::min(refine, grid.size()), grid.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  double best = grid.front().first;
  double where = grid.front().second;
  for (std::size_t i = 0; i < std::min(refine, grid.size()); ++i) {
    double at = 0.0;
    const double v = goldenMax(f, grid[i].second - h, grid[i].second + h, tol, &at);
    if (v > best) {
      best = v;
      where = at;
    }
  }
  if (argmax) *argmax = where;
  return best;
}

}  // namespace detail

struct FSumMaximum {
  double value = 0.0;
  double argmax = 0.0;  // boundary angle in [0, 2π/Q) up to refinement spill
};

inline FSumMaximum maxFSumDetailed(const TilingSpec& spec, double tol = 1e-6) {
  detail::require(tol > 0.0, "maxFSum: tol must be positive");
  const GeneratorSet gens = buildGenerators(spec);
  FSumMaximum out;
  out.value = detail::periodicMax([&](double phi) { return fSum(gens, phi); }, kTwoPi / spec.Q,
                                  64 * static_cast<std::size_t>(spec.Q), tol, &out.argmax);
  return out;
}

/// max over boundary points of Σ_{x∈F} f_ξ(x).
inline double maxFSum(const TilingSpec& spec, double tol = 1e-6) { return maxFSumDetailed(spec, tol).value; }

/// r - maxFSum/(p·Q): lower bound on the speed on the percolation cluster.
inline double speedLowerBound(const TilingSpec& spec, double p, double tol = 1e-6) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("speedLowerBound: p must lie in (0, 1]");
  const double r = sideLength(spec.P, spec.Q);
  return r - maxFSum(spec, tol) / (p * spec.Q);
}

/// Same bound from a precomputed maxFSum.
inline double speedLowerBound(const TilingSpec& spec, double p, const FSumMaximum& m) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("speedLowerBound: p must lie in (0, 1]");
  return sideLength(spec.P, spec.Q) - m.value / (p * spec.Q);
}

struct HyperbolicityReport {
  double maxXiSum = 0.0;       // max over φ of Σ_k ξ_φ(σ_k·o)
  double argmax = 0.0;
  double maxGromovSum = 0.0;   // max over φ of Σ_k (ξ|x)_o = Σ f_ξ / 2
  double halfDistanceSum = 0.0;  // (1/2) Σ d(o, x) = Q r / 2
  std::size_t gridPoints = 0;
  bool equivalenceHolds = true;  // sign(Σξ) agrees with sign(Σ(ξ|x) - Σd/2) everywhere
  bool passed = false;
};

/// Maximum over boundary horofunctions ξ of Σ_{x∈F} ξ(x), with its Gromov
/// product form; `passed` when the maximum is negative.
inline HyperbolicityReport hyperbolicityScan(const TilingSpec& spec, std::size_t samples = 64,
                                             double tol = 1e-9) {
  detail::require(samples >= 1, "hyperbolicityCheck: samples must be >= 1");
  const GeneratorSet gens = buildGenerators(spec);
  const double qr = spec.Q * gens.spec.r;
  HyperbolicityReport rep;
  rep.halfDistanceSum = 0.5 * qr;
  // Grid resolution π/(Q·samples) over one period 2π/Q.
  rep.gridPoints = 2 * samples;
  auto xiSum = [&](double phi) {
    const BoundaryPoint b(phi);
    double s = 0.0;
    for (const HPoint& x : gens.images) s += busemann(b, x);
    return s;
  };
  const double period = kTwoPi / spec.Q;
  for (std::size_t i = 0; i < rep.gridPoints; ++i) {
    const double phi = period * static_cast<double>(i) / static_cast<double>(rep.gridPoints);
    const double xs = xiSum(phi);
    const double fs = fSum(gens, phi);
    const bool negative = xs < 0.0;
    const bool gromovBelow = 0.5 * fs < rep.halfDistanceSum;
    if (negative != gromovBelow) rep.equivalenceHolds = false;
    rep.maxGromovSum = std::max(rep.maxGromovSum, 0.5 * fs);
  }
  rep.maxXiSum = detail::periodicMax(xiSum, period, rep.gridPoints, tol, &rep.argmax);
  rep.maxGromovSum = std::max(rep.maxGromovSum, 0.5 * (rep.maxXiSum + qr));
  rep.passed = rep.maxXiSum < 0.0;
  return rep;
}

/// Throws ConditionViolated when the scan's maximum is not negative.
inline HyperbolicityReport hyperbolicityCheck(const TilingSpec& spec, std::size_t samples = 64,
                                              double tol = 1e-9) {
  HyperbolicityReport rep = hyperbolicityScan(spec, samples, tol);
  if (!rep.passed)
    throw ConditionViolated("hyperbolicity condition fails for " + tilingName(spec) +
                            ": max of sum of horofunctions over F is " + std::to_string(rep.maxXiSum));
  return rep;
}

/// log(Q)/speed: upper bound on the dimension of the harmonic measure (h <= log Q).
inline double dimUpperBound(int q, double speedEstimate) {
  if (!(speedEstimate > 0.0)) throw InvalidArgument("dimUpperBound: speed must be positive");
  detail::require(q >= 2, "dimUpperBound: Q must be >= 2");
  return std::log(static_cast<double>(q)) / speedEstimate;
}

inline double dimUpperBound(const TilingSpec& spec, double speedEstimate) {
  return dimUpperBound(spec.Q, speedEstimate);
}

inline constexpr double kBiasRate = 0.1;
inline constexpr std::size_t kStationarityWindow = 1000;

struct TheoremATrial {
  double forwardSpeed = 0.0;   // d(o, x_n)/n
  double minusXi = 0.0;        // -ξ_b(x_1), b = limit direction of the backward walk
  double minusXiInterior = 0.0;  // -ξ_{y_m}(x_1)
  double raoBlackwell = 0.0;   // r - S(b)/Q, the average of -ξ_b over the first step
  double boundaryAngle = 0.0;
  std::vector<double> windowMeans;  // window means of ξ(x_n) - ξ(x_{n+1})
  std::vector<double> backwardDistances;  // d(o, y_i) sampled every stride steps
  std::vector<double> forwardDistances;
  std::vector<double> forwardXi;
};

struct TheoremAReport {
  Estimate speed;
  Estimate horofunction;
  Estimate horofunctionInterior;
  Estimate raoBlackwell;
  double discrepancy = 0.0;
  double combinedStdError = 0.0;
  double biasAllowance = 0.0;
  double tolerance = 0.0;  // 3·(combined stderr + bias allowance)
  bool passed = false;
  bool interiorPassed = false;
  StationarityReport stationarity;
  EscapeReport escape;  // backward walk of trial 0
  std::vector<TheoremATrial> trials;
};

/// ℓ = -E[ξ(x_1)] with ξ the boundary horofunction of an independent backward walk.
inline TheoremAReport theoremACheck(const TilingSpec& spec, std::size_t nSteps, std::size_t trials,
                                    std::uint64_t seed, std::size_t workers = 1,
                                    std::size_t stride = kDefaultStride,
                                    std::size_t window = kStationarityWindow) {
  detail::require(nSteps >= 1 && trials >= 2, "theoremACheck: need nSteps >= 1 and trials >= 2");
  const GeneratorSet gens = buildGenerators(spec);
  const double r = gens.spec.r;
  const std::size_t windows = std::max<std::size_t>(2, nSteps / window);
  const std::size_t winLen = nSteps / windows;
  TheoremAReport rep;
  rep.trials = runTrials(trials, workers, [&](std::size_t t) {
    TheoremATrial tr;
    Rng back = makeStream(seed, t, StreamRole::backward);
    Mobius y;
    tr.backwardDistances.push_back(0.0);
    for (std::size_t i = 1; i <= nSteps; ++i) {
      y = compose(y, gens.sigmas[uniformIndex(back, gens.size())]);
      if (i % stride == 0) tr.backwardDistances.push_back(distOrigin(y));
    }
    const BoundaryPoint b(y.direction());
    tr.boundaryAngle = b.angle();
    const Horofunction xi = Horofunction::boundary(b);
    const Horofunction xiInterior = Horofunction::interior(y);
    Rng first = makeStream(seed, t, StreamRole::firstStep);
    const Mobius& x1 = gens.sigmas[uniformIndex(first, gens.size())];
    tr.minusXi = -xi(x1);
    tr.minusXiInterior = -xiInterior(x1);
    tr.raoBlackwell = r - fSum(gens, b.angle()) / spec.Q;

    Rng fwd = makeStream(seed, t, StreamRole::forward);
    Mobius x;
    double prevXi = 0.0;
    double winSum = 0.0;
    tr.forwardDistances.push_back(0.0);
    tr.forwardXi.push_back(0.0);
    for (std::size_t n = 1; n <= nSteps; ++n) {
      x = compose(x, gens.sigmas[uniformIndex(fwd, gens.size())]);
      const double cur = xi(x);
      winSum += prevXi - cur;
      prevXi = cur;
      if (n % winLen == 0 && tr.windowMeans.size() < windows) {
        tr.windowMeans.push_back(winSum / static_cast<double>(winLen));
        winSum = 0.0;
      }
      if (n % stride == 0 || n == nSteps) {
        tr.forwardDistances.push_back(distOrigin(x));
        tr.forwardXi.push_back(cur);
      }
    }
    tr.forwardSpeed = distOrigin(x) / static_cast<double>(nSteps);
    return tr;
  });
  RunningStats sp, hx, hi, rb;
  std::vector<std::vector<double>> perTrialWindows;
  for (const auto& tr : rep.trials) {
    sp.add(tr.forwardSpeed);
    hx.add(tr.minusXi);
    hi.add(tr.minusXiInterior);
    rb.add(tr.raoBlackwell);
    perTrialWindows.push_back(tr.windowMeans);
  }
  rep.speed = sp.estimate();
  rep.horofunction = hx.estimate();
  rep.horofunctionInterior = hi.estimate();
  rep.raoBlackwell = rb.estimate();
  rep.discrepancy = std::abs(rep.speed.value - rep.horofunction.value);
  rep.combinedStdError = jointStdError(rep.speed.stdError, rep.horofunction.stdError);
  rep.biasAllowance = std::exp(-static_cast<double>(nSteps) * kBiasRate);
  rep.tolerance = 3.0 * (rep.combinedStdError + rep.biasAllowance);
  rep.passed = rep.discrepancy <= rep.tolerance;
  const double interiorTol =
      3.0 * (jointStdError(rep.speed.stdError, rep.horofunctionInterior.stdError) + rep.biasAllowance);
  rep.interiorPassed = std::abs(rep.speed.value - rep.horofunctionInterior.value) <= interiorTol;
  rep.stationarity = stationarityAcrossTrials(perTrialWindows, windows);
  rep.escape = escapeDiagnostic(rep.trials.front().backwardDistances);
  return rep;
}

}  // namespace hypdrift
