#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "hypdrift/tiling.hpp"

using namespace hypdrift;

namespace {

const std::vector<std::pair<int, int>> kGrid = {{3, 10}, {4, 8}, {7, 7}, {3, 50}, {3, 200}};

// S(φ) evaluated in disk coordinates with the ellipse closed form.
double fSumOracle(int p, int q, double phi) {
  const double r = 2 * std::acosh(std::cos(kPi / p) / std::sin(kPi / q));
  const std::complex<double> i1(0, 1);
  double s = 0;
  for (int k = 0; k < q; ++k) {
    const std::complex<double> w = std::tanh(r / 2) * std::polar(1.0, kTwoPi * k / q - phi);
    const std::complex<double> z = i1 * (1.0 + w) / (1.0 - w);
    s += 2 * std::log((std::abs(z - i1) + std::abs(z + i1)) / 2);
  }
  return s;
}

double maxFSumOracle(int p, int q) {
  double best = -1e300;
  const int n = 200000;
  for (int i = 0; i < n; ++i) best = std::max(best, fSumOracle(p, q, kTwoPi / q * i / n));
  return best;
}

}  // namespace

TEST(Generators, Invariants) {
  for (auto [p, q] : kGrid) {
    const TilingSpec spec = makeTilingSpec(p, q);
    const GeneratorSet g = buildGenerators(spec);
    ASSERT_EQ(g.size(), static_cast<std::size_t>(q));
    for (int k = 0; k < q; ++k) {
      EXPECT_LT(distOrigin(compose(g.sigmas[k], g.sigmas[k])), 1e-10);
      EXPECT_NEAR(distOrigin(g.sigmas[k]), spec.r, 1e-9);
      const Mobius rot = Mobius::rotation(kTwoPi * k / q);
      const Mobius conj = compose(compose(rot, g.sigmas[0]), rot.inverse());
      EXPECT_LT(dist(conj, g.sigmas[k]), 1e-10);
      // Same isometry: agree on a second point as well.
      const HPoint z(0.3, 0.8);
      EXPECT_LT(dist(apply(conj, z), apply(g.sigmas[k], z)), 1e-9);
    }
  }
}

TEST(Generators, Examples) {
  const GeneratorSet g = buildGenerators(makeTilingSpec(3, 10));
  EXPECT_NEAR(dist(HPoint::origin(), g.images[0]), 2.122550123810072, 1e-12);
  EXPECT_NEAR(diskAngle(g.images[5]), kPi, 1e-12);
  EXPECT_NEAR(diskAngle(g.images[0]), 0.0, 1e-12);
  // Neighbors across consecutive edges are at distance r too only when P = 3.
  EXPECT_NEAR(dist(g.images[0], g.images[1]), g.spec.r, 1e-9);
  EXPECT_THROW(buildGenerators(TilingSpec{3, 6, 0}), InvalidTiling);
}

TEST(Generators, TrianglesCloseInThreeSteps) {
  // For P = 3 some path o -> σ_0·o -> σ_0σ_j·o -> σ_0σ_jσ_k·o returns to o.
  const GeneratorSet g = buildGenerators(makeTilingSpec(3, 10));
  int closed = 0;
  for (std::size_t j = 0; j < g.size(); ++j)
    for (std::size_t k = 0; k < g.size(); ++k)
      if (distOrigin(compose(compose(g.sigmas[0], g.sigmas[j]), g.sigmas[k])) < 1e-9) ++closed;
  EXPECT_EQ(closed, 2);  // the two triangles on edge 0
}

TEST(Walk, StepsMoveAtMostR) {
  const GeneratorSet g = buildGenerators(makeTilingSpec(3, 10));
  Rng rng = makeStream(7, 0);
  const WalkTrajectory w = simulateTilingWalk(g, 5000, rng, 1);
  ASSERT_EQ(w.distances.size(), 5001u);
  for (std::size_t i = 1; i < w.distances.size(); ++i) {
    EXPECT_LE(w.distances[i], w.distances[i - 1] + g.spec.r + 1e-6);
    EXPECT_GE(w.distances[i], w.distances[i - 1] - g.spec.r - 1e-6);
  }
}

TEST(Walk, CheckpointsIncludeFinalStep) {
  const GeneratorSet g = buildGenerators(makeTilingSpec(3, 10));
  Rng rng = makeStream(7, 0);
  const WalkTrajectory w = simulateTilingWalk(g, 1000, rng, 64);
  EXPECT_EQ(w.checkpointSteps.back(), 1000u);
  EXPECT_EQ(w.checkpointSteps[1], 64u);
  EXPECT_EQ(w.distances.back(), distOrigin(w.runningElement));
}

TEST(Walk, DeterministicAcrossWorkers) {
  const TilingSpec spec = makeTilingSpec(3, 10);
  const DriftReport a = estimateSpeed(spec, 2000, 12, 42, 1);
  const DriftReport b = estimateSpeed(spec, 2000, 12, 42, 4);
  EXPECT_EQ(a.speedEstimate, b.speedEstimate);
  EXPECT_EQ(a.stdError, b.stdError);
  const DriftReport c = estimateSpeed(spec, 2000, 12, 43, 1);
  EXPECT_NE(a.speedEstimate, c.speedEstimate);
}

TEST(Walk, SpeedBelowEdgeLength) {
  for (auto [p, q] : kGrid) {
    const TilingSpec spec = makeTilingSpec(p, q);
    const DriftReport rep = estimateSpeed(spec, 1000, 10, 1);
    EXPECT_GT(rep.stdError, 0.0);
    EXPECT_LE(rep.speedEstimate, spec.r + 3 * rep.stdError);
    EXPECT_GT(rep.speedEstimate, 0.0);
  }
}

TEST(FSum, PeriodicAndMatchesOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, kTwoPi);
  for (auto [p, q] : kGrid) {
    const GeneratorSet g = buildGenerators(makeTilingSpec(p, q));
    for (int i = 0; i < 50; ++i) {
      const double phi = u(rng);
      EXPECT_NEAR(fSum(g, phi), fSum(g, phi + kTwoPi / q), 1e-8);
      EXPECT_NEAR(fSum(g, phi), fSumOracle(p, q, phi), 1e-8);
    }
  }
}

TEST(FSum, MaxDominatesAndMatchesDenseScan) {
  for (auto [p, q] : std::vector<std::pair<int, int>>{{3, 10}, {4, 8}, {3, 50}}) {
    const TilingSpec spec = makeTilingSpec(p, q);
    const GeneratorSet g = buildGenerators(spec);
    const double m = maxFSum(spec);
    for (int i = 0; i < 64 * q; ++i) EXPECT_GE(m, fSum(g, kTwoPi / q * i / (64.0 * q)) - 1e-12);
    EXPECT_NEAR(m, maxFSumOracle(p, q), 1e-5);
  }
}

TEST(FSum, GrowthIsLogLog) {
  double prev = 1e300;
  for (int q : {50, 100, 200}) {
    const double ratio = maxFSum(makeTilingSpec(3, q)) / (q * std::log(std::log(q)));
    EXPECT_LE(ratio, 2.0);
    EXPECT_LE(ratio, prev);
    prev = ratio;
  }
}

TEST(LowerBound, MonotoneInPAndComposedFromOracles) {
  const TilingSpec spec = makeTilingSpec(3, 50);
  const double m = maxFSumOracle(3, 50);
  const double want = 2 * std::acosh(std::cos(kPi / 3) / std::sin(kPi / 50)) - m / (0.9 * 50);
  EXPECT_NEAR(speedLowerBound(spec, 0.9), want, 1e-5);
  double prev = -1e300;
  for (double p : {0.1, 0.3, 0.5, 0.8, 0.9, 1.0}) {
    const double b = speedLowerBound(spec, p);
    EXPECT_GE(b, prev);
    prev = b;
  }
  EXPECT_THROW(speedLowerBound(spec, 0.0), InvalidArgument);
  EXPECT_THROW(speedLowerBound(spec, 1.1), InvalidArgument);
}

TEST(LowerBound, AsymptoticShape) {
  // At p = 1 the bound tracks 2 log Q - C log log Q with C fitted at Q = 50.
  const double c = (2 * std::log(50.0) - speedLowerBound(makeTilingSpec(3, 50), 1.0)) / std::log(std::log(50.0));
  const double b200 = speedLowerBound(makeTilingSpec(3, 200), 1.0);
  EXPECT_GE(b200, 2 * std::log(200.0) - c * std::log(std::log(200.0)));
  EXPECT_GT(b200, 0.0);
}

TEST(Hyperbolicity, HoldsOnGrid) {
  for (auto [p, q] : kGrid) {
    const TilingSpec spec = makeTilingSpec(p, q);
    const HyperbolicityReport rep = hyperbolicityCheck(spec, 32);
    EXPECT_TRUE(rep.passed);
    EXPECT_LT(rep.maxXiSum, 0.0);
    EXPECT_TRUE(rep.equivalenceHolds);
    EXPECT_LT(rep.maxGromovSum, rep.halfDistanceSum);
    EXPECT_NEAR(rep.maxXiSum, maxFSum(spec) - q * spec.r, 1e-5);
  }
}

TEST(Hyperbolicity, XiSumIsFSumMinusQR) {
  const TilingSpec spec = makeTilingSpec(3, 10);
  const GeneratorSet g = buildGenerators(spec);
  for (double phi : {0.0, 0.1, 0.33, 1.7}) {
    double xs = 0;
    for (const auto& x : g.images) xs += busemann(BoundaryPoint(phi), x);
    EXPECT_NEAR(xs, fSum(g, phi) - 10 * spec.r, 1e-10);
  }
}

TEST(DimBound, Examples) {
  EXPECT_NEAR(dimUpperBound(200, 2 * std::log(200.0)), 0.5, 1e-15);
  EXPECT_NEAR(dimUpperBound(50, 4.0), 2 * dimUpperBound(50, 8.0), 1e-15);
  EXPECT_THROW(dimUpperBound(50, 0.0), InvalidArgument);
  EXPECT_THROW(dimUpperBound(50, -1.0), InvalidArgument);
}

TEST(TheoremA, SmallRunAgrees) {
  const TilingSpec spec = makeTilingSpec(3, 10);
  const TheoremAReport rep = theoremACheck(spec, 2000, 200, 5, 1);
  EXPECT_TRUE(rep.passed) << rep.speed.value << " vs " << rep.horofunction.value;
  EXPECT_TRUE(rep.interiorPassed);
  EXPECT_NEAR(rep.raoBlackwell.value, rep.speed.value, 3 * jointStdError(rep.raoBlackwell.stdError, rep.speed.stdError));
  EXPECT_TRUE(rep.stationarity.passed());
  EXPECT_TRUE(rep.escape.escapes);
  EXPECT_EQ(rep.stationarity.windowMeans.size(), 2u);
}

TEST(TheoremA, DeterministicAcrossWorkers) {
  const TilingSpec spec = makeTilingSpec(4, 8);
  const TheoremAReport a = theoremACheck(spec, 500, 8, 9, 1);
  const TheoremAReport b = theoremACheck(spec, 500, 8, 9, 3);
  EXPECT_EQ(a.horofunction.value, b.horofunction.value);
  EXPECT_EQ(a.speed.value, b.speed.value);
}
