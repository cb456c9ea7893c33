#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "hypdrift/drift.hpp"
#include "hypdrift/parallel.hpp"
#include "hypdrift/random.hpp"

using namespace hypdrift;

TEST(Stats, RunningStatsMatchesTwoPass) {
  std::mt19937_64 g(1);
  std::normal_distribution<double> n(3.0, 2.0);
  std::vector<double> xs(1000);
  for (double& x : xs) x = n(g);
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const Estimate e = meanEstimate(xs);
  EXPECT_NEAR(e.value, mean, 1e-12);
  EXPECT_NEAR(e.stdError, std::sqrt(ss / 999 / 1000), 1e-12);
  EXPECT_EQ(e.samples, 1000u);
}

TEST(Stats, BatchMeansOfConstantBlocks) {
  // Batches of 10 with means 0, 1, ..., 9.
  std::vector<double> xs;
  for (int b = 0; b < 10; ++b)
    for (int i = 0; i < 10; ++i) xs.push_back(b + (i % 2 ? 0.5 : -0.5));
  const Estimate e = batchMeans(xs, 10);
  EXPECT_DOUBLE_EQ(e.value, 4.5);
  EXPECT_NEAR(e.stdError, std::sqrt(55.0 / 6.0 / 10.0), 1e-12);
  EXPECT_THROW(batchMeans(xs, 1), InvalidArgument);
}

TEST(Kingman, LinearDistancesGiveExactSpeed) {
  std::vector<double> d;
  for (int i = 0; i <= 400; ++i) d.push_back(0.75 * 64 * i);
  const Estimate e = kingmanSpeedFromDistances(d, 64);
  EXPECT_NEAR(e.value, 0.75, 1e-12);
  EXPECT_NEAR(e.stdError, 0.0, 1e-12);
}

TEST(Kingman, IidIncrementsCoverTruth) {
  int covered = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Rng rng = makeStream(5, rep);
    IncrementSeries s;
    for (int i = 0; i < 4000; ++i) s.values.push_back(uniform01(rng));
    const Estimate e = kingmanSpeed(s);
    covered += std::abs(e.value - 0.5) <= 2 * e.stdError;
  }
  // Nominal 95% coverage; t-quantiles with 19 dof make it about 94%.
  EXPECT_GE(covered, 175);
}

TEST(Stationarity, FlagsShiftedWindow) {
  Rng rng = makeStream(2, 0);
  IncrementSeries flat, shifted;
  for (int i = 0; i < 20000; ++i) {
    const double u = uniform01(rng);
    flat.values.push_back(u);
    shifted.values.push_back(u + (i >= 10000 ? 0.1 : 0.0));
  }
  const StationarityReport a = stationarityDiagnostic(flat, 2);
  EXPECT_TRUE(a.passed());
  EXPECT_EQ(a.windowMeans.size(), 2u);
  EXPECT_NEAR(a.windowVariances[0], 1.0 / 12, 0.01);
  const StationarityReport b = stationarityDiagnostic(shifted, 2);
  EXPECT_FALSE(b.passed());
  EXPECT_GT(b.maxZ, 10.0);
}

TEST(Stationarity, AcrossTrials) {
  std::vector<std::vector<double>> ok, bad;
  for (int t = 0; t < 100; ++t) {
    Rng rng = makeStream(4, t);
    std::vector<double> a, b;
    for (int i = 0; i < 1000; ++i) {
      const double u = uniform01(rng);
      a.push_back(u);
      b.push_back(u + 0.0002 * i);
    }
    ok.push_back(a);
    bad.push_back(b);
  }
  EXPECT_TRUE(stationarityAcrossTrials(ok, 2).passed());
  EXPECT_FALSE(stationarityAcrossTrials(bad, 2).passed());
  EXPECT_THROW(stationarityAcrossTrials({ok[0]}, 2), InvalidArgument);
}

TEST(Escape, LadderFractions) {
  std::vector<double> d;
  for (int i = 0; i <= 100; ++i) d.push_back(i);
  const EscapeReport r = escapeDiagnostic(d);
  EXPECT_TRUE(r.escapes);
  ASSERT_EQ(r.radii.size(), 7u);
  EXPECT_NEAR(r.firstHalfFraction[2], 6.0 / 50, 1e-15);  // 0..5 of 0..49
  EXPECT_NEAR(r.lastHalfFraction[6], 1.0, 1e-15);
  const std::vector<double> stuck(100, 1.0);
  EXPECT_FALSE(escapeDiagnostic(stuck).escapes);
}

TEST(Lipschitz, AuditsIncrementsAndMeasures) {
  EXPECT_EQ(lipschitzAudit(std::vector<double>{0.5, -1.0}, std::vector<double>{1.0, 1.0}), 0.0);
  EXPECT_NEAR(lipschitzAudit(std::vector<double>{1.5, -1.0}, std::vector<double>{1.0, 1.0}), 0.5, 1e-15);

  // On the real line ξ_x(y) = |x| - |x - y| is 1-Lipschitz.
  const std::vector<double> backward = {-7, -2, 0, 3, 11};
  const std::vector<double> probes = {-1, 0, 0.5, 2};
  auto d = [](double a, double b) { return std::abs(a - b); };
  const EmpiricalHorofunctionMeasure mu =
      empiricalHorofunctionMeasure<double>(backward, probes, 0.0, d);
  EXPECT_EQ(mu.atoms(), 5u);
  EXPECT_EQ(mu.values[4][3], 11 - 9);
  EXPECT_NEAR(mu.mean(1), 0.0, 1e-15);
  EXPECT_LE(lipschitzAudit<double>(mu, probes, d), 0.0);
}

TEST(SeriesCsv, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "hypdrift_series.csv").string();
  const std::vector<double> v = {0.1, -2.5e-300, 1.0 / 3};
  saveSeriesCsv(path, v);
  EXPECT_EQ(loadSeriesCsv(path), v);
  {
    std::ofstream out(path);
    out << "index,value\n0,1\n2,3\n";
  }
  EXPECT_THROW(loadSeriesCsv(path), ParseError);
  {
    std::ofstream out(path);
    out << "index,value\n0,abc\n";
  }
  EXPECT_THROW(loadSeriesCsv(path), ParseError);
  std::filesystem::remove(path);
  EXPECT_THROW(loadSeriesCsv(path), ParseError);
}

TEST(Parallel, ResultsOrderedAndIndependentOfWorkers) {
  auto f = [](std::size_t t) {
    Rng rng = makeStream(99, t);
    return uniform01(rng);
  };
  const auto a = runTrials(37, 1, f);
  const auto b = runTrials(37, 5, f);
  EXPECT_EQ(a, b);
  EXPECT_NE(a[0], a[1]);
}

TEST(Random, StreamsDifferByRole) {
  Rng a = makeStream(1, 0, StreamRole::forward);
  Rng b = makeStream(1, 0, StreamRole::backward);
  EXPECT_NE(a(), b());
  std::vector<int> counts(7, 0);
  Rng c = makeStream(3, 0);
  for (int i = 0; i < 70000; ++i) ++counts[uniformIndex(c, 7)];
  for (int k : counts) EXPECT_NEAR(k, 10000, 500);
}
