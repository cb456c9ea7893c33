#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "hypdrift/lyapunov.hpp"

using namespace hypdrift;

namespace {

// Largest singular value from the eigenvalues of M^T M.
double normOracle(const Matrix2& m) {
  const double p = m.a * m.a + m.c * m.c, q = m.a * m.b + m.c * m.d, r = m.b * m.b + m.d * m.d;
  const double tr = p + r, det = p * r - q * q;
  return std::sqrt(0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4 * det))));
}

// E log ||A_k ... A_1|| for the fair coin law, by enumerating all 2^k products.
double coinEnumeration(int k) {
  const Matrix2 atoms[2] = {diagonalMatrix(2, 0.5), Matrix2{1, 1, 0, 1}};
  double sum = 0;
  for (std::uint32_t bits = 0; bits < (1u << k); ++bits) {
    Matrix2 m;
    for (int i = 0; i < k; ++i) m = atoms[(bits >> i) & 1] * m;
    sum += std::log(normOracle(m));
  }
  return sum / (1u << k);
}

MatrixLaw deterministicE() { return MatrixLaw({{diagonalMatrix(std::exp(1.0), std::exp(-1.0)), 1.0}}); }

MatrixLaw rotationLaw() { return MatrixLaw({{rotationMatrix(1.0), 0.5}, {rotationMatrix(0.3), 0.5}}); }

}  // namespace

TEST(Matrix2, NormMatchesOracle) {
  Rng rng = makeStream(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const Matrix2 m{4 * uniform01(rng) - 2, 4 * uniform01(rng) - 2, 4 * uniform01(rng) - 2, 4 * uniform01(rng) - 2};
    EXPECT_NEAR(m.norm(), normOracle(m), 1e-12);
  }
  EXPECT_DOUBLE_EQ(rotationMatrix(0.7).norm(), 1.0);
  EXPECT_DOUBLE_EQ(diagonalMatrix(3, 1.0 / 3).norm(), 3.0);
}

TEST(MatrixLaw, Validation) {
  EXPECT_THROW(MatrixLaw({}), InvalidArgument);
  EXPECT_THROW(MatrixLaw({{diagonalMatrix(2, 2), 1.0}}), InvalidArgument);
  EXPECT_THROW(MatrixLaw({{diagonalMatrix(2, 0.5), 0.6}, {rotationMatrix(1), 0.3}}), InvalidArgument);
  EXPECT_THROW(MatrixLaw({{diagonalMatrix(2, 0.5), 1.2}, {rotationMatrix(1), -0.2}}), InvalidArgument);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const MatrixLaw law = randomMatrixLaw(3, s);
    for (const auto& at : law.atoms()) EXPECT_NEAR(at.m.det(), 1.0, 1e-12);
  }
}

TEST(MatrixLaw, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string ok = (dir / "hypdrift_law.txt").string();
  std::ofstream(ok) << "# coin\n0.5 2 0 0 0.5\n\n0.5 1 1 0 1\n";
  const MatrixLaw law = MatrixLaw::load(ok);
  ASSERT_EQ(law.size(), 2u);
  EXPECT_EQ(law.matrix(1).b, 1.0);
  const std::string bad = (dir / "hypdrift_law_bad.txt").string();
  std::ofstream(bad) << "0.5 2 0 0\n";
  EXPECT_THROW(MatrixLaw::load(bad), ParseError);
  std::ofstream(bad) << "1.0 2 0 0 2\n";
  EXPECT_THROW(MatrixLaw::load(bad), ParseError);
  std::ofstream(bad) << "x 1 0 0 1\n";
  EXPECT_THROW(MatrixLaw::load(bad), ParseError);
  EXPECT_THROW(MatrixLaw::load("/nonexistent/law.txt"), ParseError);
}

TEST(MatrixLaw, SamplingFrequencies) {
  const MatrixLaw law({{rotationMatrix(0), 0.2}, {rotationMatrix(1), 0.3}, {rotationMatrix(2), 0.5}});
  Rng rng = makeStream(4, 0);
  std::vector<int> counts(3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[law.sample(rng)];
  for (int k = 0; k < 3; ++k) {
    const double p = law.atoms()[k].p;
    EXPECT_NEAR(counts[k] / double(n), p, 5 * std::sqrt(p * (1 - p) / n));
  }
}

TEST(LyapDirect, DeterministicAndRotation) {
  const LyapunovEstimate e = lyapDirect(deterministicE(), 5000, 4, 1);
  EXPECT_NEAR(e.chi.value, 1.0, 1e-12);
  EXPECT_EQ(e.chi.stdError, 0.0);
  const LyapunovEstimate r = lyapDirect(rotationLaw(), 5000, 4, 1);
  EXPECT_NEAR(r.chi.value, 0.0, 1e-12);
  EXPECT_THROW(lyapDirect(deterministicE(), 999, 4, 1), InvalidArgument);
}

TEST(LyapDirect, MatchesNaiveProductBeforeOverflow) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const MatrixLaw law = randomMatrixLaw(3, s);
    Rng rng = makeStream(s, 1);
    std::vector<std::size_t> seq;
    Matrix2 naive;
    for (int n = 1; n <= 200; ++n) {
      seq.push_back(law.sample(rng));
      naive = law.matrix(seq.back()) * naive;
      ASSERT_TRUE(std::isfinite(naive.a));
      EXPECT_NEAR(productLogNorm(law, seq), std::log(normOracle(naive)), 1e-9);
    }
  }
}

TEST(LyapDirect, CoinLawEnumerationOracle) {
  // The coin law is upper triangular with diagonal growth 2^(#diag), so
  // χ = log(2)/2; E log||A_k...A_1||/k approaches it from above.
  double prev = 1e300;
  for (int k : {8, 12, 16, 20}) {
    const double ek = coinEnumeration(k) / k;
    EXPECT_GT(ek, std::log(2.0) / 2);
    EXPECT_LT(ek, prev);
    prev = ek;
  }
  // Monte Carlo over the same statistic at k = 20.
  RunningStats mc;
  for (std::size_t t = 0; t < 20000; ++t) {
    Rng rng = makeStream(9, t);
    std::vector<std::size_t> seq(20);
    for (auto& i : seq) i = coinLaw().sample(rng);
    mc.add(productLogNorm(coinLaw(), seq) / 20);
  }
  EXPECT_NEAR(mc.mean(), coinEnumeration(20) / 20, 3 * mc.stdError());
  const LyapunovEstimate e = lyapDirect(coinLaw(), 10000, 200, 3);
  EXPECT_NEAR(e.chi.value, std::log(2.0) / 2, 3 * e.chi.stdError);
}

TEST(LyapDirect, NonnegativeForUnitDeterminant) {
  for (std::uint64_t s = 0; s < 8; ++s) {
    const LyapunovEstimate e = lyapDirect(randomMatrixLaw(2 + s % 3, s), 2000, 30, s);
    EXPECT_GE(e.chi.value, -3 * e.chi.stdError);
  }
}

TEST(LyapDirect, DeterministicAcrossWorkers) {
  const MatrixLaw law = randomMatrixLaw(3, 5);
  EXPECT_EQ(lyapDirect(law, 1000, 9, 2, 1).perTrial, lyapDirect(law, 1000, 9, 2, 4).perTrial);
}

TEST(StationaryDirection, CollapsesOnExpandingAxis) {
  const DirectionSample s = stationaryDirection(MatrixLaw({{diagonalMatrix(2, 0.5), 1.0}}), 100, 2000, 1);
  ASSERT_EQ(s.angles.size(), 2000u);
  for (double a : s.angles) EXPECT_TRUE(a < 1e-12 || a > kPi - 1e-12) << a;
  EXPECT_FALSE(s.nonProximalWarning);
}

TEST(StationaryDirection, AnglesInRange) {
  const DirectionSample s = stationaryDirection(randomMatrixLaw(3, 2), 100, 5000, 1);
  for (double a : s.angles) {
    EXPECT_GE(a, 0.0);
    EXPECT_LT(a, kPi);
  }
}

TEST(StationaryDirection, RotationLawWarns) {
  const DirectionSample s = stationaryDirection(rotationLaw(), 1000, 100000, 3);
  EXPECT_TRUE(s.nonProximalWarning);
  EXPECT_FALSE(s.warning.empty());
  EXPECT_FALSE(stationaryDirection(randomMatrixLaw(3, 3), 1000, 100000, 3).nonProximalWarning);
}

TEST(StationaryDirection, CoinLawBurnInAudit) {
  EXPECT_LE(burnInDoublingAudit(coinLaw(), 1000, 100000, 4), 0.02);
  EXPECT_LE(burnInDoublingAudit(randomMatrixLaw(3, 8), 1000, 100000, 4), 0.02);
  // The coin law fixes the first axis and attracts everything to it.
  const DirectionSample s = stationaryDirection(coinLaw(), 1000, 10000, 4);
  for (double a : s.angles) EXPECT_TRUE(a < 1e-3 || a > kPi - 1e-3);
}

TEST(Furstenberg, DeterministicLaw) {
  DirectionSample nu;
  nu.angles.assign(100, 0.0);
  const Estimate e = furstenbergFormula(deterministicE(), nu);
  EXPECT_NEAR(e.value, 1.0, 1e-15);
  const DirectionSample sampled = stationaryDirection(deterministicE(), 100, 1000, 1);
  EXPECT_NEAR(furstenbergFormula(deterministicE(), sampled).value, 1.0, 1e-12);
}

TEST(Furstenberg, AgreesWithDirectEstimate) {
  FurstenbergReport coin = furstenbergCheck(coinLaw(), 10000, 200, 1000, 200000, 11);
  EXPECT_TRUE(coin.formulaPassed) << coin.direct.value << " vs " << coin.formula.value;
  EXPECT_NEAR(coin.formula.value, std::log(2.0) / 2, 1e-9);
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const FurstenbergReport rep = furstenbergCheck(randomMatrixLaw(2 + s % 3, s), 10000, 200, 1000, 200000, s);
    EXPECT_TRUE(rep.formulaPassed) << s << ": " << rep.directVsFormulaZ;
    EXPECT_FALSE(rep.nonProximalWarning);
  }
}

TEST(Furstenberg, HorofunctionForm) {
  EXPECT_EQ(boundaryHorofunctionValue(Matrix2{}, 0.6, 0.8), 0.0);
  EXPECT_NEAR(boundaryHorofunctionValue(deterministicE().matrix(0), 1, 0), -std::numbers::sqrt2, 1e-15);
  EXPECT_THROW(boundaryHorofunctionValue(Matrix2{}, 1, 1), InvalidArgument);
  const MatrixLaw law = randomMatrixLaw(3, 6);
  const DirectionSample nu = stationaryDirection(law, 500, 20000, 6);
  double minusXi = 0;
  for (double th : nu.angles)
    for (const auto& at : law.atoms()) minusXi -= at.p * boundaryHorofunctionValue(at.m, std::cos(th), std::sin(th));
  minusXi /= nu.angles.size();
  EXPECT_NEAR(minusXi, std::numbers::sqrt2 * furstenbergFormula(law, nu).value, 1e-12);
}

TEST(SymmetricSpace, DistanceConversion) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix2 m = randomMatrixLaw(1, s).matrix(0);
    EXPECT_NEAR(symmetricSpaceDistance(toMobius(m)), std::numbers::sqrt2 * std::log(m.norm()), 1e-12);
  }
}

TEST(SymmetricSpace, DriftIsSqrtTwoChi) {
  for (std::uint64_t s : {21, 22}) {
    const FurstenbergReport rep = furstenbergCheck(randomMatrixLaw(3, s), 10000, 200, 1000, 100000, s);
    EXPECT_TRUE(rep.driftPassed) << rep.symmetricDrift.value << " vs " << std::numbers::sqrt2 * rep.direct.value;
  }
  const FurstenbergReport coin = furstenbergCheck(coinLaw(), 10000, 200, 1000, 100000, 5);
  EXPECT_TRUE(coin.driftPassed);
}

TEST(SymmetricSpace, DeterminantConservedOverMillionSteps) {
  const SymmetricDriftReport rep = symmetricSpaceDrift(coinLaw(), 1000000, 2, 1);
  EXPECT_TRUE(rep.finite);
  EXPECT_LE(rep.maxDeterminantDrift, 1e-9);
  EXPECT_NEAR(rep.drift.value, std::numbers::sqrt2 * std::log(2.0) / 2, 5e-3);
}
