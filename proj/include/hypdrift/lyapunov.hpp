#pragma once

// Products of i.i.d. 2x2 unit-determinant matrices: the top Lyapunov exponent
// from norms, the stationary direction chain, the Furstenberg formula, and the
// drift of the product in the symmetric space SL(2,R)/SO(2).

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "drift.hpp"
#include "errors.hpp"
#include "hyperbolic.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace hypdrift {

struct Matrix2 {
  double a = 1, b = 0, c = 0, d = 1;

  double det() const { return a * d - b * c; }

  /// Largest singular value.
  double norm() const {
    const double e = 0.5 * (a + d), f = 0.5 * (a - d), g = 0.5 * (c + b), h = 0.5 * (c - b);
    return std::hypot(e, h) + std::hypot(f, g);
  }

  std::array<double, 2> apply(double x, double y) const { return {a * x + b * y, c * x + d * y}; }
};

inline Matrix2 operator*(const Matrix2& m, const Matrix2& n) {
  return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d, m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
}

inline Matrix2 diagonalMatrix(double x, double y) { return {x, 0, 0, y}; }

inline Matrix2 rotationMatrix(double angle) {
  return {std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle)};
}

struct MatrixAtom {
  Matrix2 m;
  double p = 0.0;
};

/// Finitely supported law on SL(2,R).
class MatrixLaw {
 public:
  explicit MatrixLaw(std::vector<MatrixAtom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw InvalidArgument("MatrixLaw: no atoms");
    double total = 0.0;
    for (const auto& at : atoms_) {
      if (!(at.p > 0.0)) throw InvalidArgument("MatrixLaw: probabilities must be positive");
      if (!(std::abs(at.m.det() - 1.0) <= 1e-12))
        throw InvalidArgument("MatrixLaw: determinant must be 1 within 1e-12");
      total += at.p;
    }
    if (!(std::abs(total - 1.0) <= 1e-12)) throw InvalidArgument("MatrixLaw: probabilities must sum to 1");
    double acc = 0.0;
    for (const auto& at : atoms_) cumulative_.push_back(acc += at.p);
    cumulative_.back() = 1.0;
  }

  /// One atom per line: "p a b c d". Blank lines and '#' comments are skipped.
  static MatrixLaw load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read " + path);
    std::vector<MatrixAtom> atoms;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
      ++lineNo;
      std::istringstream ss(line);
      std::string first;
      if (!(ss >> first) || first[0] == '#') continue;
      MatrixAtom at;
      std::string extra;
      try {
        at.p = std::stod(first);
      } catch (const std::logic_error&) {
        throw ParseError(path + ":" + std::to_string(lineNo) + ": malformed probability");
      }
      if (!(ss >> at.m.a >> at.m.b >> at.m.c >> at.m.d) || (ss >> extra))
        throw ParseError(path + ":" + std::to_string(lineNo) + ": expected 'p a b c d'");
      atoms.push_back(at);
    }
    try {
      return MatrixLaw(std::move(atoms));
    } catch (const InvalidArgument& e) {
      throw ParseError(path + ": " + e.what());
    }
  }

  const std::vector<MatrixAtom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  const Matrix2& matrix(std::size_t i) const { return atoms_[i].m; }

  std::size_t sample(Rng& rng) const {
    if (atoms_.size() == 1) return 0;
    const double u = uniform01(rng);
    return static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                    cumulative_.begin());
  }

 private:
  std::vector<MatrixAtom> atoms_;
  std::vector<double> cumulative_;
};

/// Fair coin on {diag(2, 1/2), [[1, 1], [0, 1]]}.
inline MatrixLaw coinLaw() {
  return MatrixLaw({{diagonalMatrix(2.0, 0.5), 0.5}, {Matrix2{1, 1, 0, 1}, 0.5}});
}

/// k atoms R(θ) diag(s, 1/s) R(φ) with s uniform in [1.5, 3], uniform angles
/// and random probabilities. Such laws are proximal with probability one.
inline MatrixLaw randomMatrixLaw(std::size_t k, std::uint64_t seed) {
  detail::require(k >= 1, "randomMatrixLaw: need at least one atom");
  Rng rng = makeStream(seed, 0, StreamRole::environment);
  std::vector<MatrixAtom> atoms;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double sv = 1.5 + 1.5 * uniform01(rng);
    const Matrix2 m = rotationMatrix(kTwoPi * uniform01(rng)) * diagonalMatrix(sv, 1.0 / sv) *
                      rotationMatrix(kTwoPi * uniform01(rng));
    const double p = 0.2 + uniform01(rng);
    atoms.push_back({m, p});
    total += p;
  }
  for (auto& at : atoms) at.p /= total;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < atoms.size(); ++i) sum += atoms[i].p;
  atoms.back().p = 1.0 - sum;
  return MatrixLaw(std::move(atoms));
}

/// Running product A_n ... A_1 kept as m * 2^exponent with max |entry| in
/// [1/2, 1). Power-of-two rescaling is exact, so before overflow the value is
/// the naive product.
class RenormalizedProduct {
 public:
  void leftMultiply(const Matrix2& a) {
    m_ = a * m_;
    const double big = std::max({std::abs(m_.a), std::abs(m_.b), std::abs(m_.c), std::abs(m_.d)});
    if (!(big > 0.0) || !std::isfinite(big)) throw NumericalBreakdown("matrix product degenerated");
    int e = 0;
    std::frexp(big, &e);
    m_ = {std::ldexp(m_.a, -e), std::ldexp(m_.b, -e), std::ldexp(m_.c, -e), std::ldexp(m_.d, -e)};
    exponent_ += e;
  }

  double logNorm() const { return std::log(m_.norm()) + static_cast<double>(exponent_) * std::numbers::ln2; }
  const Matrix2& mantissa() const { return m_; }
  long exponent() const { return exponent_; }

 private:
  Matrix2 m_;
  long exponent_ = 0;
};

/// log ||A_{i_n} ... A_{i_1}|| for a given atom sequence.
inline double productLogNorm(const MatrixLaw& law, std::span<const std::size_t> sequence) {
  RenormalizedProduct p;
  for (std::size_t i : sequence) p.leftMultiply(law.matrix(i));
  return p.logNorm();
}

struct LyapunovEstimate {
  Estimate chi;
  std::vector<double> perTrial;  // (1/n) log ||A_n ... A_1||
};

inline constexpr std::size_t kMinLyapunovSteps = 1000;

/// Mean over trials of (1/n) log ||A_n ... A_1||.
inline LyapunovEstimate lyapDirect(const MatrixLaw& law, std::size_t nSteps, std::size_t trials,
                                   std::uint64_t seed, std::size_t workers = 1) {
  detail::require(nSteps >= kMinLyapunovSteps, "lyapDirect: nSteps must be >= 1000");
  detail::require(trials >= 2, "lyapDirect: need at least 2 trials");
  LyapunovEstimate out;
  out.perTrial = runTrials(trials, workers, [&](std::size_t t) {
    Rng rng = makeStream(seed, t, StreamRole::forward);
    RenormalizedProduct p;
    for (std::size_t n = 0; n < nSteps; ++n) p.leftMultiply(law.matrix(law.sample(rng)));
    return p.logNorm() / static_cast<double>(nSteps);
  });
  out.chi = meanEstimate(out.perTrial);
  return out;
}

// ---------------------------------------------------------------------------
// Stationary directions

struct DirectionSample {
  std::vector<double> angles;  // projective angles in [0, π)
  bool nonProximalWarning = false;
  std::string warning;
  double uniformTotalVariation = 0.0;  // binned distance to the uniform law
  Estimate chainChi;                   // mean of log |A v| along the chains
  std::size_t chains = 1;              // angles are stored chain after chain
};

inline constexpr std::size_t kDirectionBins = 32;

namespace detail {

inline double projectiveAngle(double x, double y) {
  double a = std::atan2(y, x);
  if (a < 0) a += kPi;
  if (a >= kPi) a -= kPi;
  return std::clamp(a, 0.0, std::nextafter(kPi, 0.0));
}

inline std::vector<double> binnedAngles(std::span<const double> angles, std::size_t bins) {
  std::vector<double> h(bins, 0.0);
  for (double a : angles) h[std::min(bins - 1, static_cast<std::size_t>(a / kPi * static_cast<double>(bins)))] += 1.0;
  for (double& x : h) x /= static_cast<double>(angles.size());
  return h;
}

inline double totalVariation(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace detail

inline constexpr std::size_t kDirectionChains = 20;

/// Runs `chains` independent copies of v <- A v / |A v| from random starts,
/// discards burnIn steps of each and keeps samples/chains angles per chain,
/// stored chain after chain. Flags the compact (non-proximal) case when the
/// angles look uniform and the exponent along the chains is indistinguishable
/// from 0.
inline DirectionSample stationaryDirection(const MatrixLaw& law, std::size_t burnIn, std::size_t samples,
                                           std::uint64_t seed, std::size_t chains = kDirectionChains) {
  detail::require(chains >= 2, "stationaryDirection: need at least 2 chains");
  detail::require(samples >= chains, "stationaryDirection: need at least one sample per chain");
  const std::size_t perChain = samples / chains;
  DirectionSample out;
  out.chains = chains;
  out.angles.reserve(perChain * chains);
  RunningStats growth;
  for (std::size_t ch = 0; ch < chains; ++ch) {
    Rng rng = makeStream(seed, ch, StreamRole::directions);
    const double start = kPi * uniform01(rng);
    double x = std::cos(start), y = std::sin(start);
    double logSum = 0.0;
    for (std::size_t n = 0; n < burnIn + perChain; ++n) {
      const auto v = law.matrix(law.sample(rng)).apply(x, y);
      const double len = std::hypot(v[0], v[1]);
      x = v[0] / len;
      y = v[1] / len;
      if (n >= burnIn) {
        out.angles.push_back(detail::projectiveAngle(x, y));
        logSum += std::log(len);
      }
    }
    growth.add(logSum / static_cast<double>(perChain));
  }
  out.chainChi = growth.estimate();
  const std::vector<double> uniform(kDirectionBins, 1.0 / kDirectionBins);
  out.uniformTotalVariation = detail::totalVariation(detail::binnedAngles(out.angles, kDirectionBins), uniform);
  if (out.uniformTotalVariation <= 0.05 && std::abs(out.chainChi.value) <= 2.0 * out.chainChi.stdError + 1e-9) {
    out.nonProximalWarning = true;
    out.warning = "directions look uniform and the exponent is 0: the law may lie in a compact subgroup";
  }
  return out;
}

/// Total variation between binned angle histograms for burn-in b and 2b.
inline double burnInDoublingAudit(const MatrixLaw& law, std::size_t burnIn, std::size_t samples,
                                  std::uint64_t seed, std::size_t bins = kDirectionBins) {
  const DirectionSample a = stationaryDirection(law, burnIn, samples, seed);
  const DirectionSample b = stationaryDirection(law, 2 * burnIn, samples, seed);
  return detail::totalVariation(detail::binnedAngles(a.angles, bins), detail::binnedAngles(b.angles, bins));
}

/// χ = ∫∫ log |A v| dν(v) dμ(A), with the μ-integral exact and ν empirical.
/// Standard error across the independent chains of the sample.
inline Estimate furstenbergFormula(const MatrixLaw& law, const DirectionSample& directions) {
  detail::require(!directions.angles.empty(), "furstenbergFormula: no directions");
  const std::size_t chains = std::max<std::size_t>(1, directions.chains);
  const std::size_t perChain = directions.angles.size() / chains;
  RunningStats all, byChain;
  double chainSum = 0.0;
  for (std::size_t i = 0; i < directions.angles.size(); ++i) {
    const double theta = directions.angles[i];
    const double x = std::cos(theta), y = std::sin(theta);
    double g = 0.0;
    for (const auto& at : law.atoms()) {
      const auto v = at.m.apply(x, y);
      g += at.p * std::log(std::hypot(v[0], v[1]));
    }
    all.add(g);
    chainSum += g;
    if (chains > 1 && (i + 1) % perChain == 0) {
      byChain.add(chainSum / static_cast<double>(perChain));
      chainSum = 0.0;
    }
  }
  Estimate e = all.estimate();
  if (chains > 1) e.stdError = byChain.stdError();
  return e;
}

/// ξ([A]) = -√2 log |A v| for a unit vector v.
inline double boundaryHorofunctionValue(const Matrix2& a, double vx, double vy) {
  if (!(std::abs(std::hypot(vx, vy) - 1.0) <= 1e-12))
    throw InvalidArgument("boundaryHorofunctionValue: v must be a unit vector");
  const auto w = a.apply(vx, vy);
  return -std::numbers::sqrt2 * std::log(std::hypot(w[0], w[1]));
}

// ---------------------------------------------------------------------------
// Symmetric space

/// d([Id], [A]) = √2 log σ_1(A) in the symmetric-space metric. The hyperbolic
/// plane distance of the same element is 2 log σ_1(A), so the two differ by √2.
inline double symmetricSpaceDistance(const Mobius& m) { return distOrigin(m) / std::numbers::sqrt2; }

inline Mobius toMobius(const Matrix2& m) { return Mobius::fromMatrix(m.a, m.b, m.c, m.d); }

struct SymmetricDriftReport {
  Estimate drift;                  // (1/n) d([Id], [A_n ... A_1])
  double maxDeterminantDrift = 0;  // max |det - 1| along the running products
  bool finite = true;
};

/// Drift of the running product in the symmetric space, composed in Cartan
/// form. Uses a stream independent of lyapDirect.
inline SymmetricDriftReport symmetricSpaceDrift(const MatrixLaw& law, std::size_t nSteps, std::size_t trials,
                                                std::uint64_t seed, std::size_t workers = 1) {
  detail::require(nSteps >= 1 && trials >= 2, "symmetricSpaceDrift: need nSteps >= 1 and trials >= 2");
  std::vector<Mobius> atoms;
  for (const auto& at : law.atoms()) atoms.push_back(toMobius(at.m));
  struct Trial {
    double drift;
    double detDrift;
    bool finite;
  };
  const auto res = runTrials(trials, workers, [&](std::size_t t) {
    Rng rng = makeStream(seed, t, StreamRole::backward);
    Mobius x;
    double detDrift = 0.0;
    for (std::size_t n = 0; n < nSteps; ++n) {
      x = compose(atoms[law.sample(rng)], x);
      detDrift = std::max(detDrift, std::abs(x.determinant() - 1.0));
    }
    return Trial{symmetricSpaceDistance(x) / static_cast<double>(nSteps), detDrift, std::isfinite(x.stretch())};
  });
  SymmetricDriftReport rep;
  RunningStats s;
  for (const auto& r : res) {
    s.add(r.drift);
    rep.maxDeterminantDrift = std::max(rep.maxDeterminantDrift, r.detDrift);
    rep.finite = rep.finite && r.finite;
  }
  rep.drift = s.estimate();
  return rep;
}

// ---------------------------------------------------------------------------
// Combined check

// Absolute slack for comparisons whose standard errors vanish (deterministic
// or compact laws), where both sides agree only to rounding.
inline constexpr double kRoundingFloor = 1e-12;

struct FurstenbergReport {
  Estimate direct;
  Estimate formula;
  Estimate symmetricDrift;
  double directVsFormulaZ = 0.0;  // |direct - formula| / joint stderr
  bool formulaPassed = false;
  bool driftPassed = false;  // √2 χ against the symmetric-space drift
  bool nonProximalWarning = false;
  double maxDeterminantDrift = 0.0;
};

inline FurstenbergReport furstenbergCheck(const MatrixLaw& law, std::size_t nSteps, std::size_t trials,
                                          std::size_t burnIn, std::size_t samples, std::uint64_t seed,
                                          std::size_t workers = 1) {
  FurstenbergReport rep;
  rep.direct = lyapDirect(law, nSteps, trials, seed, workers).chi;
  const DirectionSample nu = stationaryDirection(law, burnIn, samples, seed);
  rep.nonProximalWarning = nu.nonProximalWarning;
  rep.formula = furstenbergFormula(law, nu);
  const double joint = jointStdError(rep.direct.stdError, rep.formula.stdError);
  const double gap = std::abs(rep.direct.value - rep.formula.value);
  rep.directVsFormulaZ = joint > 0 ? gap / joint : (gap > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  rep.formulaPassed = gap <= 3.0 * joint + kRoundingFloor;
  const SymmetricDriftReport sym = symmetricSpaceDrift(law, nSteps, trials, seed, workers);
  rep.symmetricDrift = sym.drift;
  rep.maxDeterminantDrift = sym.maxDeterminantDrift;
  rep.driftPassed = std::abs(std::numbers::sqrt2 * rep.direct.value - sym.drift.value) <=
                    3.0 * jointStdError(std::numbers::sqrt2 * rep.direct.stdError, sym.drift.stdError) +
                        kRoundingFloor;
  return rep;
}

}  // namespace hypdrift
