#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "drift.hpp"
#include "errors.hpp"
#include "lyapunov.hpp"
#include "parallel.hpp"
#include "percolation.hpp"
#include "report.hpp"
#include "tiling.hpp"
#include "tree.hpp"

namespace hypdrift {

enum ExitStatus : int { kExitOk = 0, kExitBoundFailure = 1, kExitConfigError = 2, kExitMonteCarloFailure = 3 };

struct ConfigError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

/// Flat key=value configuration. `config=path` pulls in a file in the same
/// grammar; keys given on the command line override the file.
class Config {
 public:
  static Config parse(const std::vector<std::string>& args) {
    Config cfg;
    std::map<std::string, std::string> cli;
    for (const auto& a : args) {
      const auto [k, v] = split(a, "argument");
      if (cli.count(k)) throw ConfigError("key '" + k + "' given twice");
      cli[k] = v;
    }
    if (auto it = cli.find("config"); it != cli.end()) {
      cfg.loadFile(it->second);
      cli.erase(it);
    }
    for (auto& [k, v] : cli) cfg.values_[k] = v;
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string text(const std::string& key, std::optional<std::string> def = {}) {
    used_.insert(key);
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    if (!def) throw ConfigError("missing required key '" + key + "'");
    return *def;
  }

  double real(const std::string& key, std::optional<double> def = {}) {
    if (!has(key) && def) return use(key), *def;
    return toReal(key, text(key));
  }

  long integer(const std::string& key, std::optional<long> def = {}) {
    if (!has(key) && def) return use(key), *def;
    const std::string s = text(key);
    long x = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + "=" + s + ": expected an integer");
    return x;
  }

  std::size_t count(const std::string& key, std::optional<std::size_t> def = {}) {
    const long x = integer(key, def ? std::optional<long>(static_cast<long>(*def)) : std::nullopt);
    if (x < 0) throw ConfigError(key + " must be nonnegative");
    return static_cast<std::size_t>(x);
  }

  std::uint64_t seed(std::uint64_t def = 1) {
    seed_ = def;
    if (!has("seed")) return use("seed"), def;
    const std::string s = text("seed");
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("seed=" + s + ": expected an unsigned integer");
    return *(seed_ = x);
  }

  /// The seed read by seed(), if any.
  std::optional<std::uint64_t> seedUsed() const { return seed_; }

  /// Polygon size; "inf" selects the ideal polygon.
  int polygon(const std::string& key) {
    const std::string s = text(key);
    if (s == "inf" || s == "infinity") return kIdealPolygon;
    const long x = integer(key);
    if (x < 3 || x > 1000000) throw ConfigError(key + " must lie in [3, 10^6] or be inf");
    return static_cast<int>(x);
  }

  std::vector<double> reals(const std::string& key, std::vector<double> def) {
    if (!has(key)) return use(key), def;
    std::vector<double> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(toReal(key, item));
    if (out.empty()) throw ConfigError(key + " is empty");
    return out;
  }

  /// Rejects keys nobody asked for.
  void finish() const {
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) throw ConfigError("unknown key '" + k + "'");
  }

  /// Every key except the worker count and output prefix, which must not
  /// influence results.
  Json echo() const {
    Json j = Json::object();
    for (const auto& [k, v] : values_)
      if (k != "workers" && k != "out") j[k] = v;
    return j;
  }

 private:
  static std::pair<std::string, std::string> split(const std::string& a, const std::string& where) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(where + " '" + a + "' is not key=value");
    return {trim(a.substr(0, eq)), trim(a.substr(eq + 1))};
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  static double toReal(const std::string& key, const std::string& s) {
    double x = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(x))
      throw ConfigError(key + "=" + s + ": expected a finite number");
    return x;
  }

  void use(const std::string& key) { used_.insert(key); }

  void loadFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
      ++lineNo;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      if (trim(line).empty()) continue;
      const auto [k, v] = split(trim(line), path + ":" + std::to_string(lineNo));
      if (k == "config") throw ConfigError(path + ": nested config files are not supported");
      values_[k] = v;
    }
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
  std::optional<std::uint64_t> seed_;
};

struct ExperimentResult {
  Json results = Json::object();
  std::vector<Check> checks;
  std::vector<std::string> failures;  // Monte Carlo failures, one entry per affected row
  CheckpointTable table;

  bool boundsPassed() const {
    for (const auto& c : checks)
      if (!c.passed()) return false;
    return true;
  }

  int status() const {
    if (!boundsPassed()) return kExitBoundFailure;
    return failures.empty() ? kExitOk : kExitMonteCarloFailure;
  }
};

namespace detail {

inline constexpr double kSigmas = 3.0;

inline Json toJson(const StationarityReport& s) {
  return {{"windowMeans", s.windowMeans}, {"windowStdErrors", s.windowStdErrors},
          {"maxZ", s.maxZ}, {"threshold", s.threshold}, {"passed", s.passed()}};
}

inline Json toJson(const EscapeReport& e) {
  return {{"radii", e.radii}, {"firstHalfFraction", e.firstHalfFraction},
          {"lastHalfFraction", e.lastHalfFraction}, {"referenceRadius", e.referenceRadius},
          {"escapes", e.escapes}};
}

inline Json toJson(const VertexAudit& a) {
  return {{"lookups", a.lookups},     {"matches", a.matches},
          {"created", a.created},     {"evicted", a.evicted},
          {"reanchors", a.reanchors}, {"reverseEdgeFailures", a.reverseEdgeFailures},
          {"maxMatchedDistance", a.maxMatchedDistance},
          {"minDistinctDistance", a.minDistinctDistance}};
}

inline Json toJson(const ConductanceInterval& c) {
  return {{"lower", c.lower}, {"upper", c.upper}, {"depth", c.depth}, {"depthCapReached", c.depthCapReached}};
}

inline std::string shortNumber(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

inline TilingSpec tilingFrom(Config& cfg) {
  const int p = cfg.polygon("P");
  const long q = cfg.integer("Q");
  if (q < 3 || q > 1000000) throw ConfigError("Q must lie in [3, 10^6]");
  if (!isHyperbolicTiling(p, static_cast<int>(q))) throw ConfigError("need 1/P + 1/Q < 1/2");
  return makeTilingSpec(p, static_cast<int>(q));
}

inline void addTrajectory(CheckpointTable& t, std::size_t trial, const WalkTrajectory& w) {
  for (std::size_t i = 0; i < w.distances.size(); ++i) t.add(trial, w.checkpointSteps[i], w.distances[i]);
}

inline void requireAtLeast(std::size_t x, std::size_t lo, const std::string& key) {
  if (x < lo) throw ConfigError(key + " must be >= " + std::to_string(lo));
}

inline Json speedJson(const DriftReport& r) {
  Json j = {{"speed", r.speedEstimate}, {"stdError", r.stdError}, {"samples", r.sampleCount},
            {"retainedFraction", r.retainedFraction}};
  if (r.lowerBound) j["lowerBound"] = *r.lowerBound;
  if (r.upperBound) j["upperBound"] = *r.upperBound;
  return j;
}

}  // namespace detail

inline ExperimentResult runTilingSpeed(Config& cfg, std::size_t workers) {
  const TilingSpec spec = detail::tilingFrom(cfg);
  const std::size_t n = cfg.count("n", 10000), trials = cfg.count("trials", 100);
  const std::size_t stride = cfg.count("stride", kDefaultStride);
  const std::uint64_t seed = cfg.seed();
  cfg.finish();
  detail::requireAtLeast(n, 1, "n");
  detail::requireAtLeast(trials, 2, "trials");
  detail::requireAtLeast(stride, 1, "stride");
  ExperimentResult out;
  const TrialTrajectories tt = estimateSpeedDetailed(spec, n, trials, seed, workers, stride);
  const double lower = speedLowerBound(spec, 1.0);
  out.results = detail::speedJson(tt.report);
  out.results["tiling"] = tilingName(spec);
  out.results["sideLength"] = spec.r;
  out.results["lowerBound"] = lower;
  out.checks.push_back({"speed <= r", tt.report.speedEstimate, spec.r, 1e-12, "<="});
  out.checks.push_back({"speed >= lower bound (p = 1)", tt.report.speedEstimate, lower,
                        detail::kSigmas * tt.report.stdError, ">="});
  for (std::size_t t = 0; t < trials; ++t) detail::addTrajectory(out.table, t, tt.trajectories[t]);
  return out;
}

inline ExperimentResult runTilingBounds(Config& cfg, std::size_t) {
  const TilingSpec spec = detail::tilingFrom(cfg);
  const std::vector<double> ps = cfg.reals("p", {1.0});
  const double tol = cfg.real("tol", 1e-6);
  const double sideSlack = cfg.real("side_slack", 3.0);
  const double ratioMax = cfg.real("fsum_ratio_max", 2.0);
  cfg.finish();
  for (double p : ps)
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("p must lie in (0, 1]");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  ExperimentResult out;
  const FSumMaximum fmax = maxFSumDetailed(spec, tol);
  const double twoLogQ = 2.0 * std::log(static_cast<double>(spec.Q));
  const double ratio = fmax.value / (spec.Q * std::log(std::log(static_cast<double>(spec.Q))));
  out.results = {{"tiling", tilingName(spec)},       {"sideLength", spec.r},
                 {"coneAngle", coneAngle(spec.r)},   {"twoLogQ", twoLogQ},
                 {"sideMinusTwoLogQ", spec.r - twoLogQ}, {"maxFSum", fmax.value},
                 {"maxFSumArgmax", fmax.argmax},     {"maxFSumOverQLogLogQ", ratio}};
  Json rows = Json::array();
  for (double p : ps) {
    const double lb = speedLowerBound(spec, p, fmax);
    rows.push_back({{"p", p}, {"lowerBound", lb}});
    out.checks.push_back({"lower bound <= r at p = " + detail::shortNumber(p), lb, spec.r, 0.0, "<="});
  }
  out.results["lowerBounds"] = rows;
  out.checks.push_back({"|r - 2 log Q| bounded", spec.r, twoLogQ, sideSlack, "|-|<="});
  // The ratio is only meaningful once log log Q is of order one.
  if (spec.Q >= 16) out.checks.push_back({"maxFSum / (Q log log Q) bounded", ratio, ratioMax, 0.0, "<="});
  return out;
}

inline ExperimentResult runPercSpeed(Config& cfg, std::size_t workers) {
  const TilingSpec spec = detail::tilingFrom(cfg);
  const std::vector<double> ps = cfg.reals("p", {0.8, 0.9, 1.0});
  const std::size_t n = cfg.count("n", 10000), trials = cfg.count("trials", 200);
  const std::size_t radius = cfg.count("radius", kDefaultSurvivalRadius);
  const std::size_t stride = cfg.count("stride", kDefaultStride);
  const std::uint64_t seed = cfg.seed();
  cfg.finish();
  for (double p : ps)
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("p must lie in (0, 1]");
  detail::requireAtLeast(n, 1, "n");
  detail::requireAtLeast(trials, 2, "trials");
  detail::requireAtLeast(radius, 1, "radius");
  detail::requireAtLeast(stride, 1, "stride");
  ExperimentResult out;
  const FSumMaximum fmax = maxFSumDetailed(spec);
  Json rows = Json::array();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double p = ps[i];
    const double lb = speedLowerBound(spec, p, fmax);
    Json row = {{"p", p}, {"lowerBound", lb}, {"trialOffset", i * trials}};
    try {
      const PercolationSpeedReport rep = estimateSpeedPDetailed(spec, p, n, trials, radius, seed, workers, stride);
      row["estimate"] = detail::speedJson(rep.report);
      row["audit"] = detail::toJson(rep.audit);
      out.checks.push_back({"speed >= lower bound at p = " + detail::shortNumber(p), rep.report.speedEstimate, lb,
                            detail::kSigmas * rep.report.stdError, ">="});
      for (std::size_t t = 0; t < trials; ++t)
        if (rep.retained[t]) detail::addTrajectory(out.table, i * trials + t, rep.walks[t].trajectory);
    } catch (const InsufficientSurvivors& e) {
      row["error"] = e.what();
      out.failures.push_back(e.what());
    }
    rows.push_back(row);
  }
  out.results = {{"tiling", tilingName(spec)}, {"sideLength", spec.r}, {"maxFSum", fmax.value},
                 {"survivalRadius", radius}, {"rows", rows}};
  return out;
}

inline ExperimentResult runDimBound(Config& cfg, std::size_t workers) {
  const TilingSpec spec = detail::tilingFrom(cfg);
  const std::size_t n = cfg.count("n", 10000), trials = cfg.count("trials", 100);
  const std::size_t stride = cfg.count("stride", kDefaultStride);
  const double threshold = cfg.real("threshold", 0.62);
  const std::uint64_t seed = cfg.seed();
  cfg.finish();
  detail::requireAtLeast(n, 1, "n");
  detail::requireAtLeast(trials, 2, "trials");
  detail::requireAtLeast(stride, 1, "stride");
  ExperimentResult out;
  const TrialTrajectories tt = estimateSpeedDetailed(spec, n, trials, seed, workers, stride);
  const double dim = dimUpperBound(spec, tt.report.speedEstimate);
  out.results = detail::speedJson(tt.report);
  out.results["tiling"] = tilingName(spec);
  out.results["sideLength"] = spec.r;
  out.results["dimUpperBound"] = dim;
  out.results["dimUpperBoundAtSideLength"] = dimUpperBound(spec, spec.r);
  out.checks.push_back({"log Q / speed <= threshold", dim, threshold, 0.0, "<="});
  for (std::size_t t = 0; t < trials; ++t) detail::addTrajectory(out.table, t, tt.trajectories[t]);
  return out;
}

namespace detail {

inline WeightedTree treeFrom(Config& cfg) {
  if (cfg.has("tree")) {
    if (cfg.has("d")) throw ConfigError("give either d or tree, not both");
    return WeightedTree::loadFinite(cfg.text("tree"));
  }
  const long d = cfg.integer("d", 3);
  const double c = cfg.real("c", 1.0);
  if (d < 2 || d > 1000000) throw ConfigError("d must lie in [2, 10^6]");
  if (!(c > 0.0)) throw ConfigError("c must be positive");
  return WeightedTree::regular(static_cast<int>(d), c);
}

inline std::string treeLabel(const WeightedTree& t) {
  switch (t.kind()) {
    case TreeKind::regular: {
      std::ostringstream os;
      os << "T_" << t.degreeParameter() << " (c = " << t.edgeConductance() << ")";
      return os.str();
    }
    case TreeKind::canopy: {
      std::ostringstream os;
      os << "canopy (lambda = " << t.lambda() << ")";
      return os.str();
    }
    case TreeKind::finite: return "finite tree, " + std::to_string(t.finiteSize()) + " vertices";
  }
  return "";
}

inline void addTreeWalk(CheckpointTable& t, std::size_t trial, const TreeWalkTrajectory& w) {
  for (std::size_t i = 0; i < w.distances.size(); ++i) {
    std::optional<long> level;
    if (!w.levels.empty()) level = w.levels[i];
    t.add(trial, w.checkpointSteps[i], w.distances[i], level);
  }
}

}  // namespace detail

inline ExperimentResult runTreeSpeed(Config& cfg, std::size_t workers) {
  const WeightedTree tree = detail::treeFrom(cfg);
  const std::size_t n = cfg.count("n", 10000), trials = cfg.count("trials", 50);
  const std::size_t stride = cfg.count("stride", 100);
  const double tol = cfg.real("tol", 1e-9);
  const std::uint64_t seed = cfg.seed();
  cfg.finish();
  detail::requireAtLeast(n, 1, "n");
  detail::requireAtLeast(trials, 2, "trials");
  detail::requireAtLeast(stride, 1, "stride");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  ExperimentResult out;
  const auto walks = runTrials(trials, workers, [&](std::size_t t) {
    TreeExplorer ex(tree);
    Rng rng = makeStream(seed, t, StreamRole::forward);
    return simulateTreeWalk(ex, n, rng, stride);
  });
  RunningStats s;
  for (std::size_t t = 0; t < trials; ++t) {
    s.add(static_cast<double>(walks[t].finalDistance) / static_cast<double>(n));
    detail::addTreeWalk(out.table, t, walks[t]);
  }
  out.results = {{"tree", detail::treeLabel(tree)}, {"speed", toJson(s.estimate())}};
  try {
    const EdgeSplit split = edgeSplit(tree, tree.root(), 0, tol);
    const SpeedInterval f = speedFormula(split);
    out.results["transient"] = true;
    out.results["A"] = detail::toJson(split.A);
    out.results["B"] = split.B;
    out.results["C"] = detail::toJson(split.C);
    out.results["formula"] = {{"lower", f.lower}, {"upper", f.upper}};
    const double mid = 0.5 * (f.lower + f.upper);
    out.checks.push_back({"simulated speed matches formula", s.mean(), mid,
                          detail::kSigmas * s.stdError() + 0.5 * f.width(), "|-|<="});
  } catch (const NotTransient&) {
    out.results["transient"] = false;
  }
  return out;
}

inline ExperimentResult runCanopy(Config& cfg, std::size_t workers) {
  const double lambda = cfg.real("lambda", 1.5);
  const std::size_t n = cfg.count("n", 100000), trials = cfg.count("trials", 10);
  const std::size_t stride = cfg.count("stride", 1000);
  const std::size_t xiN = cfg.count("xi_n", 10000), xiTrials = cfg.count("xi_trials", 200);
  const double speedMax = cfg.real("speed_max", 0.02);
  const std::uint64_t seed = cfg.seed();
  cfg.finish();
  if (!(lambda > 1.0 && lambda < 2.0)) throw ConfigError("lambda must lie in (1, 2)");
  detail::requireAtLeast(n, 1, "n");
  detail::requireAtLeast(trials, 1, "trials");
  detail::requireAtLeast(stride, 1, "stride");
  detail::requireAtLeast(xiN, 2, "xi_n");
  detail::requireAtLeast(xiTrials, 2, "xi_trials");
  const WeightedTree tree = WeightedTree::canopy(lambda);
  ExperimentResult out;
  const auto walks = runTrials(trials, workers, [&](std::size_t t) {
    TreeExplorer ex(tree);
    Rng rng = makeStream(seed, t, StreamRole::forward);
    return simulateTreeWalk(ex, n, rng, stride);
  });
  RunningStats speed;
  std::uint64_t moves = 0, ups = 0;
  std::vector<double> occupation;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto& w = walks[t];
    speed.add(static_cast<double>(w.finalDistance) / static_cast<double>(n));
    moves += w.movesFromUpperLevels;
    ups += w.upMovesFromUpperLevels;
    if (occupation.size() < w.levelOccupation.size()) occupation.resize(w.levelOccupation.size());
    for (std::size_t k = 0; k < w.levelOccupation.size(); ++k) occupation[k] += static_cast<double>(w.levelOccupation[k]);
    detail::addTreeWalk(out.table, t, w);
  }
  const double a = canopyUpProbability(lambda);
  const double upFreq = moves ? static_cast<double>(ups) / static_cast<double>(moves) : 0.0;
  const double upErr = moves ? std::sqrt(a * (1 - a) / static_cast<double>(moves)) : 0.0;
  const CanopyLevels levels = canopyStationaryLevels(lambda);
  double total = 0;
  for (double x : occupation) total += x;
  double tv = 0;
  for (std::size_t k = 0; k < std::max(occupation.size(), levels.p.size()); ++k) {
    const double emp = k < occupation.size() ? occupation[k] / total : 0.0;
    const double th = k < levels.p.size() ? levels.p[k] : 0.0;
    tv += 0.5 * std::abs(emp - th);
  }
  const SpeedInterval f = speedFormula(edgeSplit(tree, tree.root(), 0, 1e-9));
  const TreeTheoremAReport ta = treeTheoremACheck(tree, xiN, xiTrials, seed, workers);
  // With one trial the spread comes from batch means along the checkpoints.
  Estimate sp = speed.estimate();
  if (trials == 1 && n % stride == 0 && walks[0].distances.size() > 2 * kDefaultBatches)
    sp.stdError = kingmanSpeedFromDistances(walks[0].distances, stride).stdError;
  out.results = {{"lambda", lambda},
                 {"speed", toJson(sp)},
                 {"upFrequency", upFreq},
                 {"upFrequencyStdError", upErr},
                 {"upProbability", a},
                 {"levelOccupationTotalVariation", tv},
                 {"formula", {{"lower", f.lower}, {"upper", f.upper}}},
                 {"minusXi", toJson(ta.horofunction)},
                 {"theoremASpeed", toJson(ta.speed)},
                 {"stationarity", detail::toJson(ta.stationarity)}};
  out.checks.push_back({"speed <= speed_max", sp.value, speedMax, 0.0, "<="});
  out.checks.push_back({"up frequency = lambda/(2+lambda)", upFreq, a, detail::kSigmas * upErr, "|-|<="});
  out.checks.push_back({"speed formula = 0", f.upper, 0.0, 0.0, "|-|<="});
  out.checks.push_back({"mean of -xi(x_1) = 0", ta.horofunction.value, 0.0,
                        detail::kSigmas * ta.horofunction.stdError, "|-|<="});
  return out;
}

inline ExperimentResult runLyapunov(Config& cfg, std::size_t workers) {
  const std::string lawName = cfg.text("law", "coin");
  std::optional<MatrixLaw> law;
  if (lawName == "coin") {
    law = coinLaw();
  } else if (lawName == "random") {
    const std::size_t k = cfg.count("k", 3);
    const std::uint64_t lawSeed = static_cast<std::uint64_t>(cfg.integer("law_seed", 1));
    if (k < 1 || k > 1000) throw ConfigError("k must lie in [1, 1000]");
    law = randomMatrixLaw(k, lawSeed);
  } else {
    law = MatrixLaw::load(lawName);
  }
  const std::size_t n = cfg.count("n", 10000), trials = cfg.count("trials", 200);
  const std::size_t burnIn = cfg.count("burn_in", 1000), samples = cfg.count("samples", 200000);
  const std::size_t stride = cfg.count("stride", 100);
  const std::uint64_t seed = cfg.seed();
  cfg.finish();
  detail::requireAtLeast(n, kMinLyapunovSteps, "n");
  detail::requireAtLeast(trials, 2, "trials");
  detail::requireAtLeast(samples, 2 * kDirectionChains, "samples");
  detail::requireAtLeast(stride, 1, "stride");
  ExperimentResult out;
  const FurstenbergReport rep = furstenbergCheck(*law, n, trials, burnIn, samples, seed, workers);
  out.results = {{"atoms", law->size()},
                 {"direct", toJson(rep.direct)},
                 {"formula", toJson(rep.formula)},
                 {"symmetricDrift", toJson(rep.symmetricDrift)},
                 {"directVsFormulaZ", rep.directVsFormulaZ},
                 {"nonProximalWarning", rep.nonProximalWarning},
                 {"maxDeterminantDrift", rep.maxDeterminantDrift}};
  out.checks.push_back({"direct = Furstenberg formula", rep.direct.value, rep.formula.value,
                        detail::kSigmas * jointStdError(rep.direct.stdError, rep.formula.stdError) + kRoundingFloor,
                        "|-|<="});
  out.checks.push_back({"sqrt(2) chi = symmetric-space drift", std::numbers::sqrt2 * rep.direct.value,
                        rep.symmetricDrift.value,
                        detail::kSigmas * jointStdError(std::numbers::sqrt2 * rep.direct.stdError,
                                                        rep.symmetricDrift.stdError) +
                            kRoundingFloor,
                        "|-|<="});
  out.checks.push_back({"determinant drift", rep.maxDeterminantDrift, 1e-9, 0.0, "<="});
  // Same forward streams as the direct estimate; distance is √2 log ||A_n ... A_1||.
  const auto series = runTrials(trials, workers, [&](std::size_t t) {
    Rng rng = makeStream(seed, t, StreamRole::forward);
    RenormalizedProduct p;
    std::vector<double> d{0.0};
    for (std::size_t i = 1; i <= n; ++i) {
      p.leftMultiply(law->matrix(law->sample(rng)));
      if (i % stride == 0 || i == n) d.push_back(std::numbers::sqrt2 * p.logNorm());
    }
    return d;
  });
  for (std::size_t t = 0; t < trials; ++t) {
    out.table.add(t, 0, 0.0);
    std::size_t step = 0;
    for (std::size_t i = 1; i < series[t].size(); ++i) {
      step = std::min(step + stride, n);
      out.table.add(t, step, series[t][i]);
    }
  }
  return out;
}

inline ExperimentResult runTheoremA(Config& cfg, std::size_t workers) {
  const std::size_t n = cfg.count("n", 10000), trials = cfg.count("trials", 1000);
  const std::size_t csvTrials = cfg.count("csv_trials", 10);
  const std::size_t stride = cfg.count("stride", kDefaultStride);
  const std::uint64_t seed = cfg.seed();
  ExperimentResult out;
  auto record = [&](const std::string& what, const Estimate& speed, const Estimate& xi, double tol,
                    const StationarityReport& st) {
    out.results["model"] = what;
    out.results["speed"] = toJson(speed);
    out.results["minusXi"] = toJson(xi);
    out.results["tolerance"] = tol;
    out.results["stationarity"] = detail::toJson(st);
    out.checks.push_back({"speed = mean of -xi(x_1)", speed.value, xi.value, tol, "|-|<="});
    out.checks.push_back({"xi increments stationary", st.maxZ, st.threshold, 0.0, "<="});
  };
  if (cfg.has("P") || cfg.has("Q")) {
    const TilingSpec spec = detail::tilingFrom(cfg);
    cfg.finish();
    detail::requireAtLeast(n, 2, "n");
    detail::requireAtLeast(trials, 2, "trials");
    detail::requireAtLeast(stride, 1, "stride");
    const TheoremAReport rep = theoremACheck(spec, n, trials, seed, workers, stride);
    record(tilingName(spec), rep.speed, rep.horofunction, rep.tolerance, rep.stationarity);
    out.results["raoBlackwell"] = toJson(rep.raoBlackwell);
    out.results["escape"] = detail::toJson(rep.escape);
    for (std::size_t t = 0; t < std::min(csvTrials, trials); ++t) {
      const auto& tr = rep.trials[t];
      for (std::size_t i = 0; i < tr.forwardDistances.size(); ++i) {
        const std::size_t step = std::min(i * stride, n);
        out.table.add(t, step, tr.forwardDistances[i], std::nullopt, tr.forwardXi[i]);
      }
    }
    return out;
  }
  std::optional<WeightedTree> tree;
  if (cfg.has("lambda")) {
    const double lambda = cfg.real("lambda");
    if (!(lambda > 1.0 && lambda < 2.0)) throw ConfigError("lambda must lie in (1, 2)");
    tree = WeightedTree::canopy(lambda);
  } else {
    tree = detail::treeFrom(cfg);
  }
  cfg.finish();
  detail::requireAtLeast(n, 2, "n");
  detail::requireAtLeast(trials, 2, "trials");
  detail::requireAtLeast(stride, 1, "stride");
  if (tree->kind() == TreeKind::finite) throw ConfigError("theorem-a needs an infinite tree");
  const TreeTheoremAReport rep = treeTheoremACheck(*tree, n, trials, seed, workers);
  record(detail::treeLabel(*tree), rep.speed, rep.horofunction, rep.tolerance, rep.stationarity);
  out.results["unitIncrements"] = rep.unitIncrements;
  for (std::size_t t = 0; t < std::min(csvTrials, trials); ++t)
    detail::addTreeWalk(out.table, t, simulateTreeWalk(*tree, n, seed, t, stride));
  return out;
}

inline ExperimentResult runHyperbolicityCheck(Config& cfg, std::size_t) {
  const TilingSpec spec = detail::tilingFrom(cfg);
  const std::size_t samples = cfg.count("samples", 64);
  cfg.finish();
  detail::requireAtLeast(samples, 1, "samples");
  ExperimentResult out;
  const HyperbolicityReport rep = hyperbolicityScan(spec, samples);
  out.results = {{"tiling", tilingName(spec)},
                 {"maxXiSum", rep.maxXiSum},
                 {"argmax", rep.argmax},
                 {"maxGromovSum", rep.maxGromovSum},
                 {"halfDistanceSum", rep.halfDistanceSum},
                 {"gridPoints", rep.gridPoints},
                 {"equivalenceHolds", rep.equivalenceHolds}};
  out.checks.push_back({"max sum of horofunctions over F < 0", rep.maxXiSum, 0.0, 0.0, "<"});
  out.checks.push_back({"max Gromov sum < half distance sum", rep.maxGromovSum, rep.halfDistanceSum, 0.0, "<"});
  return out;
}

using Experiment = std::function<ExperimentResult(Config&, std::size_t)>;

inline const std::map<std::string, Experiment>& experiments() {
  static const std::map<std::string, Experiment> table = {
      {"tiling-speed", runTilingSpeed}, {"tiling-bounds", runTilingBounds},
      {"perc-speed", runPercSpeed},     {"dim-bound", runDimBound},
      {"tree-speed", runTreeSpeed},     {"canopy", runCanopy},
      {"lyapunov", runLyapunov},        {"theorem-a", runTheoremA},
      {"hyperbolicity-check", runHyperbolicityCheck}};
  return table;
}

struct RunOutcome {
  int status = kExitOk;
  Json report;
  CheckpointTable table;
  std::string outPrefix;
  std::string error;  // set when no report could be produced
};

/// Runs one subcommand. Reports never contain the worker count, so outputs
/// are identical for any `workers`.
inline RunOutcome runExperiment(const std::string& name, const std::vector<std::string>& args) {
  RunOutcome o;
  try {
    const auto it = experiments().find(name);
    if (it == experiments().end()) throw ConfigError("unknown subcommand '" + name + "'");
    Config cfg = Config::parse(args);
    const long w = cfg.integer("workers", static_cast<long>(defaultWorkers()));
    if (w < 1) throw ConfigError("workers must be >= 1");
    o.outPrefix = cfg.text("out", name);
    const Json echo = cfg.echo();
    ExperimentResult r = it->second(cfg, static_cast<std::size_t>(w));
    Json seed = nullptr;
    if (cfg.seedUsed()) seed = *cfg.seedUsed();
    o.status = r.status();
    Json checks = Json::array();
    for (const auto& c : r.checks) checks.push_back(toJson(c));
    o.report = {{"subcommand", name},
                {"config", echo},
                {"seed", seed},
                {"results", r.results},
                {"checks", checks},
                {"monteCarloFailures", r.failures},
                {"passed", r.boundsPassed()},
                {"status", o.status}};
    o.table = std::move(r.table);
  } catch (const InvalidArgument& e) {
    o.status = kExitConfigError;
    o.error = e.what();
  } catch (const ParseError& e) {
    o.status = kExitConfigError;
    o.error = e.what();
  } catch (const NotTransient& e) {
    o.status = kExitConfigError;
    o.error = e.what();
  } catch (const InsufficientSurvivors& e) {
    o.status = kExitMonteCarloFailure;
    o.error = e.what();
  } catch (const NumericalBreakdown& e) {
    o.status = kExitMonteCarloFailure;
    o.error = e.what();
  }
  return o;
}

}  // namespace hypdrift
