#pragma once

// Bernoulli bond percolation on the {P,Q} tiling graph, explored lazily along a
// simple random walk on the open cluster of the origin.
//
// Vertices are identified geometrically: each discovered vertex gets an id and a
// position in a local chart, and neighbors are matched through a polar spatial
// hash (two tiling vertices are at least r apart, so a match closer than r/2 is
// the same vertex). The chart is re-centred on the walker whenever it drifts
// far from the chart origin, and vertices far behind the walker are dropped.
// Edge states are a pure function of (seed, edge endpoints), so nothing about an
// edge needs to be stored.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "drift.hpp"
#include "errors.hpp"
#include "hyperbolic.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"
#include "tiling.hpp"

namespace hypdrift {

using VertexId = std::uint64_t;
inline constexpr VertexId kNoVertex = std::numeric_limits<VertexId>::max();

/// Open/closed state of every edge of one realization, sampled on demand from a
/// counter-based hash of (realization seed, unordered endpoint pair).
class PercolationState {
 public:
  PercolationState(double p, std::uint64_t seed) : p_(p), seed_(seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("percolation: p must lie in [0, 1]");
  }

  double p() const { return p_; }
  std::uint64_t seed() const { return seed_; }

  /// u(e) for the edge {a, b}.
  double uniform(VertexId a, VertexId b) const {
    return hashToUnit(hashWords(seed_, std::min(a, b), std::max(a, b)));
  }

  bool open(VertexId a, VertexId b) const {
    ++queries_;
    return uniform(a, b) < p_;
  }

  std::uint64_t queries() const { return queries_; }

 private:
  double p_;
  std::uint64_t seed_;
  mutable std::uint64_t queries_ = 0;
};

/// Identity audit: distances seen when matching or separating vertices.
struct VertexAudit {
  std::uint64_t lookups = 0;
  std::uint64_t matches = 0;
  std::uint64_t created = 0;
  std::uint64_t evicted = 0;
  std::uint64_t reanchors = 0;
  double maxMatchedDistance = 0.0;  // must stay < r/2
  double minDistinctDistance = std::numeric_limits<double>::infinity();  // must stay >= r/2
  std::uint64_t reverseEdgeFailures = 0;

  bool passed(double r) const {
    return maxMatchedDistance < 0.5 * r && minDistinctDistance >= 0.5 * r && reverseEdgeFailures == 0;
  }
};

/// Lazily discovered neighborhood of a walker on the tiling graph.
class TilingExplorer {
 public:
  struct Options {
    double reanchorRadius = 16.0;
    double evictRadius = 0.0;  // 0 selects max(30, 6r)
  };

  TilingExplorer(const GeneratorSet& gens, Options opt) : gens_(gens), opt_(opt) {
    r_ = gens.spec.r;
    quantum_ = 0.5 * r_;
    if (opt_.evictRadius <= 0.0) opt_.evictRadius = std::max(30.0, 6.0 * r_);
    matchBound_ = 2.0 * (std::cosh(0.5 * r_) - 1.0);
    table_.assign(1024, Slot{});
    prepare();
    current_ = addVertex(HPoint::origin());
  }
  explicit TilingExplorer(const GeneratorSet& gens) : TilingExplorer(gens, Options{}) {}

  VertexId current() const { return current_; }
  const VertexAudit& audit() const { return audit_; }
  std::size_t liveVertices() const { return nodes_.size(); }

  /// Id of the neighbor of the current vertex across edge k. Labels are not
  /// cached per vertex: a vertex reached along different paths may carry frames
  /// that differ by a rotation about it, which permutes the labels.
  VertexId neighbor(std::size_t k) { return resolve(chartImage(gens_.images[k])); }

  /// Moves the walker across edge k, whose far end `to` was already resolved.
  void step(std::size_t k, VertexId to) {
    const VertexId from = current_;
    rel_ = compose(rel_, gens_.sigmas[k]);
    prepare();
    current_ = to;
    // σ_k is an involution, so edge k leads back.
    if (neighbor(k) != from) ++audit_.reverseEdgeFailures;
    if (rel_.stretch() > opt_.reanchorRadius) reanchor();
  }

  void step(std::size_t k) { step(k, neighbor(k)); }

  /// Finds or creates the vertex at `pos` (chart coordinates).
  VertexId resolve(const HPoint& pos) {
    ++audit_.lookups;
    const Cell c = cellOf(pos);
    std::uint32_t best = kNil;
    double bestU = std::numeric_limits<double>::infinity();  // 2(cosh d - 1)
    for (long dr = -1; dr <= 1; ++dr) {
      const long ring = c.ring + dr;
      if (ring < 0) continue;
      const long n = sectors(ring);
      const long center = sectorOf(c.angle, n);
      const long lo = n <= 3 ? 0 : center - 1;
      const long hi = n <= 3 ? n - 1 : center + 1;
      for (long j = lo; j <= hi; ++j) {
        const long s = (j % n + n) % n;
        for (std::uint32_t i = head(key(ring, s)); i != kNil; i = nodes_[i].next) {
          const HPoint& w = nodes_[i].pos;
          const double dx = pos.re() - w.re(), dy = pos.im() - w.im();
          const double u = (dx * dx + dy * dy) / (pos.im() * w.im());
          if (u < bestU) {
            bestU = u;
            best = i;
          }
        }
      }
    }
    const double bestDist =
        best == kNil ? std::numeric_limits<double>::infinity() : dist(pos, nodes_[best].pos);
    if (best != kNil && bestU < matchBound_) {
      ++audit_.matches;
      audit_.maxMatchedDistance = std::max(audit_.maxMatchedDistance, bestDist);
      return nodes_[best].id;
    }
    audit_.minDistinctDistance = std::min(audit_.minDistinctDistance, bestDist);
    return addVertex(pos, c);
  }

 private:
  static constexpr std::uint32_t kNil = std::numeric_limits<std::uint32_t>::max();
  static constexpr std::uint64_t kEmptyKey = std::numeric_limits<std::uint64_t>::max();

  struct Node {
    VertexId id;
    HPoint pos;
    std::uint64_t cell;
    std::uint32_t next;  // next node in the same cell
  };
  struct Slot {
    std::uint64_t key = kEmptyKey;
    std::uint32_t head = kNil;
  };
  struct Cell {
    long ring;
    double angle;
  };

  static std::uint64_t key(long ring, long sector) {
    return (static_cast<std::uint64_t>(ring) << 32) | static_cast<std::uint64_t>(sector);
  }

  // Open-addressing cell table, linear probing.
  std::size_t slotOf(std::uint64_t k) const {
    const std::size_t mask = table_.size() - 1;
    std::size_t i = static_cast<std::size_t>(mix64(k)) & mask;
    while (table_[i].key != kEmptyKey && table_[i].key != k) i = (i + 1) & mask;
    return i;
  }

  std::uint32_t head(std::uint64_t k) const { return table_[slotOf(k)].head; }

  void link(std::uint32_t index) {
    if (4 * (used_ + 1) > 3 * table_.size()) grow();
    Slot& s = table_[slotOf(nodes_[index].cell)];
    if (s.key == kEmptyKey) {
      s.key = nodes_[index].cell;
      ++used_;
    }
    nodes_[index].next = s.head;
    s.head = index;
  }

  void rebuildTable(std::size_t capacity) {
    table_.assign(capacity, Slot{});
    used_ = 0;
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) link(i);
  }

  void grow() { rebuildTable(2 * table_.size()); }

  long sectors(long ring) {
    while (static_cast<long>(sectorCounts_.size()) <= ring) {
      const double circ = kTwoPi * std::sinh(static_cast<double>(sectorCounts_.size()) * quantum_);
      // Capped so that far rings (never probed for matches) keep valid keys.
      sectorCounts_.push_back(std::clamp<long>(static_cast<long>(std::ceil(circ / quantum_)), 1, 1L << 30));
    }
    return sectorCounts_[static_cast<std::size_t>(ring)];
  }

  static long sectorOf(double angle, long n) {
    const long s = static_cast<long>(std::floor(angle / kTwoPi * static_cast<double>(n)));
    return std::clamp<long>(s, 0, n - 1);
  }

  // Ring index floor(ρ/q) from cosh ρ - 1 = (x² + (y-1)²)/(2y), by table lookup.
  long ringOf(const HPoint& z) {
    const double x = z.re(), y = z.im();
    const double a = (x * x + (y - 1.0) * (y - 1.0)) / (2.0 * y);
    if (!std::isfinite(a)) return static_cast<long>(std::floor(dist(HPoint::origin(), z) / quantum_));
    while (ringEdges_.empty() || ringEdges_.back() <= a) {
      const double edge = std::cosh(static_cast<double>(ringEdges_.size() + 1) * quantum_) - 1.0;
      if (!std::isfinite(edge)) return static_cast<long>(std::floor(dist(HPoint::origin(), z) / quantum_));
      ringEdges_.push_back(edge);
    }
    return static_cast<long>(std::upper_bound(ringEdges_.begin(), ringEdges_.end(), a) - ringEdges_.begin());
  }

  Cell cellOf(const HPoint& z) {
    // arg((z - i)/(z + i)) = arg(|z|^2 - 1 - 2i x)
    const double x = z.re(), y = z.im();
    double a = std::atan2(-2.0 * x, (x * x + (y - 1.0) * (y + 1.0)));
    if (a < 0.0) a += kTwoPi;
    if (a >= kTwoPi) a = 0.0;
    return {ringOf(z), a};
  }

  VertexId addVertex(const HPoint& pos) { return addVertex(pos, cellOf(pos)); }

  VertexId addVertex(const HPoint& pos, const Cell& c) {
    const VertexId id = nextId_++;
    nodes_.push_back(Node{id, pos, key(c.ring, sectorOf(c.angle, sectors(c.ring))), kNil});
    link(static_cast<std::uint32_t>(nodes_.size() - 1));
    ++audit_.created;
    return id;
  }

  // Cached trig of the walker's chart element, so neighbor images cost no sincos.
  void prepare() {
    cl_ = std::cos(rel_.leftAngle());
    sl_ = std::sin(rel_.leftAngle());
    cr_ = std::cos(rel_.rightAngle());
    sr_ = std::sin(rel_.rightAngle());
    scale_ = std::exp(rel_.stretch());
  }

  static HPoint rotate(double c, double s, double x, double y) {
    // (c z - s)/(s z + c), scaled to avoid overflow
    double nr = c * x - s, ni = c * y, dr = s * x + c, di = s * y;
    const double m = std::max(std::abs(dr), std::abs(di));
    nr /= m, ni /= m, dr /= m, di /= m;
    const double den = dr * dr + di * di;
    const double re = (nr * dr + ni * di) / den;
    const double im = (y / m) / m / den;
    if (!(im > 0.0) || !std::isfinite(re) || !std::isfinite(im))
      throw NumericalBreakdown("chart image left the half-plane");
    return {re, im};
  }

  HPoint chartImage(const HPoint& z) const {
    const HPoint a = rotate(cr_, sr_, z.re(), z.im());
    return rotate(cl_, sl_, scale_ * a.re(), scale_ * a.im());
  }

  // Re-centres the chart on the walker and drops vertices far behind it.
  void reanchor() {
    ++audit_.reanchors;
    const Mobius back = rel_.inverse();
    std::size_t kept = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node n = nodes_[i];
      n.pos = n.id == current_ ? HPoint::origin() : apply(back, n.pos);
      if (n.id != current_ && dist(HPoint::origin(), n.pos) > opt_.evictRadius) {
        ++audit_.evicted;
        continue;
      }
      const Cell c = cellOf(n.pos);
      n.cell = key(c.ring, sectorOf(c.angle, sectors(c.ring)));
      nodes_[kept++] = n;
    }
    nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(kept), nodes_.end());
    std::size_t cap = 1024;
    while (cap < 4 * nodes_.size()) cap *= 2;
    rebuildTable(cap);
    rel_ = Mobius::identity();
    prepare();
  }

  const GeneratorSet& gens_;
  Options opt_;
  double r_ = 0.0;
  double quantum_ = 0.0;
  double matchBound_ = 0.0;
  std::vector<long> sectorCounts_;
  std::vector<double> ringEdges_;  // cosh((i+1) q) - 1
  std::vector<Node> nodes_;
  std::vector<Slot> table_;
  std::size_t used_ = 0;
  VertexId nextId_ = 0;
  VertexId current_ = kNoVertex;
  Mobius rel_;  // chart position of the walker
  double cl_ = 1, sl_ = 0, cr_ = 1, sr_ = 0, scale_ = 1;
  VertexAudit audit_;
};

struct ClusterWalkResult {
  bool survived = false;
  bool clusterDied = false;
  std::size_t diedAtStep = 0;
  std::size_t stepsTaken = 0;
  double finalDistance = 0.0;
  std::size_t graphRadiusProxy = 0;  // max over n of ceil(d(o, x_n)/r), a lower bound on graph distance
  WalkTrajectory trajectory;
  VertexAudit audit;
};

/// Simple random walk on the open cluster of o. Trial t of seed s uses the same
/// step stream as the tiling walk, so p = 1 reproduces it exactly.
inline ClusterWalkResult percolateWalk(const GeneratorSet& gens, double p, std::size_t nSteps,
                                       std::uint64_t seed, std::size_t trial = 0,
                                       std::size_t stride = kDefaultStride,
                                       TilingExplorer::Options opt = {}) {
  detail::require(stride >= 1, "percolateWalk: stride must be >= 1");
  const PercolationState env(p, hashWords(seed, trial, static_cast<std::uint64_t>(StreamRole::environment)));
  Rng rng = makeStream(seed, trial, StreamRole::forward);
  TilingExplorer ex(gens, opt);
  ClusterWalkResult res;
  res.trajectory.checkpointSteps.push_back(0);
  res.trajectory.distances.push_back(0.0);
  const double r = gens.spec.r;
  Mobius m;
  std::vector<std::size_t> open;
  std::vector<VertexId> openIds;
  open.reserve(gens.size());
  openIds.reserve(gens.size());
  for (std::size_t n = 1; n <= nSteps; ++n) {
    open.clear();
    openIds.clear();
    const VertexId here = ex.current();
    for (std::size_t k = 0; k < gens.size(); ++k) {
      const VertexId id = ex.neighbor(k);
      if (env.open(here, id)) {
        open.push_back(k);
        openIds.push_back(id);
      }
    }
    if (open.empty()) {
      res.clusterDied = true;
      res.diedAtStep = n - 1;
      break;
    }
    const std::size_t pick = uniformIndex(rng, open.size());
    const std::size_t k = open[pick];
    ex.step(k, openIds[pick]);
    m = compose(m, gens.sigmas[k]);
    res.stepsTaken = n;
    const double d = distOrigin(m);
    res.graphRadiusProxy =
        std::max(res.graphRadiusProxy, static_cast<std::size_t>(std::ceil(d / r - 1e-9)));
    if (n % stride == 0 || n == nSteps) {
      res.trajectory.checkpointSteps.push_back(n);
      res.trajectory.distances.push_back(d);
    }
  }
  res.survived = !res.clusterDied;
  res.trajectory.steps = res.stepsTaken;
  res.trajectory.runningElement = m;
  res.finalDistance = distOrigin(m);
  res.audit = ex.audit();
  return res;
}

inline ClusterWalkResult percolateWalk(const TilingSpec& spec, double p, std::size_t nSteps,
                                       std::uint64_t seed) {
  const GeneratorSet gens = buildGenerators(spec);
  return percolateWalk(gens, p, nSteps, seed);
}

inline constexpr std::size_t kDefaultSurvivalRadius = 30;
inline constexpr std::size_t kMinSurvivors = 10;

struct PercolationSpeedReport {
  DriftReport report;
  std::vector<ClusterWalkResult> walks;
  std::vector<bool> retained;
  VertexAudit audit;  // merged over trials
};

/// Mean of d(o, x_n)/n over trials whose walk reached graph radius
/// `minSurvivalRadius` (a stand-in for conditioning on an infinite cluster).
inline PercolationSpeedReport estimateSpeedPDetailed(const TilingSpec& spec, double p, std::size_t nSteps,
                                                     std::size_t trials,
                                                     std::size_t minSurvivalRadius, std::uint64_t seed,
                                                     std::size_t workers = 1,
                                                     std::size_t stride = kDefaultStride) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("estimateSpeedP: p must lie in (0, 1]");
  detail::require(minSurvivalRadius > 0, "estimateSpeedP: minSurvivalRadius must be positive");
  detail::require(nSteps >= 1 && trials >= 1, "estimateSpeedP: nSteps and trials must be positive");
  const GeneratorSet gens = buildGenerators(spec);
  PercolationSpeedReport out;
  out.walks = runTrials(trials, workers, [&](std::size_t t) {
    return percolateWalk(gens, p, nSteps, seed, t, stride);
  });
  RunningStats s;
  std::size_t kept = 0;
  for (const auto& w : out.walks) {
    const bool keep = w.survived && w.graphRadiusProxy >= minSurvivalRadius;
    out.retained.push_back(keep);
    if (keep) {
      ++kept;
      s.add(w.finalDistance / static_cast<double>(w.stepsTaken));
    }
    out.audit.lookups += w.audit.lookups;
    out.audit.matches += w.audit.matches;
    out.audit.created += w.audit.created;
    out.audit.evicted += w.audit.evicted;
    out.audit.reanchors += w.audit.reanchors;
    out.audit.reverseEdgeFailures += w.audit.reverseEdgeFailures;
    out.audit.maxMatchedDistance = std::max(out.audit.maxMatchedDistance, w.audit.maxMatchedDistance);
    out.audit.minDistinctDistance = std::min(out.audit.minDistinctDistance, w.audit.minDistinctDistance);
  }
  if (kept < kMinSurvivors)
    throw InsufficientSurvivors("estimateSpeedP: only " + std::to_string(kept) + " of " +
                                std::to_string(trials) + " trials reached graph radius " +
                                std::to_string(minSurvivalRadius) + " at p = " + std::to_string(p));
  DriftReport& rep = out.report;
  rep.speedEstimate = s.mean();
  rep.stdError = s.stdError();
  rep.sampleCount = kept;
  rep.retainedFraction = static_cast<double>(kept) / static_cast<double>(trials);
  rep.upperBound = gens.spec.r;
  rep.lowerBound = speedLowerBound(spec, p);
  return out;
}

inline DriftReport estimateSpeedP(const TilingSpec& spec, double p, std::size_t nSteps, std::size_t trials,
                                  std::size_t minSurvivalRadius, std::uint64_t seed, std::size_t workers = 1) {
  return estimateSpeedPDetailed(spec, p, nSteps, trials, minSurvivalRadius, seed, workers).report;
}

struct BoundRow {
  double p = 0.0;
  double lowerBound = 0.0;
  std::optional<double> speed;
  std::optional<double> stdError;
  double retainedFraction = 0.0;
  bool passed = false;
  std::string error;  // set when the row could not be estimated
};

/// One row per p: bound, estimate and whether estimate >= bound - 3·stderr.
inline std::vector<BoundRow> boundCheckReport(const TilingSpec& spec, const std::vector<double>& pList,
                                              std::size_t nSteps, std::size_t trials, std::uint64_t seed,
                                              std::size_t workers = 1,
                                              std::size_t minSurvivalRadius = kDefaultSurvivalRadius) {
  detail::require(!pList.empty(), "boundCheckReport: empty p list");
  const FSumMaximum fmax = maxFSumDetailed(spec);
  std::vector<BoundRow> rows;
  for (double p : pList) {
    BoundRow row;
    row.p = p;
    row.lowerBound = speedLowerBound(spec, p, fmax);
    try {
      const DriftReport rep = estimateSpeedP(spec, p, nSteps, trials, minSurvivalRadius, seed, workers);
      row.speed = rep.speedEstimate;
      row.stdError = rep.stdError;
      row.retainedFraction = rep.retainedFraction;
      row.passed = rep.speedEstimate >= row.lowerBound - 3.0 * rep.stdError;
    } catch (const InsufficientSurvivors& e) {
      row.error = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace hypdrift
