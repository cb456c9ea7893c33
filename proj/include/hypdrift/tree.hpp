#pragma once

// Weighted trees: effective conductance to infinity with free/wired truncation
// bounds, conductance-proportional random walks, the electrical speed formula,
// ray horofunctions from loop-erased walks, and the weighted canopy tree.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drift.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace hypdrift {

enum class TreeKind { finite, regular, canopy };

/// Kind-specific handle: canopy vertices carry their level, finite ones an index.
struct TreeVertex {
  long level = 0;
  std::size_t id = 0;
};

/// Rule producing neighbors and conductances. Neighbors of a vertex are
/// addressed by slot:
///  - regular(d, c): d slots of conductance c.
///  - canopy(λ): slot 0 goes up (conductance λ^k at level k), slots 1 and 2 go
///    down (λ^(k-1)); leaves (k = 0) have only slot 0.
///  - finite: the adjacency list of the loaded tree.
class WeightedTree {
 public:
  static WeightedTree regular(int d, double c = 1.0) {
    if (d < 2) throw InvalidArgument("regular tree: degree must be >= 2");
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("regular tree: conductance must be positive");
    WeightedTree t(TreeKind::regular);
    t.d_ = d;
    t.c_ = c;
    return t;
  }

  static WeightedTree canopy(double lambda, long rootLevel = 0) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("canopy: lambda must be positive");
    if (rootLevel < 0) throw InvalidArgument("canopy: root level must be >= 0");
    WeightedTree t(TreeKind::canopy);
    t.lambda_ = lambda;
    t.root_.level = rootLevel;
    return t;
  }

  /// Builds from (parent, child, conductance) triples; the root is the first
  /// parent. Repeated edges act in parallel (conductances add).
  static WeightedTree finite(const std::vector<std::tuple<std::string, std::string, double>>& edges) {
    if (edges.empty()) throw InvalidArgument("finite tree: no edges");
    WeightedTree t(TreeKind::finite);
    std::unordered_map<std::string, std::size_t> index;
    auto idOf = [&](const std::string& name) {
      auto [it, fresh] = index.emplace(name, t.names_.size());
      if (fresh) {
        t.names_.push_back(name);
        t.adj_.emplace_back();
      }
      return it->second;
    };
    idOf(std::get<0>(edges.front()));
    for (const auto& [a, b, c] : edges) {
      if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("finite tree: conductance must be positive");
      if (a == b) throw InvalidArgument("finite tree: self-loop at " + a);
      const std::size_t u = idOf(a), v = idOf(b);
      auto& au = t.adj_[u];
      auto it = std::find_if(au.begin(), au.end(), [&](const auto& e) { return e.first == v; });
      if (it != au.end()) {
        it->second += c;
        auto& av = t.adj_[v];
        std::find_if(av.begin(), av.end(), [&](const auto& e) { return e.first == u; })->second += c;
      } else {
        au.emplace_back(v, c);
        t.adj_[v].emplace_back(u, c);
      }
    }
    std::size_t edgeCount = 0;
    for (const auto& a : t.adj_) edgeCount += a.size();
    edgeCount /= 2;
    // Connected with V - 1 edges.
    std::vector<bool> seen(t.adj_.size(), false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t reached = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (const auto& [v, c] : t.adj_[u])
        if (!seen[v]) {
          seen[v] = true;
          ++reached;
          stack.push_back(v);
        }
    }
    if (reached != t.adj_.size() || edgeCount + 1 != t.adj_.size())
      throw InvalidArgument("finite tree: edges do not form a tree");
    return t;
  }

  /// One edge per line: "parentId childId conductance". Blank lines and lines
  /// starting with '#' are skipped.
  static WeightedTree loadFinite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read " + path);
    std::vector<std::tuple<std::string, std::string, double>> edges;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
      ++lineNo;
      std::istringstream ss(line);
      std::string a, b, extra;
      double c = 0.0;
      if (!(ss >> a) || a[0] == '#') continue;
      if (!(ss >> b >> c) || (ss >> extra))
        throw ParseError(path + ":" + std::to_string(lineNo) + ": expected 'parent child conductance'");
      edges.emplace_back(a, b, c);
    }
    try {
      return finite(edges);
    } catch (const InvalidArgument& e) {
      throw ParseError(path + ": " + e.what());
    }
  }

  TreeKind kind() const { return kind_; }
  int degreeParameter() const { return d_; }
  double edgeConductance() const { return c_; }
  double lambda() const { return lambda_; }
  TreeVertex root() const { return root_; }
  std::size_t finiteSize() const { return adj_.size(); }
  const std::string& name(const TreeVertex& v) const { return names_.at(v.id); }

  std::optional<TreeVertex> find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return TreeVertex{0, i};
    return std::nullopt;
  }

  std::size_t degree(const TreeVertex& v) const {
    switch (kind_) {
      case TreeKind::regular: return static_cast<std::size_t>(d_);
      case TreeKind::canopy: return v.level == 0 ? 1 : 3;
      case TreeKind::finite: return adj_[v.id].size();
    }
    return 0;
  }

  double conductance(const TreeVertex& v, std::size_t slot) const {
    switch (kind_) {
      case TreeKind::regular: return c_;
      case TreeKind::canopy:
        return std::pow(lambda_, static_cast<double>(slot == 0 ? v.level : v.level - 1));
      case TreeKind::finite: return adj_[v.id][slot].second;
    }
    return 0.0;
  }

  /// Neighbor across `slot`, and the slot of that neighbor leading back.
  /// Regular trees: non-root vertices use slot 0 for the way back.
  std::pair<TreeVertex, std::size_t> across(const TreeVertex& v, std::size_t slot) const {
    switch (kind_) {
      case TreeKind::regular: return {TreeVertex{}, 0};
      case TreeKind::canopy:
        if (slot == 0) return {TreeVertex{v.level + 1, 0}, 1};
        return {TreeVertex{v.level - 1, 0}, 0};
      case TreeKind::finite: {
        const std::size_t w = adj_[v.id][slot].first;
        const auto& aw = adj_[w];
        for (std::size_t s = 0; s < aw.size(); ++s)
          if (aw[s].first == v.id) return {TreeVertex{0, w}, s};
        break;
      }
    }
    throw Error("tree: neighbor list is not symmetric");
  }

  /// The branch entered at v with `back` removed has no path to infinity.
  /// (Canopy: everything below a vertex is finite.)
  bool branchFinite(const TreeVertex&, std::optional<std::size_t> back) const {
    switch (kind_) {
      case TreeKind::regular: return false;
      case TreeKind::canopy: return back.has_value() && *back == 0;
      case TreeKind::finite: return true;
    }
    return true;
  }

  /// A value L(v, back) below the branch conductance, used at the truncation
  /// cut for the lower bound. It satisfies L <= Σ series(c, L(child)) on every
  /// branch, and any such sub-solution stays below the true conductance.
  double subSolution(const TreeVertex& v, std::optional<std::size_t> back) const {
    if (branchFinite(v, back)) return 0.0;
    switch (kind_) {
      case TreeKind::regular: {
        const double children = back ? d_ - 1.0 : d_;
        return 0.5 * c_ * children * (d_ - 2.0) / (d_ - 1.0);
      }
      case TreeKind::canopy:
        // Half of λ^m (λ-1)/λ, the conductance up a ray λ^m, λ^(m+1), ...
        return lambda_ > 1.0 ? 0.5 * std::pow(lambda_, static_cast<double>(v.level)) * (lambda_ - 1.0) / lambda_ : 0.0;
      case TreeKind::finite: return 0.0;
    }
    return 0.0;
  }

  /// Key under which branches have identical conductance (regular and canopy).
  std::uint64_t branchKey(const TreeVertex& v, std::optional<std::size_t> back) const {
    if (kind_ == TreeKind::regular) return back ? 1 : 0;
    const std::uint64_t b = back ? (*back == 0 ? 1 : 2) : 0;
    return (static_cast<std::uint64_t>(v.level) << 2) | b;
  }

 private:
  explicit WeightedTree(TreeKind k) : kind_(k) {}

  TreeKind kind_;
  int d_ = 0;
  double c_ = 1.0;
  double lambda_ = 0.0;
  TreeVertex root_{};
  std::vector<std::string> names_;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj_;
};

// ---------------------------------------------------------------------------
// Effective conductance

struct ConductanceInterval {
  double lower = 0.0;  // free truncation
  double upper = 0.0;  // wired truncation
  std::size_t depth = 0;
  bool depthCapReached = false;

  double width() const { return upper - lower; }
};

namespace detail {

inline double series(double a, double b) {
  if (std::isinf(b)) return a;
  if (std::isinf(a)) return b;
  return a + b > 0.0 ? a * b / (a + b) : 0.0;
}

class TruncatedConductance {
 public:
  TruncatedConductance(const WeightedTree& t, bool wired) : tree_(t), wired_(wired) {}

  // Conductance from v to infinity within the branch that excludes `back`,
  // with everything at depth `depth` below v cut (free) or shorted (wired).
  double branch(const TreeVertex& v, std::optional<std::size_t> back, std::size_t depth) {
    if (tree_.branchFinite(v, back)) return 0.0;
    if (depth == 0) return wired_ ? std::numeric_limits<double>::infinity() : tree_.subSolution(v, back);
    const auto key = std::make_pair(tree_.branchKey(v, back), depth);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    double sum = 0.0;
    for (std::size_t s = 0; s < tree_.degree(v); ++s) {
      if (back && s == *back) continue;
      const auto [w, ws] = tree_.across(v, s);
      sum += series(tree_.conductance(v, s), branch(w, ws, depth - 1));
    }
    memo_.emplace(key, sum);
    return sum;
  }

 private:
  const WeightedTree& tree_;
  bool wired_;
  std::map<std::pair<std::uint64_t, std::size_t>, double> memo_;
};

}  // namespace detail

/// Bounds at one truncation depth, from v with edge `removedSlot` of v
/// deleted. Upper: vertices at the cut are shorted to infinity (wired). Lower:
/// the cut carries the sub-solution instead of the free value 0, which would
/// be a fixed point of the recursion and never move.
inline ConductanceInterval truncatedConductance(const WeightedTree& tree, const TreeVertex& v,
                                                std::optional<std::size_t> removedSlot, std::size_t depth) {
  if (removedSlot && *removedSlot >= tree.degree(v))
    throw InvalidArgument("effectiveConductance: removed edge is not incident to v");
  ConductanceInterval out;
  out.depth = depth;
  if (tree.kind() == TreeKind::finite) return out;
  detail::TruncatedConductance lo(tree, false), hi(tree, true);
  out.lower = lo.branch(v, removedSlot, depth);
  out.upper = hi.branch(v, removedSlot, depth);
  return out;
}

inline constexpr std::size_t kDefaultDepthCap = 1 << 14;

/// Doubles the truncation depth until upper - lower <= tol. When the cap is
/// hit the last interval is returned with depthCapReached set.
inline ConductanceInterval effectiveConductance(const WeightedTree& tree, const TreeVertex& v,
                                                std::optional<std::size_t> removedSlot, double tol,
                                                std::size_t depthCap = kDefaultDepthCap) {
  if (!(tol > 0.0)) throw InvalidArgument("effectiveConductance: tol must be positive");
  std::size_t depth = 1;
  while (true) {
    ConductanceInterval iv = truncatedConductance(tree, v, removedSlot, depth);
    if (iv.width() <= tol) return iv;
    if (depth >= depthCap) {
      iv.depthCapReached = true;
      return iv;
    }
    depth = std::min(2 * depth, depthCap);
  }
}

/// Conductance between `source` and the set `wired` (shorted together) in a
/// finite tree.
inline double effectiveConductanceToSet(const WeightedTree& tree, const TreeVertex& source,
                                        const std::vector<TreeVertex>& wired) {
  if (tree.kind() != TreeKind::finite) throw InvalidArgument("effectiveConductanceToSet: finite trees only");
  std::vector<bool> isWired(tree.finiteSize(), false);
  for (const auto& w : wired) isWired.at(w.id) = true;
  if (isWired.at(source.id)) throw InvalidArgument("effectiveConductanceToSet: source is wired");
  // Post-order over the tree rooted at source.
  struct Frame {
    TreeVertex v;
    std::optional<std::size_t> back;
  };
  std::vector<Frame> order;
  std::vector<Frame> stack{{source, std::nullopt}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    order.push_back(f);
    if (isWired[f.v.id]) continue;
    for (std::size_t s = 0; s < tree.degree(f.v); ++s) {
      if (f.back && s == *f.back) continue;
      const auto [w, ws] = tree.across(f.v, s);
      stack.push_back({w, ws});
    }
  }
  std::vector<double> value(tree.finiteSize(), 0.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const TreeVertex& v = it->v;
    if (isWired[v.id]) {
      value[v.id] = std::numeric_limits<double>::infinity();
      continue;
    }
    double sum = 0.0;
    for (std::size_t s = 0; s < tree.degree(v); ++s) {
      if (it->back && s == *it->back) continue;
      sum += detail::series(tree.conductance(v, s), value[tree.across(v, s).first.id]);
    }
    value[v.id] = sum;
  }
  return value[source.id];
}

// ---------------------------------------------------------------------------
// Speed formula

/// A: conductance from x_0 to infinity without e; B: conductance of e = {x_0, x_1};
/// C: conductance from x_1 to infinity without e.
struct EdgeSplit {
  ConductanceInterval A;
  double B = 0.0;
  ConductanceInterval C;
};

struct SpeedInterval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

namespace detail {

inline double speedExpression(double a, double b, double c) {
  if (a == 0.0 || c == 0.0) return 0.0;
  return 1.0 / (b / c + 1.0 + b / a);  // AC/(AB + AC + BC)
}

}  // namespace detail

/// AC/(AB + AC + BC) over the A and C intervals; nondecreasing in both.
inline SpeedInterval speedFormula(const EdgeSplit& split) {
  if (!(split.B > 0.0)) throw InvalidArgument("speedFormula: B must be positive");
  if (split.A.lower < 0.0 || split.A.lower > split.A.upper || split.C.lower < 0.0 ||
      split.C.lower > split.C.upper)
    throw InvalidArgument("speedFormula: malformed conductance interval");
  if (split.A.upper == 0.0 && split.C.upper == 0.0)
    throw NotTransient("speedFormula: A = C = 0, the walk is recurrent");
  return {detail::speedExpression(split.A.lower, split.B, split.C.lower),
          detail::speedExpression(split.A.upper, split.B, split.C.upper)};
}

/// Split across edge `slot` of v.
inline EdgeSplit edgeSplit(const WeightedTree& tree, const TreeVertex& v, std::size_t slot, double tol,
                           std::size_t depthCap = kDefaultDepthCap) {
  EdgeSplit s;
  s.A = effectiveConductance(tree, v, slot, tol, depthCap);
  s.B = tree.conductance(v, slot);
  const auto [w, back] = tree.across(v, slot);
  s.C = effectiveConductance(tree, w, back, tol, depthCap);
  return s;
}

// ---------------------------------------------------------------------------
// Lazily explored tree and walks

/// The part of a tree discovered so far, rooted at the walk's origin. Because
/// the graph is a tree, discovery depth is graph distance to the origin.
class TreeExplorer {
 public:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  explicit TreeExplorer(const WeightedTree& tree, std::optional<TreeVertex> origin = std::nullopt)
      : tree_(tree) {
    addNode(origin.value_or(tree.root()), kNone, 0);
  }

  const WeightedTree& tree() const { return tree_; }
  std::size_t origin() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  const TreeVertex& vertex(std::size_t n) const { return nodes_[n].v; }
  std::size_t depth(std::size_t n) const { return nodes_[n].depth; }
  std::size_t parent(std::size_t n) const { return nodes_[n].parent; }
  std::size_t degree(std::size_t n) const { return nodes_[n].nbr.size(); }

  std::size_t neighbor(std::size_t n, std::size_t slot) {
    if (nodes_[n].nbr[slot] == kNone) {
      const auto [w, back] = tree_.across(nodes_[n].v, slot);
      const std::size_t m = addNode(w, n, nodes_[n].depth + 1);
      nodes_[n].nbr[slot] = m;
      nodes_[m].nbr[back] = n;
    }
    return nodes_[n].nbr[slot];
  }

  /// Slot chosen with probability proportional to conductance.
  std::size_t sampleSlot(std::size_t n, Rng& rng) const {
    const TreeVertex& v = nodes_[n].v;
    const std::size_t deg = nodes_[n].nbr.size();
    if (tree_.kind() == TreeKind::regular) return uniformIndex(rng, deg);
    double total = 0.0;
    for (std::size_t s = 0; s < deg; ++s) total += tree_.conductance(v, s);
    double u = uniform01(rng) * total;
    for (std::size_t s = 0; s + 1 < deg; ++s) {
      u -= tree_.conductance(v, s);
      if (u < 0.0) return s;
    }
    return deg - 1;
  }

  std::size_t step(std::size_t n, Rng& rng) { return neighbor(n, sampleSlot(n, rng)); }

  /// Graph distance between discovered vertices.
  std::size_t distance(std::size_t a, std::size_t b) const {
    std::size_t d = 0;
    while (nodes_[a].depth > nodes_[b].depth) a = nodes_[a].parent, ++d;
    while (nodes_[b].depth > nodes_[a].depth) b = nodes_[b].parent, ++d;
    while (a != b) a = nodes_[a].parent, b = nodes_[b].parent, d += 2;
    return d;
  }

 private:
  struct Node {
    TreeVertex v;
    std::size_t parent;
    std::size_t depth;
    std::vector<std::size_t> nbr;
  };

  std::size_t addNode(const TreeVertex& v, std::size_t parent, std::size_t depth) {
    nodes_.push_back(Node{v, parent, depth, std::vector<std::size_t>(tree_.degree(v), kNone)});
    return nodes_.size() - 1;
  }

  const WeightedTree& tree_;
  std::vector<Node> nodes_;
};

struct TreeWalkTrajectory {
  std::size_t steps = 0;
  std::vector<std::size_t> checkpointSteps;
  std::vector<double> distances;  // d(o, x_n) at checkpoints
  std::vector<long> levels;       // canopy only: level at checkpoints
  std::vector<std::size_t> path;  // explorer nodes x_0..x_n, when requested
  std::vector<std::uint64_t> levelOccupation;  // canopy: visits per level over x_0..x_{n-1}
  std::uint64_t movesFromUpperLevels = 0;      // canopy: steps taken from levels >= 1
  std::uint64_t upMovesFromUpperLevels = 0;
  std::size_t lastVisitToOrigin = 0;
  std::size_t finalDistance = 0;
  std::size_t finalNode = 0;
};

/// Walk of nSteps from the explorer's origin.
inline TreeWalkTrajectory simulateTreeWalk(TreeExplorer& ex, std::size_t nSteps, Rng& rng,
                                           std::size_t stride = 1, bool keepPath = false) {
  detail::require(nSteps >= 1, "simulateTreeWalk: nSteps must be >= 1");
  detail::require(stride >= 1, "simulateTreeWalk: stride must be >= 1");
  const bool canopy = ex.tree().kind() == TreeKind::canopy;
  TreeWalkTrajectory tr;
  std::size_t x = ex.origin();
  tr.checkpointSteps.push_back(0);
  tr.distances.push_back(0.0);
  if (canopy) tr.levels.push_back(ex.vertex(x).level);
  if (keepPath) {
    tr.path.reserve(nSteps + 1);
    tr.path.push_back(x);
  }
  for (std::size_t n = 1; n <= nSteps; ++n) {
    const std::size_t slot = ex.sampleSlot(x, rng);
    if (canopy) {
      const long k = ex.vertex(x).level;
      if (static_cast<std::size_t>(k) >= tr.levelOccupation.size()) tr.levelOccupation.resize(k + 1, 0);
      ++tr.levelOccupation[k];
      if (k >= 1) {
        ++tr.movesFromUpperLevels;
        if (slot == 0) ++tr.upMovesFromUpperLevels;
      }
    }
    x = ex.neighbor(x, slot);
    if (x == ex.origin()) tr.lastVisitToOrigin = n;
    if (keepPath) tr.path.push_back(x);
    if (n % stride == 0 || n == nSteps) {
      tr.checkpointSteps.push_back(n);
      tr.distances.push_back(static_cast<double>(ex.depth(x)));
      if (canopy) tr.levels.push_back(ex.vertex(x).level);
    }
  }
  tr.steps = nSteps;
  tr.finalNode = x;
  tr.finalDistance = ex.depth(x);
  return tr;
}

inline TreeWalkTrajectory simulateTreeWalk(const WeightedTree& tree, std::size_t nSteps, std::uint64_t seed,
                                           std::size_t trial = 0, std::size_t stride = 1) {
  TreeExplorer ex(tree);
  Rng rng = makeStream(seed, trial, StreamRole::forward);
  return simulateTreeWalk(ex, nSteps, rng, stride);
}

/// Mean of d(o, x_n)/n over independent walks.
inline Estimate estimateTreeSpeed(const WeightedTree& tree, std::size_t nSteps, std::size_t trials,
                                  std::uint64_t seed, std::size_t workers = 1) {
  detail::require(trials >= 2, "estimateTreeSpeed: need at least 2 trials");
  const auto speeds = runTrials(trials, workers, [&](std::size_t t) {
    TreeExplorer ex(tree);
    Rng rng = makeStream(seed, t, StreamRole::forward);
    return static_cast<double>(simulateTreeWalk(ex, nSteps, rng, nSteps).finalDistance) /
           static_cast<double>(nSteps);
  });
  return meanEstimate(speeds);
}

// ---------------------------------------------------------------------------
// Canopy level chain

/// Probability that the level goes up from level k >= 1: λ^k / (λ^k + 2λ^(k-1)).
inline double canopyUpProbability(double lambda) { return lambda / (2.0 + lambda); }

struct CanopyLevels {
  std::vector<double> p;  // p[k] = long-run fraction of time at level k
  std::size_t truncLevels = 0;
  double lastChange = 0.0;  // total variation between the last two truncations
};

/// Stationary law of the one-step level chain (0 -> 1 surely; k -> k+1 with
/// probability λ/(2+λ) otherwise), reflected at truncLevels. The truncation is
/// doubled until the total-variation change is at most tol.
inline CanopyLevels canopyStationaryLevels(double lambda, std::size_t truncLevels = 16, double tol = 1e-12) {
  if (!(lambda > 1.0 && lambda < 2.0)) throw InvalidArgument("canopyStationaryLevels: lambda must lie in (1, 2)");
  detail::require(truncLevels >= 1, "canopyStationaryLevels: truncLevels must be >= 1");
  detail::require(tol > 0.0, "canopyStationaryLevels: tol must be positive");
  const double a = canopyUpProbability(lambda);
  auto solve = [&](std::size_t top) {
    // Detailed balance of the birth-death chain.
    std::vector<double> w(top + 1);
    w[0] = 1.0;
    for (std::size_t k = 0; k < top; ++k) w[k + 1] = w[k] * (k == 0 ? 1.0 : a) / (1.0 - a);
    double s = 0.0;
    for (double x : w) s += x;
    for (double& x : w) x /= s;
    return w;
  };
  CanopyLevels out;
  std::vector<double> prev = solve(truncLevels);
  while (true) {
    const std::size_t next = 2 * truncLevels;
    std::vector<double> cur = solve(next);
    double tv = 0.0;
    for (std::size_t k = 0; k < cur.size(); ++k) tv += std::abs(cur[k] - (k < prev.size() ? prev[k] : 0.0));
    tv *= 0.5;
    truncLevels = next;
    prev = std::move(cur);
    if (tv <= tol || truncLevels >= (1u << 20)) {
      out.lastChange = tv;
      break;
    }
  }
  out.p = std::move(prev);
  out.truncLevels = truncLevels;
  return out;
}

inline long sampleLevel(const CanopyLevels& levels, Rng& rng) {
  double u = uniform01(rng);
  for (std::size_t k = 0; k < levels.p.size(); ++k) {
    u -= levels.p[k];
    if (u < 0.0) return static_cast<long>(k);
  }
  return static_cast<long>(levels.p.size() - 1);
}

// ---------------------------------------------------------------------------
// Rays and horofunctions

/// r_0 = origin, r_1, ...: a geodesic from the origin. Entries below
/// stabilityIndex were not touched during the second half of the walk that
/// produced the ray.
struct TreeRay {
  std::vector<std::size_t> vertices;
  std::size_t stabilityIndex = 0;
};

/// Chronological loop erasure of any vertex sequence.
template <class Id>
std::vector<Id> loopErase(const std::vector<Id>& path) {
  std::vector<Id> out;
  std::unordered_map<Id, std::size_t> pos;
  for (const Id& x : path) {
    if (auto it = pos.find(x); it != pos.end()) {
      for (std::size_t i = it->second + 1; i < out.size(); ++i) pos.erase(out[i]);
      out.resize(it->second + 1);
    } else {
      pos.emplace(x, out.size());
      out.push_back(x);
    }
  }
  return out;
}

/// Loop erasure of a walk in the explorer starting at the origin. On a tree it
/// is the geodesic from the origin to the walk's endpoint.
inline TreeRay loopErase(const TreeExplorer& ex, const std::vector<std::size_t>& path) {
  detail::require(!path.empty() && path.front() == ex.origin(), "loopErase: path must start at the origin");
  TreeRay ray;
  for (std::size_t x = path.back(); x != TreeExplorer::kNone; x = ex.parent(x)) ray.vertices.push_back(x);
  std::reverse(ray.vertices.begin(), ray.vertices.end());
  std::size_t minDepth = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = path.size() / 2; i < path.size(); ++i) minDepth = std::min(minDepth, ex.depth(path[i]));
  ray.stabilityIndex = minDepth;
  return ray;
}

/// Busemann value of the ray at v: j - d(r_j, v) with r_j the last ray vertex
/// on the geodesic from the origin to v.
inline long rayHorofunction(const TreeExplorer& ex, const TreeRay& ray, std::size_t v) {
  detail::require(!ray.vertices.empty() && ray.vertices.front() == ex.origin(),
                  "rayHorofunction: ray must start at the origin");
  const long depthV = static_cast<long>(ex.depth(v));
  std::size_t a = v;
  while (ex.depth(a) >= ray.vertices.size()) a = ex.parent(a);
  while (ray.vertices[ex.depth(a)] != a) a = ex.parent(a);
  const long j = static_cast<long>(ex.depth(a));
  return j - (depthV - j);
}

// ---------------------------------------------------------------------------
// ℓ = -E[ξ(x_1)] on trees

struct TreeTheoremATrial {
  double forwardSpeed = 0.0;
  double minusXi = 0.0;  // -ξ(x_1), always ±1
  long rootLevel = 0;
  std::size_t rayLength = 0;
  std::size_t stabilityIndex = 0;
  std::vector<double> windowMeans;  // window means of ξ(x_n) - ξ(x_{n+1})
};

struct TreeTheoremAReport {
  Estimate speed;
  Estimate horofunction;
  double discrepancy = 0.0;
  double combinedStdError = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  bool unitIncrements = true;  // every ξ(x_1) was ±1
  StationarityReport stationarity;
  std::vector<TreeTheoremATrial> trials;
};

/// Per trial: backward walk -> loop-erased ray -> ξ; an independent first step;
/// a forward walk for the speed. Canopy roots are drawn from the stationary
/// level law.
inline TreeTheoremAReport treeTheoremACheck(const WeightedTree& tree, std::size_t nSteps, std::size_t trials,
                                            std::uint64_t seed, std::size_t workers = 1,
                                            std::size_t window = 1000) {
  detail::require(nSteps >= 2 && trials >= 2, "treeTheoremACheck: need nSteps >= 2 and trials >= 2");
  if (tree.kind() == TreeKind::finite) throw NotTransient("treeTheoremACheck: finite trees are recurrent");
  std::optional<CanopyLevels> levels;
  if (tree.kind() == TreeKind::canopy) levels = canopyStationaryLevels(tree.lambda());
  const std::size_t windows = std::max<std::size_t>(2, nSteps / window);
  const std::size_t winLen = nSteps / windows;
  TreeTheoremAReport rep;
  rep.trials = runTrials(trials, workers, [&](std::size_t t) {
    TreeTheoremATrial tr;
    TreeVertex root = tree.root();
    if (levels) {
      Rng env = makeStream(seed, t, StreamRole::environment);
      root.level = sampleLevel(*levels, env);
    }
    tr.rootLevel = root.level;
    TreeExplorer ex(tree, root);
    Rng back = makeStream(seed, t, StreamRole::backward);
    const TreeWalkTrajectory bw = simulateTreeWalk(ex, nSteps, back, nSteps, true);
    const TreeRay ray = loopErase(ex, bw.path);
    tr.rayLength = ray.vertices.size();
    tr.stabilityIndex = ray.stabilityIndex;

    Rng first = makeStream(seed, t, StreamRole::firstStep);
    tr.minusXi = -static_cast<double>(rayHorofunction(ex, ray, ex.step(ex.origin(), first)));

    Rng fwd = makeStream(seed, t, StreamRole::forward);
    std::size_t x = ex.origin();
    long prevXi = 0;
    double winSum = 0.0;
    // Depth of the confluence with the ray, updated per step: it only changes
    // when the walk stands on the ray.
    std::size_t meet = 0;
    for (std::size_t n = 1; n <= nSteps; ++n) {
      x = ex.step(x, fwd);
      const std::size_t dx = ex.depth(x);
      if (dx < ray.vertices.size() && ray.vertices[dx] == x) meet = dx;
      const long cur = 2 * static_cast<long>(meet) - static_cast<long>(dx);
      winSum += static_cast<double>(prevXi - cur);
      prevXi = cur;
      if (n % winLen == 0 && tr.windowMeans.size() < windows) {
        tr.windowMeans.push_back(winSum / static_cast<double>(winLen));
        winSum = 0.0;
      }
    }
    tr.forwardSpeed = static_cast<double>(ex.depth(x)) / static_cast<double>(nSteps);
    return tr;
  });
  RunningStats sp, hx;
  std::vector<std::vector<double>> perTrialWindows;
  for (const auto& tr : rep.trials) {
    sp.add(tr.forwardSpeed);
    hx.add(tr.minusXi);
    if (std::abs(tr.minusXi) != 1.0) rep.unitIncrements = false;
    perTrialWindows.push_back(tr.windowMeans);
  }
  rep.speed = sp.estimate();
  rep.horofunction = hx.estimate();
  rep.discrepancy = std::abs(rep.speed.value - rep.horofunction.value);
  rep.combinedStdError = jointStdError(rep.speed.stdError, rep.horofunction.stdError);
  rep.tolerance = 3.0 * rep.combinedStdError;
  rep.passed = rep.discrepancy <= rep.tolerance;
  rep.stationarity = stationarityAcrossTrials(perTrialWindows, windows);
  return rep;
}

}  // namespace hypdrift
