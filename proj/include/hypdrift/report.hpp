#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#if __has_include(<json.hpp>)
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif

#include "errors.hpp"
#include "stats.hpp"

namespace hypdrift {

using Json = nlohmann::ordered_json;

/// A declared bound: lhs <relation> rhs, with `slack` added in the lenient direction.
/// Relations: "<=", ">=", "<" and "|-|<=" (|lhs - rhs| <= slack).
struct Check {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  std::string relation = "<=";

  bool passed() const {
    if (!std::isfinite(lhs) || !std::isfinite(rhs)) return false;
    if (relation == "<=") return lhs <= rhs + slack;
    if (relation == ">=") return lhs >= rhs - slack;
    if (relation == "<") return lhs < rhs + slack;
    if (relation == "|-|<=") return std::abs(lhs - rhs) <= slack;
    throw InvalidArgument("Check: unknown relation '" + relation + "'");
  }
};

inline Json toJson(const Check& c) {
  return {{"name", c.name}, {"lhs", c.lhs},     {"rhs", c.rhs},
          {"slack", c.slack}, {"relation", c.relation}, {"passed", c.passed()}};
}

inline Json toJson(const Estimate& e) {
  return {{"value", e.value}, {"stdError", e.stdError}, {"samples", e.samples}};
}

/// Re-evaluates every check of a report from its own numbers. True when each
/// stored flag and the overall flag are reproduced.
inline bool recheckReport(const Json& report) {
  if (!report.contains("checks") || !report["checks"].is_array())
    throw ParseError("report has no checks array");
  bool all = true;
  for (const auto& j : report["checks"]) {
    Check c;
    c.name = j.at("name").get<std::string>();
    c.lhs = j.at("lhs").get<double>();
    c.rhs = j.at("rhs").get<double>();
    c.slack = j.at("slack").get<double>();
    c.relation = j.at("relation").get<std::string>();
    if (c.passed() != j.at("passed").get<bool>()) return false;
    all = all && c.passed();
  }
  return report.at("passed").get<bool>() == all;
}

inline Json readReport(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open report " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

struct CheckpointRow {
  std::size_t trial = 0;
  std::size_t step = 0;
  double distance = 0.0;
  std::optional<long> level;
  std::optional<double> xi;
};

/// Per-checkpoint table; the level and xi columns appear when any row has them.
struct CheckpointTable {
  std::vector<CheckpointRow> rows;

  void add(std::size_t trial, std::size_t step, double distance, std::optional<long> level = {},
           std::optional<double> xi = {}) {
    rows.push_back({trial, step, distance, level, xi});
  }

  void write(std::ostream& out) const {
    bool hasLevel = false, hasXi = false;
    for (const auto& r : rows) {
      hasLevel = hasLevel || r.level.has_value();
      hasXi = hasXi || r.xi.has_value();
    }
    out << "trial,step,distance";
    if (hasLevel) out << ",level";
    if (hasXi) out << ",xi";
    out << '\n';
    char buf[32];
    auto num = [&](double x) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      return buf;
    };
    for (const auto& r : rows) {
      out << r.trial << ',' << r.step << ',' << num(r.distance);
      if (hasLevel) {
        out << ',';
        if (r.level) out << *r.level;
      }
      if (hasXi) {
        out << ',';
        if (r.xi) out << num(*r.xi);
      }
      out << '\n';
    }
  }
};

}  // namespace hypdrift
