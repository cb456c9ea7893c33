// hypdrift: drift experiments on hyperbolic tilings, trees and matrix products.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hypdrift/experiments.hpp"

namespace {

void usage(std::ostream& out) {
  out << "usage: hypdrift <subcommand> [key=value ...] [config=file]\n"
         "       hypdrift recheck <name.report.json>\n\n"
         "subcommands:\n";
  for (const auto& [name, fn] : hypdrift::experiments()) out << "  " << name << '\n';
  out << "\ncommon keys: seed, n, trials, out (file prefix), workers (default $"
      << hypdrift::kWorkersEnv << " or hardware threads)\n"
         "exit status: 0 ok, 1 bound check failed, 2 configuration error, 3 Monte Carlo failure\n";
}

int recheck(const std::string& path) {
  try {
    const bool ok = hypdrift::recheckReport(hypdrift::readReport(path));
    std::cout << (ok ? "consistent" : "INCONSISTENT") << '\n';
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "hypdrift: " << e.what() << '\n';
    return hypdrift::kExitConfigError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage(std::cerr);
    return hypdrift::kExitConfigError;
  }
  const std::string name = argv[1];
  if (name == "-h" || name == "--help" || name == "help") {
    usage(std::cout);
    return 0;
  }
  if (name == "recheck") {
    if (argc != 3) {
      usage(std::cerr);
      return hypdrift::kExitConfigError;
    }
    return recheck(argv[2]);
  }
  const std::vector<std::string> args(argv + 2, argv + argc);
  hypdrift::RunOutcome o = hypdrift::runExperiment(name, args);
  if (!o.error.empty()) {
    std::cerr << "hypdrift " << name << ": " << o.error << '\n';
    return o.status;
  }
  const std::string jsonPath = o.outPrefix + ".report.json";
  const std::string csvPath = o.outPrefix + ".checkpoints.csv";
  std::ofstream json(jsonPath);
  std::ofstream csv(csvPath);
  if (!json || !csv) {
    std::cerr << "hypdrift " << name << ": cannot write " << jsonPath << " or " << csvPath << '\n';
    return hypdrift::kExitConfigError;
  }
  json << o.report.dump(2) << '\n';
  o.table.write(csv);
  for (const auto& c : o.report["checks"])
    std::cout << (c["passed"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>() << ": "
              << c["lhs"].dump() << ' ' << c["relation"].get<std::string>() << ' ' << c["rhs"].dump()
              << " (slack " << c["slack"].dump() << ")\n";
  for (const auto& f : o.report["monteCarloFailures"]) std::cout << "MONTE CARLO FAILURE " << f.get<std::string>() << '\n';
  std::cout << "wrote " << jsonPath << " and " << csvPath << '\n';
  return o.status;
}
