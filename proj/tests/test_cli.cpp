#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hypdrift/experiments.hpp"

using namespace hypdrift;

namespace {

std::string csvText(const CheckpointTable& t) {
  std::ostringstream os;
  t.write(os);
  return os.str();
}

std::string tempFile(const std::string& name, const std::string& body) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST(Config, ParsesTypedValues) {
  Config c = Config::parse({"P=inf", "Q=50", "p=0.8,0.9,1", "seed=18446744073709551615", "n=1e3"});
  EXPECT_EQ(c.polygon("P"), kIdealPolygon);
  EXPECT_EQ(c.integer("Q"), 50);
  EXPECT_EQ(c.reals("p", {}), (std::vector<double>{0.8, 0.9, 1.0}));
  EXPECT_EQ(c.seed(), 18446744073709551615ull);
  EXPECT_THROW(c.count("n"), ConfigError);
  EXPECT_EQ(c.real("missing", 2.5), 2.5);
  EXPECT_THROW(c.real("absent"), ConfigError);
}

TEST(Config, RejectsMalformedArguments) {
  EXPECT_THROW(Config::parse({"novalue"}), ConfigError);
  EXPECT_THROW(Config::parse({"=3"}), ConfigError);
  EXPECT_THROW(Config::parse({"n=1", "n=2"}), ConfigError);
  Config c = Config::parse({"x=nan", "y=3.5", "z=-1"});
  EXPECT_THROW(c.real("x"), ConfigError);
  EXPECT_THROW(c.integer("y"), ConfigError);
  EXPECT_THROW(c.count("z"), ConfigError);
  Config d = Config::parse({"used=1", "typo=2"});
  d.integer("used");
  EXPECT_THROW(d.finish(), ConfigError);
}

TEST(Config, FileOverriddenByCommandLine) {
  const std::string path = tempFile("hypdrift_cfg.txt", "# experiment\nQ = 10\nn=500  # short\n\nseed=4\n");
  Config c = Config::parse({"config=" + path, "n=700"});
  EXPECT_EQ(c.integer("Q"), 10);
  EXPECT_EQ(c.integer("n"), 700);
  EXPECT_EQ(c.seed(), 4u);
  EXPECT_THROW(Config::parse({"config=/nonexistent/cfg"}), ConfigError);
  const std::string bad = tempFile("hypdrift_cfg_bad.txt", "Q 10\n");
  EXPECT_THROW(Config::parse({"config=" + bad}), ConfigError);
}

TEST(Config, EchoOmitsWorkersAndOutput) {
  const Config c = Config::parse({"Q=10", "workers=4", "out=x"});
  const Json e = c.echo();
  EXPECT_TRUE(e.contains("Q"));
  EXPECT_FALSE(e.contains("workers"));
  EXPECT_FALSE(e.contains("out"));
}

TEST(Check, Relations) {
  EXPECT_TRUE((Check{"a", 1.0, 1.0, 0.0, "<="}.passed()));
  EXPECT_FALSE((Check{"a", 1.1, 1.0, 0.05, "<="}.passed()));
  EXPECT_TRUE((Check{"a", 0.9, 1.0, 0.1, ">="}.passed()));
  EXPECT_FALSE((Check{"a", 0.0, 0.0, 0.0, "<"}.passed()));
  EXPECT_TRUE((Check{"a", 1.0, 1.2, 0.2, "|-|<="}.passed()));
  EXPECT_FALSE((Check{"a", 1.0, 1.3, 0.2, "|-|<="}.passed()));
  EXPECT_FALSE((Check{"a", std::nan(""), 0.0, 1.0, "<="}.passed()));
  EXPECT_THROW((Check{"a", 0, 0, 0, "~"}.passed()), InvalidArgument);
}

TEST(Run, ExitStatuses) {
  EXPECT_EQ(runExperiment("tiling-speed", {"P=3", "Q=10", "n=500", "trials=5"}).status, kExitOk);
  EXPECT_EQ(runExperiment("no-such", {}).status, kExitConfigError);
  EXPECT_EQ(runExperiment("tiling-speed", {"P=3", "Q=6"}).status, kExitConfigError);
  EXPECT_EQ(runExperiment("tiling-speed", {"P=3"}).status, kExitConfigError);
  EXPECT_EQ(runExperiment("tiling-speed", {"P=3", "Q=10", "trials=1"}).status, kExitConfigError);
  EXPECT_EQ(runExperiment("canopy", {"lambda=2.5"}).status, kExitConfigError);
  EXPECT_EQ(runExperiment("lyapunov", {"n=10"}).status, kExitConfigError);
  EXPECT_EQ(runExperiment("lyapunov", {"law=coin", "k=3"}).status, kExitConfigError);
  // Threshold below log Q / r is a declared bound that cannot hold.
  EXPECT_EQ(runExperiment("dim-bound", {"P=3", "Q=10", "n=500", "trials=5", "threshold=0.1"}).status,
            kExitBoundFailure);
  const RunOutcome perc = runExperiment("perc-speed", {"P=3", "Q=10", "p=0.02,1", "n=300", "trials=20", "radius=5"});
  EXPECT_EQ(perc.status, kExitMonteCarloFailure);
  EXPECT_EQ(perc.report["monteCarloFailures"].size(), 1u);
  EXPECT_TRUE(perc.report["results"]["rows"][0].contains("error"));
  EXPECT_TRUE(perc.report["results"]["rows"][1].contains("estimate"));
}

TEST(Run, ByteIdenticalAcrossWorkers) {
  const std::vector<std::vector<std::string>> cases = {
      {"tiling-speed", "P=3", "Q=10", "n=2000", "trials=12"},
      {"perc-speed", "P=3", "Q=10", "p=0.9", "n=1000", "trials=12", "radius=8"},
      {"theorem-a", "P=4", "Q=8", "n=1000", "trials=12"},
      {"canopy", "n=5000", "trials=3", "xi_n=500", "xi_trials=8"},
      {"tree-speed", "d=5", "n=2000", "trials=6"},
      {"lyapunov", "law=random", "k=2", "n=1000", "trials=6", "samples=2000"}};
  for (const auto& c : cases) {
    std::vector<std::string> args(c.begin() + 1, c.end());
    auto w1 = args, w3 = args;
    w1.push_back("workers=1");
    w3.push_back("workers=3");
    const RunOutcome a = runExperiment(c[0], w1), b = runExperiment(c[0], w3);
    ASSERT_EQ(a.status, kExitOk) << c[0] << ": " << a.error;
    EXPECT_EQ(a.report.dump(2), b.report.dump(2)) << c[0];
    EXPECT_EQ(csvText(a.table), csvText(b.table)) << c[0];
  }
}

TEST(Run, ReportsRoundTripThroughRecheck) {
  const RunOutcome o = runExperiment("tiling-bounds", {"P=3", "Q=50", "p=0.8,1"});
  ASSERT_EQ(o.status, kExitOk) << o.error;
  const std::string path = tempFile("hypdrift_report.json", o.report.dump(2));
  Json back = readReport(path);
  EXPECT_EQ(back, o.report);
  EXPECT_TRUE(recheckReport(back));
  // Editing a number so that its check flips is detected.
  back["checks"][0]["lhs"] = 1e9;
  EXPECT_FALSE(recheckReport(back));
  const RunOutcome fail = runExperiment("dim-bound", {"P=3", "Q=10", "n=500", "trials=5", "threshold=0.1"});
  EXPECT_FALSE(fail.report["passed"].get<bool>());
  EXPECT_TRUE(recheckReport(readReport(tempFile("hypdrift_fail.json", fail.report.dump()))));
  EXPECT_THROW(readReport(tempFile("hypdrift_garbage.json", "{")), ParseError);
}

TEST(Run, ReportCarriesSeedAndEcho) {
  const RunOutcome o = runExperiment("tree-speed", {"d=3", "n=1000", "trials=4", "seed=9"});
  EXPECT_EQ(o.report["seed"].get<std::uint64_t>(), 9u);
  EXPECT_EQ(o.report["config"]["d"], "3");
  EXPECT_TRUE(runExperiment("hyperbolicity-check", {"P=3", "Q=10"}).report["seed"].is_null());
}

TEST(Csv, HeadersFollowColumns) {
  const RunOutcome tiling = runExperiment("tiling-speed", {"P=3", "Q=10", "n=100", "trials=2", "stride=10"});
  const std::string t = csvText(tiling.table);
  EXPECT_EQ(t.substr(0, t.find('\n')), "trial,step,distance");
  EXPECT_EQ(tiling.table.rows.size(), 2u * 11u);
  const RunOutcome canopy = runExperiment("canopy", {"n=1000", "trials=2", "stride=100", "xi_n=100", "xi_trials=4"});
  const std::string c = csvText(canopy.table);
  EXPECT_EQ(c.substr(0, c.find('\n')), "trial,step,distance,level");
  const RunOutcome ta = runExperiment("theorem-a", {"P=3", "Q=10", "n=640", "trials=3", "csv_trials=2"});
  const std::string x = csvText(ta.table);
  EXPECT_EQ(x.substr(0, x.find('\n')), "trial,step,distance,xi");
  EXPECT_EQ(ta.table.rows.size(), 2u * 11u);
  // The last lyapunov checkpoint is n log-norm scaled by sqrt(2), matching the direct estimate per trial.
  const RunOutcome ly = runExperiment("lyapunov", {"n=1000", "trials=3", "samples=2000", "stride=300"});
  const LyapunovEstimate direct = lyapDirect(coinLaw(), 1000, 3, 1);
  std::size_t last = 0;
  for (const auto& r : ly.table.rows)
    if (r.step == 1000) {
      EXPECT_NEAR(r.distance / std::numbers::sqrt2 / 1000, direct.perTrial[last++], 1e-12);
    }
  EXPECT_EQ(last, 3u);
}

TEST(Run, TilingBoundsRatioCheckOnlyForLargeQ) {
  const RunOutcome small = runExperiment("tiling-bounds", {"P=3", "Q=10"});
  ASSERT_EQ(small.status, kExitOk) << small.error;
  EXPECT_EQ(small.report["checks"].size(), 2u);
  EXPECT_TRUE(small.report["results"].contains("maxFSumOverQLogLogQ"));
  EXPECT_EQ(runExperiment("tiling-bounds", {"P=3", "Q=50"}).report["checks"].size(), 3u);
}

TEST(Run, DimBoundReportsField) {
  const RunOutcome o = runExperiment("dim-bound", {"P=3", "Q=200", "n=1000", "trials=10"});
  const Json& r = o.report["results"];
  EXPECT_NEAR(r["dimUpperBound"].get<double>(), std::log(200.0) / r["speed"].get<double>(), 1e-15);
  EXPECT_GE(r["dimUpperBound"].get<double>(), r["dimUpperBoundAtSideLength"].get<double>());
}
