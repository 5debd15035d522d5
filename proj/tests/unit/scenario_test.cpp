#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fractal/scenario/scenario.hpp"
#include "fractal/scenario/simulation.hpp"

namespace fs = std::filesystem;
using namespace fractal;
using scn::Diagnostic;

namespace {

const fs::path kRoot = FRACTAL_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream b;
  b << f.rdbuf();
  return b.str();
}

scn::Scenario bundled(const std::string& name) {
  auto r = scn::load_scenario((kRoot / "scenarios" / (name + ".scn")).string());
  EXPECT_TRUE(r.ok()) << name;
  return r.scenario;
}

std::string dump_at(const std::string& name, double t) {
  scn::Simulation s(bundled(name));
  s.run_until(t);
  EXPECT_TRUE(s.violations().empty());
  return s.dump_state();
}

// Lines of one host section ("store", "flows" or "groups").
std::vector<std::string> section(const std::string& dump, const std::string& host, const std::string& part) {
  std::vector<std::string> out;
  std::istringstream in(dump);
  std::string line;
  bool on = false;
  while (std::getline(in, line)) {
    if (line.rfind("## ", 0) == 0) {
      on = line.rfind("## host " + host + " ", 0) == 0 && line.ends_with(" " + part);
      continue;
    }
    if (on) out.push_back(line);
  }
  return out;
}

std::size_t buckets(const std::string& group_line) {
  std::size_t n = 0;
  for (auto p = group_line.find(" bucket="); p != std::string::npos; p = group_line.find(" bucket=", p + 1)) ++n;
  return n;
}

}  // namespace

TEST(ScenarioParse, InvertedThresholdsAreAnError) {
  auto r = scn::parse_scenario("guest.lo_rps = 1000\nguest.hi_rps = 100\n");
  ASSERT_FALSE(r.ok());
  bool found = false;
  for (const auto& d : r.diagnostics) found |= d.message == "thresholds inverted";
  EXPECT_TRUE(found);
}

TEST(ScenarioParse, UnknownKeyIsOnlyAWarning) {
  auto r = scn::parse_scenario("workload.schedule = 0:10\nguest.colour = blue\n");
  EXPECT_TRUE(r.ok());
  ASSERT_EQ(r.warnings(), 1u);
  EXPECT_EQ(r.diagnostics[0].str(), "warning: line 2: guest.colour: unknown key");
}

TEST(ScenarioParse, MalformedValueNamesLine) {
  auto r = scn::parse_scenario("# header\nrun.until = soon\n");
  ASSERT_EQ(r.errors(), 1u);
  EXPECT_EQ(r.diagnostics[0].line, 2);
  EXPECT_EQ(r.diagnostics[0].key, "run.until");
}

TEST(ScenarioParse, MissingEqualsIsAnError) {
  EXPECT_FALSE(scn::parse_scenario("run.until 10\n").ok());
}

TEST(ScenarioParse, DuplicateKeyWarns) {
  auto r = scn::parse_scenario("run.until = 10\nrun.until = 20\n");
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.warnings(), 1u);
  EXPECT_DOUBLE_EQ(r.scenario.until, 20.0);
}

TEST(ScenarioParse, ZeroCapacityRejected) {
  EXPECT_FALSE(scn::parse_scenario("net.core_mbps = 0\n").ok());
  EXPECT_FALSE(scn::parse_scenario("cluster.cores = 2\ncluster.reserved_cores = 2\n").ok());
  EXPECT_FALSE(scn::parse_scenario("net.cores = 1\nnet.reserved_cores = 2\n").ok());
}

TEST(ScenarioParse, FaultsAndRamp) {
  auto r = scn::parse_scenario(
      "workload.ramp = 0, 400, 400, 20, 3\n"
      "fault.a = 5 crash-replica\n"
      "fault.b = 6.5 reboot-replica 2\n"
      "fault.c = 7 fail-host 2\n");
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.scenario.workload.schedule.size(), 3u);
  EXPECT_DOUBLE_EQ(r.scenario.workload.schedule[2].start, 40.0);
  EXPECT_DOUBLE_EQ(r.scenario.workload.schedule[2].rps, 1200.0);
  ASSERT_EQ(r.scenario.faults.size(), 3u);
  EXPECT_EQ(r.scenario.faults[0].kind, scn::Fault::Kind::CrashReplica);
  EXPECT_EQ(r.scenario.faults[1].index, 2u);
  EXPECT_EQ(r.scenario.faults[2].host, 2u);
  EXPECT_FALSE(scn::parse_scenario("fault.x = 1 fail-host 9\n").ok());
  EXPECT_FALSE(scn::parse_scenario("fault.x = 1 explode\n").ok());
}

TEST(ScenarioParse, SeedAlsoSeedsFlowHashing) {
  auto r = scn::parse_scenario("run.seed = 42\n");
  EXPECT_EQ(r.scenario.cluster.hash_seed, 42u);
}

TEST(ScenarioParse, MissingFileIsAnError) {
  auto r = scn::load_scenario((kRoot / "scenarios" / "no-such.scn").string());
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.diagnostics[0].message.find("cannot open"), std::string::npos);
}

TEST(ScenarioParse, BundledScenariosHaveNoDiagnostics) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(kRoot / "scenarios")) {
    if (e.path().extension() != ".scn") continue;
    ++n;
    auto r = scn::load_scenario(e.path().string());
    EXPECT_TRUE(r.diagnostics.empty()) << e.path() << ": " << r.diagnostics.front().str();
  }
  EXPECT_GE(n, 5u);
}

TEST(ScenarioGolden, DumpsMatchFiles) {
  EXPECT_EQ(dump_at("scale-down", 0), slurp(kRoot / "tests/golden/scale-down.t0.dump"));
  EXPECT_EQ(dump_at("scale-down", 2), slurp(kRoot / "tests/golden/scale-down.t2.dump"));
  EXPECT_EQ(dump_at("scale-down", 90), slurp(kRoot / "tests/golden/scale-down.t90.dump"));
  EXPECT_EQ(dump_at("failover", 120), slurp(kRoot / "tests/golden/failover.t120.dump"));
}

TEST(ScenarioGolden, BeforeAnyReplicaOnlyFirstInstancePaths) {
  const auto d = dump_at("scale-down", 0);
  const auto store = section(d, "h1", "store");
  ASSERT_FALSE(store.empty());
  for (const auto& l : store) EXPECT_EQ(l.rfind("jitsu/vms/www/", 0), 0u) << l;
  EXPECT_TRUE(section(d, "h2", "store").empty());
}

TEST(ScenarioGolden, FirstReplicateAddsExactlyOneBucket) {
  const auto before = section(dump_at("scale-down", 0), "h1", "groups");
  const auto after = section(dump_at("scale-down", 2), "h1", "groups");
  ASSERT_EQ(before.size(), 1u);
  ASSERT_EQ(after.size(), 1u);
  EXPECT_EQ(buckets(after[0]), buckets(before[0]) + 1);
  EXPECT_EQ(after[0].substr(0, before[0].size()), before[0]);
}

TEST(ScenarioGolden, FullScaleDownLeavesNoReplicaSubtrees) {
  const auto d = dump_at("scale-down", 90);
  for (const auto& host : {"h1", "h2"})
    for (const auto& l : section(d, host, "store")) {
      EXPECT_EQ(l.find("jitsu/vms/02:"), std::string::npos) << l;
      EXPECT_EQ(l.find("jitsu/vm/"), std::string::npos) << l;
    }
  EXPECT_EQ(buckets(section(d, "h1", "groups").at(0)), 1u);
}

TEST(ScenarioRun, RepeatedRunsAreByteIdentical) {
  for (const auto* name : {"scale-down", "failover", "hysteresis"}) {
    std::ostringstream a, b;
    scn::Simulation s1(bundled(name), &a), s2(bundled(name), &b);
    s1.run();
    s2.run();
    EXPECT_EQ(a.str(), b.str()) << name;
    EXPECT_EQ(s1.dump_state(), s2.dump_state()) << name;
    EXPECT_EQ(s1.summary().str(), s2.summary().str()) << name;
  }
}

TEST(ScenarioRun, SeedChangesFlowsNotValidity) {
  auto sc = bundled("scale-down");
  sc.until = 10;
  std::ostringstream a, b;
  scn::Simulation s1(sc, &a);
  s1.run();
  sc.seed = sc.cluster.hash_seed = 99;
  std::vector<Diagnostic> diags;
  scn::check_ranges(sc, diags);
  EXPECT_TRUE(diags.empty());
  scn::Simulation s2(sc, &b);
  s2.run();
  EXPECT_NE(a.str(), b.str());
}

TEST(ScenarioRun, SummaryAccountsForEveryRequest) {
  scn::Simulation s(bundled("scale-down"));
  s.run();
  const auto sum = s.summary();
  EXPECT_EQ(sum.started, sum.completed + sum.failed + sum.in_flight);
  EXPECT_EQ(sum.final_replicas, 0u);
  EXPECT_GE(sum.peak_replicas, 1u);
  EXPECT_TRUE(sum.violations.empty());
  EXPECT_NE(sum.str().find("invariant_violations = 0\n"), std::string::npos);
}

TEST(ScenarioRun, CrashFaultIsCollected) {
  auto sc = bundled("scale-down");
  sc.until = 15;
  sc.faults.push_back({5.0, scn::Fault::Kind::CrashReplica, 0, 0});
  scn::Simulation s(sc);
  s.run_until(4.9);
  ASSERT_EQ(s.cluster().replica_count("www"), 1u);
  s.run();
  EXPECT_TRUE(s.violations().empty());
  EXPECT_GT(s.traffic().failed() + s.traffic().completed(), 0u);
}
