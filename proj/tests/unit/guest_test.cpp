#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fractal/guest/web_service.hpp"
#include "fractal/orchestrator/jitsu.hpp"

using namespace fractal;
using namespace fractal::guest;
using orch::Verb;

namespace {

orch::ServiceSpec web() {
  orch::ServiceSpec s;
  s.name = "www";
  s.ip = sw::Ipv4::parse("10.0.0.18");
  s.mac = sw::MacAddr::parse("12:43:3d:a3:d3:02");
  return s;
}

struct Bench {
  sim::EventLoop loop;
  orch::Cluster cluster;
  GuestRuntime runtime;

  explicit Bench(orch::ClusterConfig cfg = {}, GuestOptions opts = {})
      : cluster(loop, std::move(cfg)), runtime(cluster, std::move(opts)) {
    cluster.start();
    cluster.boot_first_instance(web());
  }

  // Completions at `rps` on `instance` over [from, to), evenly spaced.
  void pump(const std::string& instance, double rps, double from, double to) {
    const auto n = static_cast<long>((to - from) * rps + 0.5);
    for (long i = 0; i < n; ++i) {
      loop.schedule(from + (i + 0.5) / rps, [this, instance] {
        if (auto* s = runtime.service(instance)) s->served(loop.now(), "GET /");
      });
    }
  }
  std::vector<Invocation> invocations_of(const std::string& instance, Verb verb) const {
    std::vector<Invocation> out;
    for (const auto& i : runtime.invocations())
      if (i.instance == instance && i.verb == verb) out.push_back(i);
    return out;
  }
  std::vector<std::string> replicas() const {
    std::vector<std::string> out;
    for (const auto& [name, vm] : cluster.vms())
      if (!vm.first_instance) out.push_back(name);
    return out;
  }
  void run_to(double t) { loop.run_until(t); }
};

GuestOptions manual() {
  GuestOptions o;
  o.scaling = false;
  return o;
}

}  // namespace

TEST(FractalResponseTest, ErrorCarriesMessage) {
  EXPECT_THROW(FractalResponse::error(""), Error);
  EXPECT_EQ(FractalResponse::error("no capacity").code(), Errc::NoCapacity);
  EXPECT_FALSE(FractalResponse::success().code());
}

TEST(ScalePolicyTest, Defaults) {
  ScalePolicy p;
  EXPECT_EQ(p.lo_rps, 100.0);
  EXPECT_EQ(p.hi_rps, 1000.0);
  EXPECT_EQ(p.poll_halt, 10);
  EXPECT_EQ(p.poll_period, 1.0);
  EXPECT_NO_THROW(p.validate());
  p.lo_rps = 1000;
  p.hi_rps = 100;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.poll_halt = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(RateMeterTest, TrailingWindow) {
  RateMeter m;
  EXPECT_EQ(m.rate(5.0, 1.0), 0.0);
  for (int i = 0; i < 500; ++i) m.record(4.0 + (i + 0.5) / 500.0);
  EXPECT_EQ(m.rate(5.0, 1.0), 500.0);
  EXPECT_EQ(m.rate(6.0, 1.0), 0.0);
  EXPECT_EQ(m.total(), 500u);
}

TEST(RateMeterTest, StraddlingRateChangeMatchesRecount) {
  std::mt19937_64 rng(7);
  std::vector<double> times;
  double t = 0.0;
  for (int i = 0; i < 5000; ++i) {
    t += t < 3.0 ? 0.004 : 0.001;  // 250 rps then 1000 rps
    times.push_back(t);
  }
  RateMeter m;
  std::size_t next = 0;
  for (double now = 0.25; now < t; now += 0.25) {
    while (next < times.size() && times[next] <= now) m.record(times[next++]);
    std::size_t oracle = 0;
    for (double x : times) oracle += x > now - 1.0 && x <= now;
    EXPECT_DOUBLE_EQ(m.rate(now, 1.0), static_cast<double>(oracle)) << now;
  }
}

TEST(FractalClientTest, ReplicateAnswersOnce) {
  Bench b({}, manual());
  int calls = 0;
  FractalResponse got = FractalResponse::error("unset");
  b.runtime.service("www")->client().replicate([&](const FractalResponse& r) {
    ++calls;
    got = r;
  });
  EXPECT_TRUE(b.runtime.service("www")->client().outstanding());
  b.run_to(1.0);
  EXPECT_EQ(calls, 1);
  EXPECT_TRUE(got.ok);
  EXPECT_EQ(b.replicas().size(), 1u);
  EXPECT_FALSE(b.runtime.service("www")->client().outstanding());
}

TEST(FractalClientTest, ClusterFull) {
  orch::ClusterConfig cfg;
  cfg.hosts = 1;
  cfg.cores = 3;
  Bench b(cfg, manual());
  std::optional<FractalResponse> got;
  b.runtime.service("www")->client().replicate([&](const FractalResponse& r) { got = r; });
  b.run_to(1.0);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->message, "no capacity");
}

TEST(FractalClientTest, SecondInvocationRejectedLocally) {
  Bench b({}, manual());
  std::size_t writes = 0;
  b.cluster.store(1).watch_key(orch::paths::request("www"), [&](const kv::WatchEvent&) { ++writes; });
  auto& c = b.runtime.service("www")->client();
  std::vector<FractalResponse> seen;
  c.replicate([&](const FractalResponse& r) { seen.push_back(r); });
  c.replicate([&](const FractalResponse& r) { seen.push_back(r); });
  EXPECT_EQ(writes, 1u);
  EXPECT_EQ(c.invocations(), 1u);
  b.run_to(1.0);
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0].code(), Errc::InvocationPending);
  EXPECT_TRUE(seen[1].ok);
}

TEST(FractalClientTest, HaltAndDieErrors) {
  Bench b({}, manual());
  auto& fc = b.runtime.service("www")->client();
  std::optional<FractalResponse> got;
  fc.halt([&](const FractalResponse& r) { got = r; });
  ASSERT_TRUE(got);
  EXPECT_EQ(got->code(), Errc::PermissionDenied);

  fc.replicate(nullptr);
  b.run_to(1.0);
  const auto r = b.replicas()[0];
  auto& rc = b.runtime.service(r)->client();
  got.reset();
  rc.die([&](const FractalResponse& x) { got = x; });
  EXPECT_EQ(got->code(), Errc::NotHalting);
}

TEST(FractalClientTest, HaltWhileAnotherHaltsIsRetry) {
  Bench b({}, manual());
  auto& fc = b.runtime.service("www")->client();
  fc.replicate(nullptr);
  b.run_to(1.0);
  fc.replicate(nullptr);
  b.run_to(2.0);
  const auto rs = b.replicas();
  ASSERT_EQ(rs.size(), 2u);
  std::optional<FractalResponse> a, c;
  b.runtime.service(rs[0])->client().halt([&](const FractalResponse& r) { a = r; });
  b.runtime.service(rs[1])->client().halt([&](const FractalResponse& r) { c = r; });
  EXPECT_TRUE(a->ok);
  EXPECT_EQ(c->code(), Errc::Retry);
}

TEST(FractalClientTest, DieHandlerNeedNotRun) {
  Bench b({}, manual());
  b.runtime.service("www")->client().replicate(nullptr);
  b.run_to(1.0);
  const auto r = b.replicas()[0];
  auto& rc = b.runtime.service(r)->client();
  rc.halt(nullptr);
  rc.die(nullptr);
  b.run_to(7.0);
  EXPECT_FALSE(b.cluster.vm(r));
  EXPECT_FALSE(b.runtime.service(r));
}

TEST(PollLoopTest, HighLoadReplicatesOnFirstPoll) {
  Bench b;
  b.pump("www", 1200, 0.0, 1.0);
  b.run_to(1.0);
  const auto reps = b.invocations_of("www", Verb::Replicate);
  ASSERT_EQ(reps.size(), 1u);
  EXPECT_DOUBLE_EQ(reps[0].time, 1.0);
  b.run_to(1.5);
  EXPECT_TRUE(b.runtime.invocations()[0].response->ok);
}

TEST(PollLoopTest, HysteresisBandIsSilent) {
  Bench b;
  b.pump("www", 500, 0.0, 60.0);
  b.run_to(60.0);
  EXPECT_TRUE(b.runtime.invocations().empty());
  EXPECT_EQ(b.runtime.service("www")->polls(), 60u);
}

TEST(PollLoopTest, RandomRatesInsideBandNeverInvoke) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> rate(101.0, 999.0);
  Bench b;
  for (int s = 0; s < 60; ++s) b.pump("www", rate(rng), s, s + 1);
  b.run_to(60.0);
  EXPECT_TRUE(b.runtime.invocations().empty());
}

TEST(PollLoopTest, QuietReplicaHaltsOnPollEleven) {
  Bench b;
  b.runtime.service("www")->client().replicate(nullptr);
  b.run_to(0.5);
  const auto r = b.replicas()[0];
  const double born = b.loop.now() - 0.5 + b.cluster.config().boot_delay;
  b.pump(r, 50, 0.5, 40.0);
  b.pump("www", 500, 0.5, 40.0);  // keeps the first instance in its band
  b.run_to(40.0);
  const auto halts = b.invocations_of(r, Verb::Halt);
  ASSERT_EQ(halts.size(), 1u);
  EXPECT_NEAR(halts[0].time - born, 11.0, 1e-9);
  ASSERT_TRUE(halts[0].response);
  EXPECT_TRUE(halts[0].response->ok);
  // merge_state runs between halt and die, and once more at destruction for
  // whatever was served while draining.
  const auto dies = b.invocations_of(r, Verb::Die);
  ASSERT_EQ(dies.size(), 1u);
  EXPECT_EQ(b.runtime.merges(), 2u);
  EXPECT_FALSE(b.cluster.vm(r));
}

TEST(PollLoopTest, FirstInstanceHaltRefusalResetsCounter) {
  Bench b;
  b.run_to(34.5);
  const auto halts = b.invocations_of("www", Verb::Halt);
  ASSERT_EQ(halts.size(), 3u);
  EXPECT_DOUBLE_EQ(halts[0].time, 11.0);
  EXPECT_DOUBLE_EQ(halts[1].time, 22.0);
  for (const auto& h : halts) EXPECT_EQ(h.response->code(), Errc::PermissionDenied);
  EXPECT_TRUE(b.runtime.service("www")->polling());
}

TEST(PollLoopTest, AtMostOneOutstandingInvocation) {
  orch::ClusterConfig cfg;
  cfg.boot_delay = 2.5;  // slower than the poll period
  Bench b(cfg);
  b.pump("www", 1500, 0.0, 10.0);
  b.run_to(10.0);
  const auto reps = b.invocations_of("www", Verb::Replicate);
  ASSERT_GE(reps.size(), 4u);
  std::size_t pending_rejects = 0;
  for (const auto& i : reps) pending_rejects += i.response && i.response->code() == Errc::InvocationPending;
  EXPECT_GT(pending_rejects, 0u);
  EXPECT_EQ(b.runtime.service("www")->client().invocations() + pending_rejects, reps.size());
}

TEST(AppLogTest, MergeIsSetUnion) {
  AppRepo first("www");
  const auto c = first.append(1.0, "c");
  auto replica = first.clone_for("r1");
  const auto a = replica->append(2.0, "a");
  const auto b = replica->append(3.0, "b");
  replica->merge_into(first);
  std::set<std::string> ids;
  for (const auto& e : first.entries()) ids.insert(e.id);
  EXPECT_EQ(ids, (std::set<std::string>{a, b, c}));
  EXPECT_EQ(first.store().history().back().parents.size(), 2u);
}

TEST(AppLogTest, EmptyReplicaLeavesFirstUnchanged) {
  AppRepo first("www");
  first.append(1.0, "c");
  auto replica = first.clone_for("r1");
  first.append(2.0, "d");
  const auto before = first.entries();
  replica->merge_into(first);
  EXPECT_EQ(first.entries(), before);
}

TEST(AppLogTest, InterleavedMergesKeepEverything) {
  AppRepo first("www");
  auto r1 = first.clone_for("r1");
  first.append(0.5, "x");
  auto r2 = first.clone_for("r2");
  r1->append(1.0, "p");
  r2->append(1.5, "q");
  first.append(2.0, "y");
  r1->merge_into(first);
  r2->merge_into(first);
  EXPECT_EQ(first.size(), 4u);
}

TEST(GuestRuntimeTest, ScaleDownMergesLogsBack) {
  GuestOptions o;
  o.log_requests = true;
  Bench b({}, o);
  b.pump("www", 1500, 0.0, 1.0);
  b.run_to(1.5);
  ASSERT_EQ(b.replicas().size(), 1u);
  const auto r = b.replicas()[0];
  b.pump(r, 30, 1.5, 3.5);
  b.run_to(30.0);
  EXPECT_FALSE(b.cluster.vm(r));
  std::set<std::string> expect(b.runtime.appended().begin(), b.runtime.appended().end());
  std::set<std::string> have;
  for (const auto& e : b.runtime.repo("www")->entries()) have.insert(e.id);
  EXPECT_EQ(have, expect);
  EXPECT_EQ(expect.size(), 1500u + 60u);
}
