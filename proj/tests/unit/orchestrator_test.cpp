#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fractal/common/error.hpp"
#include "fractal/kvstore/dump.hpp"
#include "fractal/orchestrator/cluster.hpp"
#include "fractal/orchestrator/jitsu.hpp"
#include "support/oracles.hpp"

using namespace fractal;
using namespace fractal::orch;
using fractal::testing::chi_square_p;

namespace {

ServiceSpec web(HostId host = 1) {
  ServiceSpec s;
  s.name = "www";
  s.host = host;
  s.ip = sw::Ipv4::parse("10.0.0.18");
  s.mac = sw::MacAddr::parse("12:43:3d:a3:d3:02");
  return s;
}

sw::FlowKey client_flow(std::uint32_t n) {
  sw::FlowKey k;
  k.src_ip = sw::Ipv4{(172u << 24) | (16u << 16) | (n >> 8 & 0xff00) | (n & 0xff)};
  k.dst_ip = sw::Ipv4::parse("10.0.0.18");
  k.src_port = static_cast<std::uint16_t>(10000 + (n >> 8) % 50000);
  k.dst_port = 80;
  return k;
}

struct Bench {
  sim::EventLoop loop;
  Cluster cluster;

  explicit Bench(ClusterConfig cfg = {}) : cluster(loop, std::move(cfg)) { cluster.start(); }

  void invoke(const std::string& inst, const std::string& value) {
    const VmInfo* vm = cluster.vm(inst);
    ASSERT_NE(vm, nullptr) << inst;
    cluster.store(vm->host).put(paths::request(inst), value, inst);
  }
  std::string response(const std::string& inst, HostId host) {
    return cluster.store(host).get(paths::response(inst)).value_or("<none>");
  }
  void settle(double dt = 0.1) { loop.run_until(loop.now() + dt); }

  std::vector<std::string> replicas() const {
    std::vector<std::string> out;
    for (const auto& [name, vm] : cluster.vms())
      if (!vm.first_instance) out.push_back(name);
    return out;
  }
  // Replicates `n` times through the first instance, one at a time.
  void grow(std::size_t n, const std::string& fi = "www") {
    for (std::size_t i = 0; i < n; ++i) {
      invoke(fi, "[S(replicate); S(" + cluster.vm(fi)->service + ")]");
      settle();
      ASSERT_EQ(response(fi, cluster.vm(fi)->host), "[S(success);]");
    }
  }
  const sw::GroupEntry& group(const std::string& svc = "www") {
    const Service* s = cluster.service(svc);
    return *cluster.fabric().at(s->host).group(s->app_id);
  }
};

std::string lines_under(const kv::Store& store, const std::string& prefix) {
  std::istringstream in(kv::dump(store));
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) out += line + "\n";
  return out;
}

struct Recorder : VmObserver {
  std::vector<std::pair<std::string, StopReason>> stopped;
  std::vector<sw::FlowKey> expired;
  std::vector<std::string> rebooted;
  void on_vm_stopped(const VmInfo& vm, StopReason r) override { stopped.emplace_back(vm.name, r); }
  void on_flows_expired(const std::vector<sw::FlowKey>& keys) override {
    expired.insert(expired.end(), keys.begin(), keys.end());
  }
  void on_vm_rebooted(const VmInfo& vm) override { rebooted.push_back(vm.name); }
};

}  // namespace

TEST(RecordsTest, RemoteReplicateRequestEncoding) {
  RequestRecord r;
  r.verb = Verb::Replicate;
  r.target = "TARGET";
  r.remote = RemoteBootParams{"0a000013", 300, "shutdown", "IMAGE.xen"};
  EXPECT_EQ(r.encode(), "[S(replicate); S(TARGET); I(0a000013); I(300); S(shutdown); S(IMAGE.xen)]");
  const auto back = RequestRecord::parse(r.encode());
  EXPECT_EQ(back.target, "TARGET");
  ASSERT_TRUE(back.remote);
  EXPECT_EQ(back.remote->app_id, "0a000013");
  EXPECT_EQ(back.remote->ttl, 300u);
  EXPECT_EQ(back.remote->image, "IMAGE.xen");
}

TEST(RecordsTest, LocalRequestAndResponses) {
  EXPECT_EQ((RequestRecord{Verb::Replicate, "TARGET", {}}).encode(), "[S(replicate); S(TARGET)]");
  EXPECT_EQ(Response::success().encode(), "[S(success);]");
  EXPECT_EQ(Response::error("MESSAGE").encode(), "[S(error); S(MESSAGE)]");
  EXPECT_TRUE(Response::parse("[S(success);]").ok);
  EXPECT_EQ(Response::parse("[S(error); S(no capacity)]").message, "no capacity");
}

TEST(RecordsTest, ParseRejectsMalformedRequests) {
  for (const char* bad : {"[S(explode); S(x)]", "[S(replicate)]", "[S(halt); S(x); S(y)]",
                          "[S(replicate); S(T); I(zz); I(300); S(shutdown); S(i)]",
                          "[S(halt); S(T); I(0a000013); I(300); S(shutdown); S(i)]",
                          "[I(replicate); S(T)]", "replicate"}) {
    try {
      RequestRecord::parse(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::Malformed) << bad;
    }
  }
}

TEST(RecordsTest, WireMessagesRoundTrip) {
  EXPECT_EQ(wire_message(Errc::NoCapacity), "no capacity");
  EXPECT_EQ(wire_message(Errc::Retry), "retry");
  for (Errc c : all_errc()) EXPECT_EQ(errc_from_wire(wire_message(c)), c);
  EXPECT_FALSE(errc_from_wire("gibberish"));
}

TEST(RecordsTest, StateMachineEdges) {
  const std::set<std::pair<VmState, VmState>> allowed{
      {VmState::Provisioning, VmState::Running}, {VmState::Provisioning, VmState::Dead},
      {VmState::Running, VmState::Halting},      {VmState::Running, VmState::Dead},
      {VmState::Halting, VmState::Dead}};
  const VmState all[] = {VmState::Provisioning, VmState::Running, VmState::Halting, VmState::Dead};
  for (auto a : all)
    for (auto b : all) EXPECT_EQ(transition_allowed(a, b), allowed.count({a, b}) > 0);
}

TEST(RecordsTest, ValidateRejectsMixedFields) {
  VmRecord r;
  r.name = "x";
  r.first_instance = false;
  r.first_instance_host = "h1";
  r.mac = "12:43:3d:a3:d3:02";
  EXPECT_THROW(r.to_mutations(), Error);
  r.mac.clear();
  EXPECT_NO_THROW(r.to_mutations());
}

TEST(HypervisorTest, DomIdsNeverReused) {
  HypervisorRegistry reg(16);
  EXPECT_EQ(reg.create("a"), 16u);
  EXPECT_EQ(reg.create("b"), 17u);
  EXPECT_TRUE(reg.destroy(16));
  EXPECT_EQ(reg.create("c"), 18u);
  EXPECT_EQ(reg.reboot("b"), 19u);
  EXPECT_EQ(reg.dom_of("b"), 19u);
  EXPECT_FALSE(reg.find(17));
  reg.skip_to(23);
  EXPECT_EQ(reg.create("d"), 23u);
  EXPECT_THROW(reg.reboot("zzz"), Error);
}

TEST(HeartbeatTest, DeclaredOnceAfterTimeout) {
  HeartbeatTable hb(2.0, 2);
  hb.track("h2", 0.0);
  EXPECT_TRUE(hb.beat("h2", 10.0));
  for (double t = 11; t <= 14; t += 1) EXPECT_TRUE(hb.check(t).empty()) << t;
  EXPECT_EQ(hb.check(15.0), std::vector<std::string>{"h2"});
  EXPECT_TRUE(hb.check(16.0).empty());
  EXPECT_TRUE(hb.failed("h2"));
}

TEST(HeartbeatTest, RegularBeatsNeverSuspected) {
  HeartbeatTable hb(2.0, 2);
  hb.track("h2", 0.0);
  for (double t = 1; t < 100; t += 1) {
    if (static_cast<int>(t) % 2 == 0) hb.beat("h2", t);
    EXPECT_TRUE(hb.check(t).empty());
  }
}

TEST(HeartbeatTest, UnknownHostIgnored) {
  HeartbeatTable hb(2.0, 2);
  EXPECT_FALSE(hb.beat("ghost", 1.0));
  EXPECT_FALSE(hb.tracked("ghost"));
  EXPECT_TRUE(hb.check(100.0).empty());
}

TEST(PlacementTest, DefaultPolicy) {
  PlacementView v{1, {{1, 2, 4, true}, {2, 3, 4, true}, {3, 1, 4, true}}};
  EXPECT_EQ(local_first_placement(v), 1u);
  v.hosts[0].vms = 4;
  EXPECT_EQ(local_first_placement(v), 3u);
  v.hosts[2].vms = 3;
  EXPECT_EQ(local_first_placement(v), 2u);  // tie goes to the lower id
  v.hosts[1].alive = false;
  EXPECT_EQ(local_first_placement(v), 3u);
  v.hosts[2].vms = 4;
  EXPECT_FALSE(local_first_placement(v));
}

TEST(ClusterTest, FirstInstanceRecordLayout) {
  ClusterConfig cfg;
  cfg.hosts = 2;
  cfg.host_names = {"HOSTNAME", "TARGET"};
  cfg.first_dom_id = 16;
  Bench b(cfg);
  auto spec = web();
  spec.name = "HOSTNAME";
  spec.extra_ips = {sw::Ipv4::parse("10.0.1.18")};
  spec.dns_name = "service.name";
  b.cluster.boot_first_instance(spec);
  EXPECT_EQ(lines_under(b.cluster.store(1), "jitsu/vms/HOSTNAME/"),
            "jitsu/vms/HOSTNAME/app-id=0a000012\n"
            "jitsu/vms/HOSTNAME/dns/service.name/ttl=500\n"
            "jitsu/vms/HOSTNAME/dom-id=16\n"
            "jitsu/vms/HOSTNAME/first-instance=true\n"
            "jitsu/vms/HOSTNAME/ips/vif16.1=10.0.0.18\n"
            "jitsu/vms/HOSTNAME/ips/vif16.2=10.0.1.18\n"
            "jitsu/vms/HOSTNAME/mac=12:43:3d:a3:d3:02\n"
            "jitsu/vms/HOSTNAME/state=running\n"
            "jitsu/vms/HOSTNAME/stop-mode=shutdown\n");

  b.cluster.registry(1).skip_to(23);
  b.invoke("HOSTNAME", "[S(replicate); S(HOSTNAME)]");
  b.settle();
  EXPECT_EQ(b.response("HOSTNAME", 1), "[S(success);]");
  ASSERT_EQ(b.replicas().size(), 1u);
  const auto name = b.replicas()[0];
  EXPECT_EQ(lines_under(b.cluster.store(1), "jitsu/vms/" + name + "/"),
            "jitsu/vms/" + name + "/app-id=0a000012\n" +
            "jitsu/vms/" + name + "/dom-id=23\n" +
            "jitsu/vms/" + name + "/first-instance=false\n" +
            "jitsu/vms/" + name + "/first-instance-host=HOSTNAME\n" +
            "jitsu/vms/" + name + "/ip=10.0.1.200\n" +
            "jitsu/vms/" + name + "/state=running\n" +
            "jitsu/vms/" + name + "/stop-mode=shutdown\n");
  EXPECT_EQ(b.cluster.store(1).get(paths::initial_xs(name)), "");
  EXPECT_EQ(b.cluster.store(1).get(paths::ttl(name)), "300");
  EXPECT_TRUE(b.cluster.check_invariants().empty());
}

TEST(ClusterTest, ResponseWatchFiresForRequester) {
  Bench b;
  b.cluster.boot_first_instance(web());
  std::vector<std::string> seen;
  b.cluster.store(1).watch_key(paths::response("www"),
                               [&](const kv::WatchEvent& ev) { seen.push_back(*ev.value); });
  b.invoke("www", "[S(replicate); S(www)]");
  b.settle();
  EXPECT_EQ(seen, std::vector<std::string>{"[S(success);]"});
}

TEST(ClusterTest, LocalBootProgramsLocalBucket) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.grow(1);
  const auto& r = *b.cluster.vm(b.replicas()[0]);
  EXPECT_EQ(r.host, 1u);
  EXPECT_FALSE(r.tunnel);
  const auto& g = b.group();
  ASSERT_EQ(g.buckets.size(), 2u);
  EXPECT_EQ(sw::actions_str(g.buckets[1].actions),
            "mod_dst_ip:" + r.ip.str() + ";mod_dst_mac:" + r.mac.str() + ";output:" +
                std::to_string(r.vif_port));
  EXPECT_TRUE(b.cluster.fabric().at(1).tunnels().empty());
  EXPECT_EQ(b.cluster.replica_count("www"), 1u);
}

TEST(ClusterTest, RemoteBootWritesRequestIntoTargetStore) {
  ClusterConfig cfg;
  cfg.hosts = 2;
  cfg.host_names = {"HOSTNAME", "TARGET"};
  cfg.cores = 3;  // one slot per host
  Bench b(cfg);
  auto spec = web();
  spec.app_id = 0x0a000013;
  spec.image = "IMAGE.xen";
  b.cluster.boot_first_instance(spec);
  std::vector<std::string> requests;
  b.cluster.store(2).watch_key(paths::request("HOSTNAME"),
                               [&](const kv::WatchEvent& ev) { requests.push_back(*ev.value); });
  b.invoke("www", "[S(replicate); S(www)]");
  b.settle();
  EXPECT_EQ(requests, std::vector<std::string>{
                          "[S(replicate); S(TARGET); I(0a000013); I(300); S(shutdown); S(IMAGE.xen)]"});
  EXPECT_EQ(b.response("HOSTNAME", 2), "[S(success);]");
  EXPECT_EQ(b.response("www", 1), "[S(success);]");

  ASSERT_EQ(b.replicas().size(), 1u);
  const auto& r = *b.cluster.vm(b.replicas()[0]);
  EXPECT_EQ(r.host, 2u);
  EXPECT_EQ(b.cluster.store(2).get(paths::initial_xs(r.name)), "HOSTNAME");
  EXPECT_EQ(b.cluster.store(2).get(paths::vm(r.name) / "first-instance-host"), "HOSTNAME");
  ASSERT_TRUE(r.tunnel);
  EXPECT_EQ(b.group().buckets[1].output_port(), *r.tunnel);
  const auto flows2 = b.cluster.fabric().at(2).dump_flows();
  EXPECT_NE(flows2.find("match=in_port=" + std::to_string(*r.tunnel_far) +
                        " actions=output:" + std::to_string(r.vif_port)),
            std::string::npos)
      << flows2;
  EXPECT_NE(flows2.find("actions=mod_src_ip:10.0.0.18;output:1"), std::string::npos) << flows2;
  EXPECT_TRUE(b.cluster.check_invariants().empty());
}

TEST(ClusterTest, RemoteReplicaTrafficPath) {
  ClusterConfig cfg;
  cfg.hosts = 2;
  cfg.cores = 3;
  Bench b(cfg);
  b.cluster.boot_first_instance(web());
  b.grow(1);
  const auto& r = *b.cluster.vm(b.replicas()[0]);
  auto& f = b.cluster.fabric();
  // Find a flow steered to the remote bucket and follow it through the tunnel.
  for (std::uint32_t n = 0; n < 100; ++n) {
    const auto key = client_flow(n);
    auto d = f.at(1).classify(key, sw::kUplinkPort);
    ASSERT_TRUE(d.forwarded());
    if (d.egress != *r.tunnel) continue;
    EXPECT_EQ(d.key.dst_ip, r.ip);
    auto far = f.peer(1, d.egress);
    ASSERT_TRUE(far);
    auto d2 = f.at(2).classify(d.key, far->port);
    EXPECT_EQ(d2.egress, r.vif_port);
    // Response leaves with the service address as its source.
    sw::FlowKey reply{r.ip, key.src_ip, sw::kProtoTcp, 80, key.src_port};
    auto out = f.at(2).classify(reply, r.vif_port);
    EXPECT_EQ(out.egress, sw::kUplinkPort);
    EXPECT_EQ(out.key.src_ip, sw::Ipv4::parse("10.0.0.18"));
    // Traffic from the replica to anything else is not spoofed.
    sw::FlowKey other{r.ip, key.src_ip, sw::kProtoTcp, 4444, 53};
    EXPECT_EQ(f.at(2).classify(other, r.vif_port).key.src_ip, r.ip);
    return;
  }
  FAIL() << "no flow reached the remote replica";
}

TEST(ClusterTest, MalformedRequestGetsErrorResponse) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.invoke("www", "[S(explode); S(www)]");
  EXPECT_EQ(b.response("www", 1), "[S(error); S(malformed)]");
  b.invoke("www", "garbage");
  EXPECT_EQ(b.response("www", 1), "[S(error); S(malformed)]");
}

TEST(ClusterTest, OneOutstandingRequestPerRequester) {
  Bench b;
  b.cluster.boot_first_instance(web());
  std::vector<std::string> seen;
  b.cluster.store(1).watch_key(paths::response("www"),
                               [&](const kv::WatchEvent& ev) { seen.push_back(*ev.value); });
  b.invoke("www", "[S(replicate); S(www)]");
  b.invoke("www", "[S(replicate); S(www)]");
  b.settle();
  EXPECT_EQ(seen, (std::vector<std::string>{"[S(error); S(invocation pending)]", "[S(success);]"}));
  EXPECT_EQ(b.cluster.replica_count("www"), 1u);
}

TEST(ClusterTest, NoCapacityAnywhere) {
  ClusterConfig cfg;
  cfg.hosts = 1;
  cfg.cores = 3;
  Bench b(cfg);
  b.cluster.boot_first_instance(web());
  b.invoke("www", "[S(replicate); S(www)]");
  b.settle();
  EXPECT_EQ(b.response("www", 1), "[S(error); S(no capacity)]");
  EXPECT_TRUE(b.replicas().empty());
}

TEST(ClusterTest, OtherServicesCannotBeReplicated) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.invoke("www", "[S(replicate); S(mail)]");
  EXPECT_EQ(b.response("www", 1), "[S(error); S(permission denied)]");
}

TEST(ClusterTest, StrangersCannotWriteRequestKeys) {
  Bench b;
  b.cluster.boot_first_instance(web());
  EXPECT_THROW(b.cluster.store(1).put(paths::request("www"), "[S(replicate); S(www)]", "mallory"),
               Error);
  EXPECT_FALSE(b.cluster.store(1).get(paths::response("www")));
}

TEST(ClusterTest, ReplicasMayReplicateButBucketsStayAtTheHub) {
  ClusterConfig cfg;
  cfg.hosts = 2;
  cfg.cores = 4;  // two slots per host
  Bench b(cfg);
  b.cluster.boot_first_instance(web());
  b.cluster.set_placement([](const PlacementView&) -> std::optional<HostId> { return 2; });
  b.grow(1);
  const auto first = b.replicas()[0];
  b.invoke(first, "[S(replicate); S(www)]");
  b.settle();
  EXPECT_EQ(b.response(first, 2), "[S(success);]");
  EXPECT_EQ(b.replicas().size(), 2u);
  EXPECT_EQ(b.group().buckets.size(), 3u);
  EXPECT_FALSE(b.cluster.fabric().at(2).group(b.cluster.service("www")->app_id));
  EXPECT_TRUE(b.cluster.check_invariants().empty());
}

TEST(LifecycleTest, HaltDrainsBucket) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.grow(1);
  const auto r = b.replicas()[0];
  b.invoke(r, "[S(halt); S(" + r + ")]");
  EXPECT_EQ(b.response(r, 1), "[S(success);]");
  EXPECT_EQ(b.cluster.vm(r)->state, VmState::Halting);
  EXPECT_EQ(b.cluster.store(1).get(paths::vm(r) / "state"), "halting");
  EXPECT_EQ(b.group().find(*b.cluster.vm(r)->bucket)->weight, 0u);
  b.invoke(r, "[S(halt); S(" + r + ")]");
  EXPECT_EQ(b.response(r, 1), "[S(error); S(not running)]");
}

TEST(LifecycleTest, FirstInstanceNeverHalts) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.invoke("www", "[S(halt); S(www)]");
  EXPECT_EQ(b.response("www", 1), "[S(error); S(permission denied)]");
  b.invoke("www", "[S(die); S(www)]");
  EXPECT_EQ(b.response("www", 1), "[S(error); S(permission denied)]");
  b.settle(10);
  EXPECT_EQ(b.cluster.vm("www")->state, VmState::Running);
  EXPECT_EQ(b.group().buckets[0].weight, 1u);
}

TEST(LifecycleTest, HaltsAreSerializedPerService) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.grow(2);
  const auto rs = b.replicas();
  b.invoke(rs[0], "[S(halt); S(" + rs[0] + ")]");
  b.invoke(rs[1], "[S(halt); S(" + rs[1] + ")]");
  EXPECT_EQ(b.response(rs[0], 1), "[S(success);]");
  EXPECT_EQ(b.response(rs[1], 1), "[S(error); S(retry)]");
  EXPECT_EQ(b.cluster.vm(rs[1])->state, VmState::Running);
}

TEST(LifecycleTest, DieRequiresHalt) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.grow(1);
  const auto r = b.replicas()[0];
  b.invoke(r, "[S(die); S(" + r + ")]");
  EXPECT_EQ(b.response(r, 1), "[S(error); S(not halting)]");
  EXPECT_EQ(b.cluster.vm(r)->state, VmState::Running);
}

TEST(LifecycleTest, DieDestroysWithinFiveSeconds) {
  Bench b;
  Recorder rec;
  b.cluster.add_observer(&rec);
  b.cluster.boot_first_instance(web());
  b.grow(1);
  const auto r = b.replicas()[0];
  const auto bucket = *b.cluster.vm(r)->bucket;
  b.invoke(r, "[S(halt); S(" + r + ")]");
  b.invoke(r, "[S(die); S(" + r + ")]");
  const double died = b.loop.now();
  while (b.cluster.vm(r) && b.loop.now() < died + 10) b.settle(0.05);
  EXPECT_FALSE(b.cluster.vm(r));
  EXPECT_LE(b.loop.now() - died, 5.0);
  EXPECT_FALSE(b.cluster.store(1).contains_subtree(paths::vm(r)));
  EXPECT_FALSE(b.cluster.store(1).contains_subtree(paths::vm_aux(r)));
  EXPECT_FALSE(b.group().find(bucket));
  EXPECT_FALSE(b.cluster.registry(1).dom_of(r));
  ASSERT_EQ(rec.stopped.size(), 1u);
  EXPECT_EQ(rec.stopped[0].second, StopReason::Destroyed);
  // The dead state was committed before the subtree went away.
  bool saw_dead = false;
  for (const auto& c : b.cluster.store(1).history())
    for (const auto& p : c.changed) saw_dead |= p == paths::vm(r) / "state";
  EXPECT_TRUE(saw_dead);
  EXPECT_TRUE(b.cluster.check_invariants().empty());
}

TEST(LifecycleTest, PinnedFlowsDeferDestruction) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.grow(1);
  const auto r = b.replicas()[0];
  const auto bucket = *b.cluster.vm(r)->bucket;
  auto& sw1 = b.cluster.fabric().at(1);
  std::optional<sw::FlowKey> pinned;
  for (std::uint32_t n = 0; n < 100 && !pinned; ++n) {
    auto d = sw1.classify(client_flow(n), sw::kUplinkPort);
    if (d.bucket == bucket) pinned = client_flow(n);
  }
  ASSERT_TRUE(pinned);
  b.invoke(r, "[S(halt); S(" + r + ")]");
  b.invoke(r, "[S(die); S(" + r + ")]");
  b.settle(10);
  ASSERT_TRUE(b.cluster.vm(r));
  auto again = sw1.classify(*pinned, sw::kUplinkPort);
  EXPECT_TRUE(again.pinned_hit);
  EXPECT_EQ(again.bucket, bucket);
  // No new flow lands on the halting replica.
  for (std::uint32_t n = 1000; n < 2000; ++n)
    EXPECT_NE(sw1.classify(client_flow(n), sw::kUplinkPort).bucket, bucket);
  for (std::uint32_t n = 1000; n < 2000; ++n) sw1.expire_flow(client_flow(n));
  sw1.expire_flow(*pinned);
  b.settle(1.01);
  EXPECT_FALSE(b.cluster.vm(r));
  EXPECT_FALSE(b.group().find(bucket));
}

TEST(RecoveryTest, CrashIsCollectedOnce) {
  Bench b;
  Recorder rec;
  b.cluster.add_observer(&rec);
  b.cluster.boot_first_instance(web());
  b.grow(1);
  const auto r = b.replicas()[0];
  const auto bucket = *b.cluster.vm(r)->bucket;
  auto& sw1 = b.cluster.fabric().at(1);
  std::vector<sw::FlowKey> on_r;
  for (std::uint32_t n = 0; n < 200; ++n)
    if (sw1.classify(client_flow(n), sw::kUplinkPort).bucket == bucket) on_r.push_back(client_flow(n));
  ASSERT_FALSE(on_r.empty());
  b.cluster.crash_vm(r);
  b.settle(b.cluster.config().monitor_period);
  EXPECT_FALSE(b.cluster.vm(r));
  EXPECT_FALSE(b.cluster.store(1).contains_subtree(paths::vm(r)));
  EXPECT_FALSE(b.group().find(bucket));
  EXPECT_EQ(std::set<sw::FlowKey>(rec.expired.begin(), rec.expired.end()),
            std::set<sw::FlowKey>(on_r.begin(), on_r.end()));
  b.settle(5);
  std::size_t collected = 0;
  for (const auto& a : b.cluster.jitsu(1).actions())
    collected += a.kind == RecoveryAction::Kind::CrashCollected;
  EXPECT_EQ(collected, 1u);
  EXPECT_EQ(rec.stopped.size(), 1u);
  EXPECT_TRUE(b.cluster.check_invariants().empty());
}

TEST(RecoveryTest, RebootIsReconciled) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.cluster.registry(1).skip_to(23);
  b.grow(1);
  const auto r = b.replicas()[0];
  ASSERT_EQ(b.cluster.vm(r)->dom_id, 23u);
  b.cluster.reboot_vm(r);
  auto acts = b.cluster.jitsu(1).monitor_tick();
  ASSERT_EQ(acts.size(), 1u);
  EXPECT_EQ(acts[0].kind, RecoveryAction::Kind::Reconciled);
  EXPECT_EQ(acts[0].detail, "dom 23 -> 24");
  const auto& vm = *b.cluster.vm(r);
  EXPECT_EQ(vm.dom_id, 24u);
  EXPECT_EQ(b.group().find(*vm.bucket)->output_port(), Cluster::vif_port(24));
  EXPECT_EQ(b.cluster.store(1).get(paths::vm(r) / "dom-id"), "24");
  EXPECT_FALSE(b.cluster.fabric().at(1).has_port(Cluster::vif_port(23)));
  EXPECT_TRUE(b.cluster.jitsu(1).monitor_tick().empty());
}

TEST(RecoveryTest, FirstInstanceRebootRewritesInterfaces) {
  ClusterConfig cfg;
  cfg.first_dom_id = 16;
  Bench b(cfg);
  b.cluster.boot_first_instance(web());
  b.cluster.reboot_vm("www");
  b.cluster.jitsu(1).monitor_tick();
  EXPECT_EQ(b.cluster.store(1).get(paths::vm("www") / "dom-id"), "17");
  EXPECT_EQ(b.cluster.store(1).get(paths::vm("www") / "ips" / "vif17.1"), "10.0.0.18");
  EXPECT_FALSE(b.cluster.store(1).get(paths::vm("www") / "ips" / "vif16.1"));
  EXPECT_EQ(b.group().buckets[0].output_port(), Cluster::vif_port(17));
}

TEST(RecoveryTest, NoAnomaliesNoActions) {
  Bench b;
  b.cluster.boot_first_instance(web());
  b.grow(2);
  EXPECT_TRUE(b.cluster.jitsu(1).monitor_tick().empty());
}

TEST(RecoveryTest, SilentHostLosesItsBuckets) {
  ClusterConfig cfg;
  cfg.hosts = 3;
  cfg.cores = 4;
  Bench b(cfg);
  b.cluster.boot_first_instance(web());
  b.grow(1);  // local, fills host 1
  b.cluster.set_placement([](const PlacementView&) -> std::optional<HostId> { return 2; });
  b.grow(2);
  ASSERT_EQ(b.group().buckets.size(), 4u);
  b.settle(7.3);
  auto& j1 = b.cluster.jitsu(1);
  const auto last = j1.heartbeats().last("h2");
  ASSERT_TRUE(last);
  EXPECT_GT(*last, 5.0);
  b.cluster.fail_host(2);
  double declared = -1;
  while (declared < 0 && b.loop.now() < 30) {
    b.settle(0.05);
    for (const auto& a : j1.actions())
      if (a.kind == RecoveryAction::Kind::HostFailed) declared = b.loop.now();
  }
  ASSERT_GT(declared, 0);
  EXPECT_LE(declared - *last, cfg.heartbeat_interval * cfg.heartbeat_multiplier + cfg.monitor_period);
  std::size_t removed = 0;
  for (const auto& a : j1.actions()) removed += a.kind == RecoveryAction::Kind::BucketRemoved;
  EXPECT_EQ(removed, 2u);
  ASSERT_EQ(b.group().buckets.size(), 2u);
  EXPECT_EQ(b.cluster.replica_count("www"), 1u);
  EXPECT_TRUE(b.cluster.check_invariants().empty());

  // Remaining instances absorb new flows evenly.
  std::map<sw::BucketId, std::size_t> counts;
  for (std::uint32_t n = 0; n < 30000; ++n)
    counts[*b.cluster.fabric().at(1).classify(client_flow(n), sw::kUplinkPort).bucket]++;
  ASSERT_EQ(counts.size(), 2u);
  std::vector<std::size_t> obs;
  for (auto [_, c] : counts) obs.push_back(c);
  EXPECT_GT(chi_square_p(obs, {0.5, 0.5}), 0.01);
}

TEST(RecoveryTest, HostWithoutReplicasFailsQuietly) {
  ClusterConfig cfg;
  cfg.hosts = 3;
  Bench b(cfg);
  b.cluster.boot_first_instance(web());
  b.grow(1);
  b.cluster.fail_host(3);
  b.settle(10);
  for (const auto& a : b.cluster.jitsu(1).actions())
    EXPECT_NE(a.kind, RecoveryAction::Kind::HostFailed);
  EXPECT_EQ(b.group().buckets.size(), 2u);
}

TEST(RecoveryTest, MasterFailoverLeavesOnlyFirstInstances) {
  ClusterConfig cfg;
  cfg.hosts = 3;
  Bench b(cfg);
  Recorder rec;
  b.cluster.add_observer(&rec);
  b.cluster.boot_first_instance(web());
  b.grow(1);
  b.cluster.set_placement([](const PlacementView& v) -> std::optional<HostId> {
    for (const auto& h : v.hosts)
      if (h.host != 1 && h.admits()) return h.host;
    return std::nullopt;
  });
  b.grow(2);
  ASSERT_EQ(b.cluster.replica_count("www"), 3u);
  const auto old_dom = b.cluster.vm("www")->dom_id;
  b.cluster.fail_host(1);
  b.settle(b.cluster.config().ha_detect_delay + 0.5);
  EXPECT_EQ(b.cluster.master(), 2u);
  EXPECT_EQ(b.cluster.instance_count("www"), 1u);
  EXPECT_EQ(b.cluster.replica_count("www"), 0u);
  const auto& fi = *b.cluster.vm("www");
  EXPECT_EQ(fi.host, 2u);
  EXPECT_NE(fi.dom_id, old_dom);
  EXPECT_EQ(b.cluster.service("www")->host, 2u);
  EXPECT_EQ(b.group().buckets.size(), 1u);
  EXPECT_EQ(b.cluster.store(2).get(paths::vm("www") / "first-instance"), "true");
  for (HostId h : {2u, 3u}) {
    EXPECT_TRUE(b.cluster.fabric().at(h).tunnels().empty());
    EXPECT_TRUE(b.cluster.store(h).children(paths::vms()) ==
                (h == 2 ? std::vector<std::string>{"www"} : std::vector<std::string>{}));
  }
  EXPECT_EQ(rec.rebooted, std::vector<std::string>{"www"});
  EXPECT_TRUE(b.cluster.check_invariants().empty());

  // The rebooted first instance can scale again.
  b.cluster.set_placement(local_first_placement);
  b.grow(1);
  EXPECT_EQ(b.cluster.replica_count("www"), 1u);
}

TEST(RecoveryTest, FailoverWithoutServicesClearsSwitches) {
  ClusterConfig cfg;
  cfg.hosts = 2;
  Bench b(cfg);
  sw::FlowRule junk;
  junk.priority = 5;
  b.cluster.fabric().at(2).install_flow(junk);
  b.cluster.fail_host(1);
  b.settle(10);
  EXPECT_EQ(b.cluster.master(), 2u);
  EXPECT_EQ(b.cluster.fabric().at(2).rule_count(), 0u);
}

TEST(RecoveryTest, RemoteRequestsToDeadHostFail) {
  ClusterConfig cfg;
  cfg.hosts = 2;
  cfg.cores = 3;
  Bench b(cfg);
  b.cluster.boot_first_instance(web());
  b.cluster.fail_host(2);
  b.invoke("www", "[S(replicate); S(www)]");
  b.settle(2);
  EXPECT_EQ(b.response("www", 1), "[S(error); S(no capacity)]");
}
