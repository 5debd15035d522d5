#include "fractal/scenario/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "fractal/common/error.hpp"
#include "fractal/kvstore/dump.hpp"

namespace fractal::scn {

namespace {

std::string ms(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string Summary::str() const {
  std::ostringstream o;
  o << "scenario = " << scenario << "\n"
    << "until_s = " << until << "\n"
    << "final_replicas = " << final_replicas << "\n"
    << "peak_replicas = " << peak_replicas << "\n"
    << "requests_started = " << started << "\n"
    << "requests_completed = " << completed << "\n"
    << "delivery_failures = " << failed << "\n"
    << "in_flight_at_end = " << in_flight << "\n"
    << "mean_latency_ms = " << ms(mean_latency_ms) << "\n"
    << "p50_latency_ms = " << ms(p50_latency_ms) << "\n"
    << "p99_latency_ms = " << ms(p99_latency_ms) << "\n"
    << "replicate_invocations = " << replicates << "\n"
    << "halt_invocations = " << halts << "\n"
    << "die_invocations = " << dies << "\n"
    << "invariant_violations = " << violations.size() << "\n";
  for (const auto& v : violations) o << "violation = " << v << "\n";
  return o.str();
}

Simulation::Simulation(Scenario scenario, std::ostream* csv) : scenario_(std::move(scenario)) {
  cluster_ = std::make_unique<orch::Cluster>(loop_, scenario_.cluster);
  guests_ = std::make_unique<guest::GuestRuntime>(*cluster_, scenario_.guest);
  traffic_ = std::make_unique<sim::TrafficModel>(*cluster_, scenario_.net, guests_.get(), csv);
  cluster_->start();
  cluster_->boot_first_instance(scenario_.service);
  traffic_->start();
  workload_ = std::make_unique<sim::WorkloadGenerator>(scenario_.workload, scenario_.seed, scenario_.service.ip,
                                                       scenario_.cluster.service_port);
  const auto service = scenario_.service.name;
  workload_->start(loop_, scenario_.until, [this, service](const sim::Request& r) { traffic_->submit(r, service); });
  for (const auto& f : scenario_.faults) loop_.schedule(f.time, [this, f] { inject(f); });
}

Simulation::~Simulation() {
  // Observers detach before the cluster goes away.
  workload_.reset();
  traffic_.reset();
  guests_.reset();
}

void Simulation::inject(const Fault& f) {
  if (f.kind == Fault::Kind::FailHost) {
    cluster_->fail_host(f.host);
    return;
  }
  std::vector<std::string> replicas;
  for (const auto& [name, vm] : cluster_->vms())
    if (!vm.first_instance && vm.executing) replicas.push_back(name);
  if (f.index >= replicas.size()) {
    cluster_->log(std::string(fault_name(f.kind)) + ": no replica " + std::to_string(f.index));
    return;
  }
  if (f.kind == Fault::Kind::CrashReplica) {
    cluster_->crash_vm(replicas[f.index]);
  } else {
    cluster_->reboot_vm(replicas[f.index]);
  }
}

void Simulation::check() {
  for (auto& v : cluster_->check_invariants()) violations_.push_back(v);
  auto& t = *traffic_;
  if (t.started() != t.completed() + t.failed() + t.in_flight())
    violations_.push_back("request conservation broken");
  peak_replicas_ = std::max(peak_replicas_, cluster_->replica_count(scenario_.service.name));
}

void Simulation::run_until(double t) {
  const double period = scenario_.net.sample_period;
  while (loop_.now() < t && violations_.empty()) {
    const double next = std::min(t, (std::floor(loop_.now() / period + 1e-9) + 1.0) * period);
    try {
      loop_.run_until(next);
    } catch (const Error& e) {
      violations_.push_back(e.what());
      break;
    }
    check();
  }
}

std::string Simulation::dump_state() const {
  std::ostringstream o;
  for (auto h : cluster_->hosts()) {
    const auto& name = cluster_->host_name(h);
    o << "## host " << name << (cluster_->alive(h) ? "" : " (failed)") << " store\n" << kv::dump(cluster_->store(h));
    o << "## host " << name << " flows\n" << cluster_->fabric().at(h).dump_flows();
    o << "## host " << name << " groups\n" << cluster_->fabric().at(h).dump_groups();
  }
  return o.str();
}

Summary Simulation::summary() const {
  Summary s;
  s.scenario = scenario_.name;
  s.until = loop_.now();
  s.final_replicas = cluster_->replica_count(scenario_.service.name);
  s.peak_replicas = peak_replicas_;
  s.started = traffic_->started();
  s.completed = traffic_->completed();
  s.failed = traffic_->failed();
  s.in_flight = traffic_->in_flight();
  const auto& lat = traffic_->latencies();
  if (!lat.empty()) {
    s.mean_latency_ms = 1e3 * std::accumulate(lat.begin(), lat.end(), 0.0) / lat.size();
    s.p50_latency_ms = 1e3 * sim::percentile(lat, 50);
    s.p99_latency_ms = 1e3 * sim::percentile(lat, 99);
  }
  for (const auto& inv : guests_->invocations()) {
    s.replicates += inv.verb == orch::Verb::Replicate;
    s.halts += inv.verb == orch::Verb::Halt;
    s.dies += inv.verb == orch::Verb::Die;
  }
  s.violations = violations_;
  return s;
}

}  // namespace fractal::scn
