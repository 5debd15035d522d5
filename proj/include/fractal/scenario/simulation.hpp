#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "fractal/guest/web_service.hpp"
#include "fractal/netsim/traffic.hpp"
#include "fractal/orchestrator/cluster.hpp"
#include "fractal/scenario/scenario.hpp"

namespace fractal::scn {

struct Summary {
  std::string scenario;
  double until = 0.0;
  std::size_t final_replicas = 0;
  std::size_t peak_replicas = 0;
  std::uint64_t started = 0;
  std::uint64_t completed = 0;
  std::uint64_t failed = 0;
  std::size_t in_flight = 0;
  double mean_latency_ms = 0.0;
  double p50_latency_ms = 0.0;
  double p99_latency_ms = 0.0;
  std::size_t replicates = 0;
  std::size_t halts = 0;
  std::size_t dies = 0;
  std::vector<std::string> violations;

  std::string str() const;
};

// One scenario wired end to end: cluster, guests, traffic and workload on a
// single event loop. Invariants are checked at every sampling tick.
class Simulation {
 public:
  explicit Simulation(Scenario scenario, std::ostream* csv = nullptr);
  ~Simulation();

  const Scenario& scenario() const { return scenario_; }
  sim::EventLoop& loop() { return loop_; }
  orch::Cluster& cluster() { return *cluster_; }
  guest::GuestRuntime& guests() { return *guests_; }
  sim::TrafficModel& traffic() { return *traffic_; }

  void run_until(double t);
  void run() { run_until(scenario_.until); }

  // Every host's store, flow table and groups, in host order.
  std::string dump_state() const;
  Summary summary() const;
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  void inject(const Fault& f);
  void check();

  Scenario scenario_;
  sim::EventLoop loop_;
  std::unique_ptr<orch::Cluster> cluster_;
  std::unique_ptr<guest::GuestRuntime> guests_;
  std::unique_ptr<sim::TrafficModel> traffic_;
  std::unique_ptr<sim::WorkloadGenerator> workload_;
  std::vector<std::string> violations_;
  std::size_t peak_replicas_ = 0;
};

}  // namespace fractal::scn
