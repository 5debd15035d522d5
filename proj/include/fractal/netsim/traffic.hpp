#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fractal/guest/web_service.hpp"
#include "fractal/netsim/ps_queue.hpp"
#include "fractal/netsim/workload.hpp"
#include "fractal/orchestrator/cluster.hpp"

namespace fractal::sim {

struct NetConfig {
  double base_latency = 0.0025;  // seconds, every request
  double hop_delay = 0.0002;     // per tunnel traversal
  double core_mbps = 104.0;      // per core, 10^6 bytes/s
  std::size_t cores = 6;
  std::size_t reserved_cores = 2;
  double sample_period = 1.0;
  bool keep_records = false;     // per-request completions and failures

  void validate() const;
  std::size_t slots() const { return cores > reserved_cores ? cores - reserved_cores : 0; }
  double core_rate() const { return core_mbps * 1e6; }
  // Requests per second one core sustains at the given mean size.
  double capacity_rps(double mean_bytes) const { return core_rate() / mean_bytes; }
};

struct MetricsRow {
  double time = 0.0;  // window end
  std::string service;
  std::string replica_id;  // instance name, or "all" for the service
  std::uint32_t host = 0;  // 0 on the service row
  double rps = 0.0;
  double utilization = 0.0;
  std::optional<double> mean_latency_ms;
  std::optional<double> p99_latency_ms;
  std::size_t replica_count = 0;
  std::uint64_t delivery_failures = 0;
};

std::string csv_header();
std::string csv_line(const MetricsRow& row);
// Nearest-rank percentile; `values` need not be sorted.
double percentile(std::vector<double> values, double p);

struct Completion {
  std::uint64_t seq = 0;
  double start = 0.0;
  double end = 0.0;
  double latency = 0.0;  // queueing plus network
  std::string instance;
  std::uint32_t host = 0;
  int hops = 0;
};

struct DrainSnapshot {
  std::string instance;
  double time = 0.0;
  std::vector<std::uint64_t> in_flight;  // request seqs
};

// Flow-level traffic: each request is classified at the service host's
// switch, follows its tunnel if any, and is served by the instance's
// processor-sharing queue.
class TrafficModel : public orch::VmObserver {
 public:
  TrafficModel(orch::Cluster& cluster, NetConfig config, guest::GuestRuntime* guests = nullptr,
               std::ostream* csv = nullptr);
  ~TrafficModel() override;

  TrafficModel(const TrafficModel&) = delete;
  TrafficModel& operator=(const TrafficModel&) = delete;

  const NetConfig& config() const { return config_; }
  // Picks up running VMs and starts the sampling timer.
  void start();

  void submit(const Request& req, const std::string& service);

  std::uint64_t started() const { return started_; }
  std::uint64_t completed() const { return completed_; }
  std::uint64_t failed() const { return failed_; }
  std::size_t in_flight() const { return jobs_.size(); }
  std::size_t in_flight(const std::string& instance) const;
  // Current service rate of an instance in bytes/s.
  std::optional<double> service_rate(const std::string& instance) const;

  const std::vector<MetricsRow>& rows() const { return rows_; }
  const std::vector<double>& latencies() const { return latencies_; }
  const std::vector<Completion>& completions() const { return completions_; }
  const std::vector<std::uint64_t>& failures() const { return failed_seqs_; }
  const std::vector<DrainSnapshot>& drains() const { return drains_; }

  void on_vm_running(const orch::VmInfo& vm) override;
  void on_vm_halting(const orch::VmInfo& vm) override;
  void on_vm_stopped(const orch::VmInfo& vm, orch::StopReason reason) override;
  void on_vm_rebooted(const orch::VmInfo& vm) override;
  void on_flows_expired(const std::vector<sw::FlowKey>& keys) override;

 private:
  struct Job {
    Request req;
    std::string instance;
    std::uint32_t pin_host = 0;
    int hops = 0;
  };
  struct Window {
    std::uint64_t completions = 0;
    std::vector<double> latencies;
    std::uint64_t failures = 0;
  };
  struct Replica {
    std::string name;
    std::string service;
    std::uint32_t host = 0;
    std::unique_ptr<PsQueue> queue;
    std::optional<EventId> due;
    double busy_mark = 0.0;
  };

  void add_replica(const orch::VmInfo& vm);
  void drop_replica(const std::string& name);
  void rebalance(std::uint32_t host);
  void reschedule(Replica& r);
  void on_due(const std::string& name);
  void finish(JobId id);
  void fail(const std::string& service, const std::string& instance, const Request* req);
  void fail_job(JobId id);
  void sample();

  orch::Cluster& cluster_;
  NetConfig config_;
  guest::GuestRuntime* guests_;
  std::ostream* csv_;
  bool started_timer_ = false;
  std::optional<EventId> sample_event_;

  std::map<std::string, Replica> replicas_;
  std::map<JobId, Job> jobs_;
  std::unordered_map<sw::FlowKey, JobId, sw::FlowKeyHash> by_key_;
  std::map<std::string, std::map<std::string, Window>> windows_;  // service -> instance
  std::map<std::string, Window> service_windows_;

  std::uint64_t started_ = 0;
  std::uint64_t completed_ = 0;
  std::uint64_t failed_ = 0;
  std::vector<MetricsRow> rows_;
  std::vector<double> latencies_;
  std::vector<Completion> completions_;
  std::vector<std::uint64_t> failed_seqs_;
  std::vector<DrainSnapshot> drains_;
};

}  // namespace fractal::sim
