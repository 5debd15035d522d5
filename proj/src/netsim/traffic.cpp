#include "fractal/netsim/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fractal/common/error.hpp"

namespace fractal::sim {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string opt_fixed(const std::optional<double>& v) { return v ? fixed(*v, 3) : ""; }

}  // namespace

void NetConfig::validate() const {
  if (!(base_latency >= 0.0) || !(hop_delay >= 0.0)) raise(Errc::InvalidArgument, "latencies must be >= 0");
  if (!(core_mbps > 0.0)) raise(Errc::InvalidArgument, "core capacity must be positive");
  if (slots() == 0) raise(Errc::InvalidArgument, "no usable cores");
  if (!(sample_period > 0.0)) raise(Errc::InvalidArgument, "sample period must be positive");
}

std::string csv_header() {
  return "time_s,service,replica_id,host_id,rps,utilization,mean_latency_ms,p99_latency_ms,"
         "replica_count,delivery_failures";
}

std::string csv_line(const MetricsRow& r) {
  return fixed(r.time, 3) + "," + r.service + "," + r.replica_id + "," + std::to_string(r.host) + "," +
         fixed(r.rps, 1) + "," + fixed(r.utilization, 4) + "," + opt_fixed(r.mean_latency_ms) + "," +
         opt_fixed(r.p99_latency_ms) + "," + std::to_string(r.replica_count) + "," +
         std::to_string(r.delivery_failures);
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) raise(Errc::InvalidArgument, "percentile of nothing");
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * values.size()));
  const auto idx = rank == 0 ? 0 : rank - 1;
  std::nth_element(values.begin(), values.begin() + idx, values.end());
  return values[idx];
}

TrafficModel::TrafficModel(orch::Cluster& cluster, NetConfig config, guest::GuestRuntime* guests,
                           std::ostream* csv)
    : cluster_(cluster), config_(config), guests_(guests), csv_(csv) {
  config_.validate();
  cluster_.add_observer(this);
}

TrafficModel::~TrafficModel() {
  cluster_.remove_observer(this);
  if (sample_event_) cluster_.loop().cancel(*sample_event_);
  for (auto& [_, r] : replicas_)
    if (r.due) cluster_.loop().cancel(*r.due);
}

void TrafficModel::start() {
  if (started_timer_) return;
  started_timer_ = true;
  for (const auto& [_, vm] : cluster_.vms())
    if (vm.executing && !replicas_.count(vm.name)) add_replica(vm);
  if (csv_) *csv_ << csv_header() << "\n";
  sample_event_ = cluster_.loop().schedule_after(config_.sample_period, [this] { sample(); });
}

std::size_t TrafficModel::in_flight(const std::string& instance) const {
  auto it = replicas_.find(instance);
  return it == replicas_.end() ? 0 : it->second.queue->size();
}

std::optional<double> TrafficModel::service_rate(const std::string& instance) const {
  auto it = replicas_.find(instance);
  if (it == replicas_.end()) return std::nullopt;
  return it->second.queue->rate();
}

void TrafficModel::add_replica(const orch::VmInfo& vm) {
  Replica r;
  r.name = vm.name;
  r.service = vm.service;
  r.host = vm.host;
  r.queue = std::make_unique<PsQueue>(config_.core_rate());
  r.busy_mark = 0.0;
  // Queue clock starts now; busy time is measured from here.
  r.queue->set_rate(cluster_.loop().now(), config_.core_rate());
  windows_[vm.service][vm.name];
  replicas_[vm.name] = std::move(r);
  rebalance(vm.host);
}

void TrafficModel::drop_replica(const std::string& name) {
  auto it = replicas_.find(name);
  if (it == replicas_.end()) return;
  for (JobId id : it->second.queue->drop_all(cluster_.loop().now())) fail_job(id);
  if (it->second.due) cluster_.loop().cancel(*it->second.due);
  const auto host = it->second.host;
  replicas_.erase(it);
  rebalance(host);
}

// Instances on a host share its usable cores; each binds at most one.
void TrafficModel::rebalance(std::uint32_t host) {
  std::size_t n = 0;
  for (const auto& [_, r] : replicas_) n += r.host == host;
  if (n == 0) return;
  const double share = std::min(1.0, static_cast<double>(config_.slots()) / static_cast<double>(n));
  const double now = cluster_.loop().now();
  for (auto& [_, r] : replicas_) {
    if (r.host != host) continue;
    if (r.queue->rate() != config_.core_rate() * share) {
      r.queue->set_rate(now, config_.core_rate() * share);
      reschedule(r);
    }
  }
}

void TrafficModel::reschedule(Replica& r) {
  auto& loop = cluster_.loop();
  if (r.due) loop.cancel(*r.due);
  r.due.reset();
  const auto t = r.queue->next_completion();
  if (!t) return;
  const auto name = r.name;
  r.due = loop.schedule(std::max(*t, loop.now()), [this, name] { on_due(name); });
}

void TrafficModel::on_due(const std::string& name) {
  auto it = replicas_.find(name);
  if (it == replicas_.end()) return;
  it->second.due.reset();
  for (JobId id : it->second.queue->complete_due(cluster_.loop().now())) finish(id);
  it = replicas_.find(name);
  if (it != replicas_.end()) reschedule(it->second);
}

void TrafficModel::submit(const Request& req, const std::string& service) {
  ++started_;
  const double now = cluster_.loop().now();
  const orch::Service* svc = cluster_.service(service);
  if (!svc || !cluster_.alive(svc->host)) return fail(service, "", &req);
  auto& fabric = cluster_.fabric();
  auto& hub = fabric.at(svc->host);
  const auto d = hub.classify(req.key, sw::kUplinkPort, now);
  if (!d.forwarded()) return fail(service, "", &req);
  std::uint32_t host = svc->host;
  sw::PortId port = d.egress;
  int hops = 0;
  if (hub.tunnel(port)) {
    const auto far = fabric.peer(host, port);
    if (!far || !cluster_.alive(far->host)) {
      hub.expire_flow(req.key);
      return fail(service, "", &req);
    }
    const auto d2 = fabric.at(far->host).classify(d.key, far->port, now);
    host = far->host;
    port = d2.egress;
    hops = 1;
  }
  const orch::VmInfo* vm = cluster_.vm_at(host, port);
  auto rit = vm ? replicas_.find(vm->name) : replicas_.end();
  if (rit == replicas_.end()) {
    hub.expire_flow(req.key);
    return fail(service, vm ? vm->name : "", &req);
  }
  const JobId id = req.seq;
  jobs_[id] = Job{req, vm->name, svc->host, hops};
  by_key_[req.key] = id;
  rit->second.queue->arrive(now, id, req.bytes);
  reschedule(rit->second);
}

void TrafficModel::finish(JobId id) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return;
  const Job job = std::move(it->second);
  jobs_.erase(it);
  by_key_.erase(job.req.key);
  const double now = cluster_.loop().now();
  const double latency = (now - job.req.time) + config_.base_latency + job.hops * config_.hop_delay;
  ++completed_;
  latencies_.push_back(latency);
  const orch::VmInfo* vm = cluster_.vm(job.instance);
  const std::string service = vm ? vm->service : replicas_.at(job.instance).service;
  auto& w = windows_[service][job.instance];
  w.completions++;
  w.latencies.push_back(latency);
  auto& sw = service_windows_[service];
  sw.completions++;
  sw.latencies.push_back(latency);
  if (config_.keep_records) {
    completions_.push_back({job.req.seq, job.req.time, now, latency, job.instance,
                            vm ? vm->host : 0u, job.hops});
  }
  if (cluster_.alive(job.pin_host) && cluster_.fabric().has(job.pin_host))
    cluster_.fabric().at(job.pin_host).expire_flow(job.req.key);
  if (guests_) {
    if (auto* ws = guests_->service(job.instance)) ws->served(now, "GET /u" + std::to_string(job.req.url));
  }
}

void TrafficModel::fail(const std::string& service, const std::string& instance, const Request* req) {
  ++failed_;
  service_windows_[service].failures++;
  if (!instance.empty()) windows_[service][instance].failures++;
  if (req && config_.keep_records) failed_seqs_.push_back(req->seq);
}

void TrafficModel::fail_job(JobId id) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return;
  const Job job = std::move(it->second);
  jobs_.erase(it);
  by_key_.erase(job.req.key);
  auto rit = replicas_.find(job.instance);
  const orch::VmInfo* vm = cluster_.vm(job.instance);
  const std::string service = rit != replicas_.end() ? rit->second.service : vm ? vm->service : "";
  if (cluster_.alive(job.pin_host) && cluster_.fabric().has(job.pin_host))
    cluster_.fabric().at(job.pin_host).expire_flow(job.req.key);
  fail(service, job.instance, &job.req);
}

void TrafficModel::on_vm_running(const orch::VmInfo& vm) {
  if (!replicas_.count(vm.name)) add_replica(vm);
}

void TrafficModel::on_vm_halting(const orch::VmInfo& vm) {
  DrainSnapshot snap{vm.name, cluster_.loop().now(), {}};
  for (const auto& [id, job] : jobs_)
    if (job.instance == vm.name) snap.in_flight.push_back(id);
  drains_.push_back(std::move(snap));
}

void TrafficModel::on_vm_stopped(const orch::VmInfo& vm, orch::StopReason) {
  // A drained VM has nothing left; anything else in its queue is lost.
  drop_replica(vm.name);
}

void TrafficModel::on_vm_rebooted(const orch::VmInfo& vm) {
  drop_replica(vm.name);
  if (vm.executing) add_replica(vm);
}

void TrafficModel::on_flows_expired(const std::vector<sw::FlowKey>& keys) {
  const double now = cluster_.loop().now();
  for (const auto& k : keys) {
    auto it = by_key_.find(k);
    if (it == by_key_.end()) continue;
    const JobId id = it->second;
    auto rit = replicas_.find(jobs_.at(id).instance);
    if (rit != replicas_.end()) {
      rit->second.queue->remove(now, id);
      reschedule(rit->second);
    }
    fail_job(id);
  }
}

void TrafficModel::sample() {
  const double now = cluster_.loop().now();
  const double period = config_.sample_period;
  for (auto& [service, instances] : windows_) {
    MetricsRow agg;
    agg.time = now;
    agg.service = service;
    agg.replica_id = "all";
    agg.replica_count = cluster_.replica_count(service);
    double util_sum = 0.0;
    std::size_t live = 0;
    for (auto it = instances.begin(); it != instances.end();) {
      auto& [name, w] = *it;
      MetricsRow row;
      row.time = now;
      row.service = service;
      row.replica_id = name;
      row.replica_count = agg.replica_count;
      row.rps = w.completions / period;
      row.delivery_failures = w.failures;
      auto rit = replicas_.find(name);
      if (rit != replicas_.end()) {
        row.host = rit->second.host;
        const double busy = rit->second.queue->busy_time(now);
        row.utilization = std::min(1.0, (busy - rit->second.busy_mark) / period);
        rit->second.busy_mark = busy;
        util_sum += row.utilization;
        ++live;
      } else if (const orch::VmInfo* vm = cluster_.vm(name)) {
        row.host = vm->host;
      }
      if (!w.latencies.empty()) {
        row.mean_latency_ms =
            1e3 * std::accumulate(w.latencies.begin(), w.latencies.end(), 0.0) / w.latencies.size();
        row.p99_latency_ms = 1e3 * percentile(w.latencies, 99.0);
      }
      rows_.push_back(row);
      if (csv_) *csv_ << csv_line(row) << "\n";
      const bool gone = rit == replicas_.end();
      w = Window{};
      it = gone ? instances.erase(it) : std::next(it);
    }
    auto& sw = service_windows_[service];
    agg.rps = sw.completions / period;
    agg.utilization = live ? util_sum / live : 0.0;
    agg.delivery_failures = sw.failures;
    if (!sw.latencies.empty()) {
      agg.mean_latency_ms =
          1e3 * std::accumulate(sw.latencies.begin(), sw.latencies.end(), 0.0) / sw.latencies.size();
      agg.p99_latency_ms = 1e3 * percentile(sw.latencies, 99.0);
    }
    sw = Window{};
    rows_.push_back(agg);
    if (csv_) *csv_ << csv_line(agg) << "\n";
  }
  if (csv_) csv_->flush();
  sample_event_ = cluster_.loop().schedule_after(config_.sample_period, [this] { sample(); });
}

}  // namespace fractal::sim
