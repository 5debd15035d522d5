#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fractal/orchestrator/cluster.hpp"

namespace fractal::orch {

// Per-host orchestrator. Serves requests written under jitsu/requests in its
// host's store, boots and destroys replicas, and runs the reconciliation
// monitor and the heartbeat detector for services first-instanced here.
class Jitsu {
 public:
  Jitsu(Cluster& cluster, HostId host);

  Jitsu(const Jitsu&) = delete;
  Jitsu& operator=(const Jitsu&) = delete;

  HostId host() const { return host_; }
  const std::string& name() const;
  kv::Identity identity() const;

  // Installs watches and timers.
  void start();
  // Host lost: timers stop and callbacks become no-ops.
  void stop();
  // Forget outstanding requests and detector state.
  void reset();
  bool running() const { return running_; }

  // Serves one request. Replicates answer after the boot completes; every
  // other outcome is written to the requester's response key immediately.
  void handle_request(const std::string& requester, const std::string& value);
  bool outstanding(const std::string& requester) const { return pending_.count(requester) > 0; }

  std::vector<RecoveryAction> monitor_tick();
  void heartbeat_update(const std::string& host, double now);
  std::vector<RecoveryAction> on_host_failure(HostId failed);

  HeartbeatTable& heartbeats() { return heartbeats_; }
  const std::vector<RecoveryAction>& actions() const { return actions_; }

 private:
  struct Outbound {
    std::string requester;  // local instance
    RequestRecord request;
  };

  void respond(const std::string& requester, const Response& r);
  void handle_local(const std::string& requester, const RequestRecord& req);
  void handle_remote(const std::string& requester_host, const RequestRecord& req);
  void replicate(const std::string& requester);
  void halt(const std::string& requester);
  void die(const std::string& requester);
  // Boots a replica of `svc` here; `done` receives the outcome after the boot
  // delay (or at once on refusal).
  void boot_replica(const Service& svc, const std::string& initial_xs, std::uint32_t ttl,
                    const std::string& stop_mode, std::function<void(const Response&)> done);
  void send_next(HostId target);
  void on_remote_response(HostId target, const std::string& value);
  void destroy(VmInfo& vm, StopReason reason, bool force);
  void delete_metadata(const std::string& name);
  void monitor_timer();
  void heartbeat_timer();

  Cluster& cluster_;
  HostId host_;
  bool running_ = false;
  // Bumped by reset(); callbacks from an earlier epoch are dropped.
  std::uint64_t epoch_ = 0;
  std::set<std::string> pending_;
  std::map<HostId, std::deque<Outbound>> outbound_;
  HeartbeatTable heartbeats_;
  std::vector<RecoveryAction> actions_;
  std::vector<kv::WatchHandle> watches_;
  std::vector<std::pair<HostId, kv::WatchHandle>> remote_watches_;
  std::optional<sim::EventId> monitor_event_;
  std::optional<sim::EventId> heartbeat_event_;
};

}  // namespace fractal::orch
