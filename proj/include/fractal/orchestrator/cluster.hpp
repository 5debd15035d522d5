#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fractal/kvstore/store.hpp"
#include "fractal/netsim/event_loop.hpp"
#include "fractal/orchestrator/heartbeat.hpp"
#include "fractal/orchestrator/hypervisor.hpp"
#include "fractal/orchestrator/placement.hpp"
#include "fractal/orchestrator/records.hpp"
#include "fractal/switchfab/fabric.hpp"

namespace fractal::orch {

class Jitsu;

struct ClusterConfig {
  std::size_t hosts = 3;
  std::vector<std::string> host_names;  // defaults to h<id>
  std::size_t cores = 6;
  std::size_t reserved_cores = 2;
  double store_delay = 0.0005;    // cross-host store put
  double boot_delay = 0.02;
  double monitor_period = 1.0;
  double heartbeat_interval = 2.0;
  int heartbeat_multiplier = 2;
  double ha_detect_delay = 4.0;   // master loss to failover
  std::uint64_t hash_seed = 1;
  sw::SteeringMode mode = sw::SteeringMode::GroupTable;
  std::uint16_t service_port = 80;
  DomId first_dom_id = 1;
  std::uint32_t replica_ttl = 300;

  std::size_t slots() const { return cores > reserved_cores ? cores - reserved_cores : 0; }
};

struct ServiceSpec {
  std::string name;  // first-instance VM name
  HostId host = 1;
  sw::Ipv4 ip;       // public service address, first interface
  std::vector<sw::Ipv4> extra_ips;
  sw::MacAddr mac;
  std::string dns_name;  // defaults to name
  std::uint32_t dns_ttl = 500;
  std::string stop_mode = "shutdown";
  std::string image;     // defaults to <name>.xen
  std::optional<sw::GroupId> app_id;  // defaults to the service address
};

struct Service {
  ServiceSpec spec;
  sw::GroupId app_id = 0;
  HostId host = 0;  // where the first instance and the group live
  std::optional<sw::RuleId> rule;

  std::string app_hex() const;
};

// Runtime view of one VM: identity plus the switch state programmed for it.
struct VmInfo {
  std::string name;
  std::string service;
  HostId host = 0;
  DomId dom_id = 0;
  sw::GroupId app_id = 0;
  sw::Ipv4 ip;
  sw::MacAddr mac;
  sw::PortId vif_port = 0;
  bool first_instance = false;
  VmState state = VmState::Provisioning;
  bool executing = true;  // false once crashed or its host died
  std::string requester;  // initial_xs: requesting host, blank if local
  std::uint32_t ttl = 0;

  std::optional<sw::BucketId> bucket;  // in the group on the service host
  std::optional<sw::PortId> tunnel;    // tunnel end on the service host
  std::optional<sw::PortId> tunnel_far;
  std::vector<sw::RuleId> rules;       // on the VM's own host
};

enum class StopReason { Destroyed, Crashed, HostFailed, Failover };

std::string_view stop_reason_name(StopReason r);

// Hooks for the guest runtime and the traffic model.
class VmObserver {
 public:
  virtual ~VmObserver() = default;
  virtual void on_vm_running(const VmInfo&) {}
  // Bucket drained; the VM keeps serving its pinned flows.
  virtual void on_vm_halting(const VmInfo&) {}
  // The VM stopped executing; in-flight work on it is lost unless destroyed
  // after a drain.
  virtual void on_vm_stopped(const VmInfo&, StopReason) {}
  // Same VM, new domain: in-flight work is lost, identity is kept.
  virtual void on_vm_rebooted(const VmInfo&) {}
  // Pinned flows dropped without completing.
  virtual void on_flows_expired(const std::vector<sw::FlowKey>&) {}
};

struct RecoveryAction {
  enum class Kind { Destroyed, CrashCollected, Reconciled, HostFailed, BucketRemoved };
  Kind kind;
  std::string subject;
  std::string detail;
};

std::string_view action_name(RecoveryAction::Kind k);

struct ClusterEvent {
  double time = 0.0;
  std::string what;
};

// Hosts, their stores, switches and hypervisors, and one orchestrator per
// host. The HA pool master is the lowest live host id.
class Cluster {
 public:
  Cluster(sim::EventLoop& loop, ClusterConfig config);
  ~Cluster();

  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  // Starts monitor and heartbeat timers.
  void start();

  sim::EventLoop& loop() { return loop_; }
  const ClusterConfig& config() const { return config_; }
  sw::Fabric& fabric() { return fabric_; }
  const sw::Fabric& fabric() const { return fabric_; }
  kv::Store& store(HostId host);
  const kv::Store& store(HostId host) const;
  HypervisorRegistry& registry(HostId host);
  Jitsu& jitsu(HostId host);
  std::vector<HostId> hosts() const;
  const std::string& host_name(HostId host) const;
  std::optional<HostId> host_by_name(const std::string& name) const;
  static kv::Identity jitsu_identity(const std::string& host_name);

  bool alive(HostId host) const;
  HostId master() const { return master_; }

  void set_placement(PlacementPolicy policy) { placement_ = std::move(policy); }
  std::optional<HostId> place(HostId local) const;
  std::size_t load(HostId host) const;

  void add_observer(VmObserver* obs) { observers_.push_back(obs); }
  void remove_observer(VmObserver* obs) { std::erase(observers_, obs); }

  // Stands in for the DNS-triggered first boot.
  const VmInfo& boot_first_instance(const ServiceSpec& spec);

  const Service* service(const std::string& name) const;
  const Service* service_by_app(sw::GroupId app) const;
  const std::map<std::string, Service>& services() const { return services_; }

  const VmInfo* vm(const std::string& name) const;
  VmInfo* vm_mut(const std::string& name);
  const VmInfo* vm_at(HostId host, sw::PortId port) const;
  const std::map<std::string, VmInfo>& vms() const { return vms_; }
  // Running or halting instances of a service, first instance included.
  std::size_t instance_count(const std::string& service) const;
  std::size_t replica_count(const std::string& service) const;

  // Failure injection.
  void crash_vm(const std::string& name);   // domain vanishes
  void reboot_vm(const std::string& name);  // domain replaced, new dom-id
  void fail_host(HostId host);
  void on_master_failure();

  // Used by the orchestrators.
  void remote_put(HostId target, const kv::Path& path, std::string value, const kv::Identity& writer);
  void set_state(VmInfo& vm, VmState to);
  VmInfo& register_vm(VmInfo vm);
  void erase_vm(const std::string& name);
  void attach(VmInfo& vm);
  // Returns the pinned flows dropped by a forced removal.
  std::vector<sw::FlowKey> detach(VmInfo& vm, bool force);
  void rebind(VmInfo& vm, DomId dom);
  std::pair<sw::Ipv4, sw::MacAddr> allocate_replica_address(HostId host);
  void release_replica_address(HostId host, sw::Ipv4 ip);

  void notify_running(const VmInfo& vm);
  void notify_halting(const VmInfo& vm);
  void notify_stopped(const VmInfo& vm, StopReason reason);
  void notify_rebooted(const VmInfo& vm);
  void notify_expired(const std::vector<sw::FlowKey>& keys);

  void log(std::string what);
  const std::vector<ClusterEvent>& events() const { return events_; }

  // Violated structural invariants, empty when consistent.
  std::vector<std::string> check_invariants() const;

  static sw::PortId vif_port(DomId dom) { return 1000 + dom; }

 private:
  struct Host {
    HostId id = 0;
    std::string name;
    bool alive = true;
    std::unique_ptr<kv::Store> store;
    std::unique_ptr<HypervisorRegistry> registry;
    std::unique_ptr<Jitsu> jitsu;
    std::set<std::uint32_t> used_addresses;  // replica address offsets
  };

  Host& host(HostId id);
  const Host& host(HostId id) const;
  void install_first_instance_network(Service& svc, VmInfo& vm);
  void install_host_rules(VmInfo& vm);
  void write_first_instance_record(const Service& svc, const VmInfo& vm, const VmRecord* previous);

  sim::EventLoop& loop_;
  ClusterConfig config_;
  sw::Fabric fabric_;
  std::map<HostId, Host> hosts_;
  HostId master_ = 1;
  PlacementPolicy placement_ = local_first_placement;
  std::vector<VmObserver*> observers_;
  std::map<std::string, Service> services_;
  std::map<std::string, VmInfo> vms_;
  std::vector<ClusterEvent> events_;
  bool started_ = false;
};

}  // namespace fractal::orch
