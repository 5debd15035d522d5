#include "fractal/orchestrator/cluster.hpp"

#include <algorithm>

#include "fractal/common/error.hpp"
#include "fractal/orchestrator/jitsu.hpp"

namespace fractal::orch {

namespace {

constexpr int kServicePriority = 10;
constexpr int kTunnelIngressPriority = 10;
constexpr int kEgressPriority = 1;
constexpr std::uint32_t kReplicaAddressBase = 200;
constexpr std::uint32_t kReplicaAddresses = 55;  // .200 to .254

}  // namespace

std::string Service::app_hex() const { return sw::Ipv4{app_id}.hex(); }

std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::Destroyed: return "destroyed";
    case StopReason::Crashed: return "crashed";
    case StopReason::HostFailed: return "host-failed";
    case StopReason::Failover: return "failover";
  }
  return "?";
}

std::string_view action_name(RecoveryAction::Kind k) {
  switch (k) {
    case RecoveryAction::Kind::Destroyed: return "destroyed";
    case RecoveryAction::Kind::CrashCollected: return "crash-collected";
    case RecoveryAction::Kind::Reconciled: return "reconciled";
    case RecoveryAction::Kind::HostFailed: return "host-failed";
    case RecoveryAction::Kind::BucketRemoved: return "bucket-removed";
  }
  return "?";
}

Cluster::Cluster(sim::EventLoop& loop, ClusterConfig config)
    : loop_(loop), config_(std::move(config)), fabric_(config_.hash_seed) {
  if (config_.hosts == 0 || config_.hosts > 255)
    raise(Errc::InvalidArgument, "host count must be in [1, 255]");
  if (!config_.host_names.empty() && config_.host_names.size() != config_.hosts)
    raise(Errc::InvalidArgument, "host_names must name every host");
  for (HostId id = 1; id <= config_.hosts; ++id) {
    Host h;
    h.id = id;
    h.name = config_.host_names.empty() ? "h" + std::to_string(id) : config_.host_names[id - 1];
    if (host_by_name(h.name)) raise(Errc::InvalidArgument, "duplicate host name " + h.name);
    h.store = std::make_unique<kv::Store>(jitsu_identity(h.name));
    h.registry = std::make_unique<HypervisorRegistry>(config_.first_dom_id);
    hosts_.emplace(id, std::move(h));
    fabric_.add_switch(id);
  }
  fabric_.set_mode(config_.mode);
  // Every orchestrator owns a request slot and a heartbeat key on every
  // other host's store.
  for (auto& [id, h] : hosts_) {
    for (const auto& [other, o] : hosts_) {
      if (other == id) continue;
      h.store->grant(paths::request_root(o.name), kv::AccessScope{jitsu_identity(o.name), {}, {}});
      h.store->grant(paths::heartbeat(o.name), kv::AccessScope{jitsu_identity(o.name), {}, {}});
    }
  }
  for (auto& [id, h] : hosts_) h.jitsu = std::make_unique<Jitsu>(*this, id);
  master_ = hosts_.begin()->first;
}

Cluster::~Cluster() = default;

void Cluster::start() {
  if (started_) return;
  started_ = true;
  for (auto& [_, h] : hosts_)
    if (h.alive) h.jitsu->start();
}

Cluster::Host& Cluster::host(HostId id) {
  auto it = hosts_.find(id);
  if (it == hosts_.end()) raise(Errc::NotFound, "no host " + std::to_string(id));
  return it->second;
}

const Cluster::Host& Cluster::host(HostId id) const {
  auto it = hosts_.find(id);
  if (it == hosts_.end()) raise(Errc::NotFound, "no host " + std::to_string(id));
  return it->second;
}

kv::Store& Cluster::store(HostId id) { return *host(id).store; }
const kv::Store& Cluster::store(HostId id) const { return *host(id).store; }
HypervisorRegistry& Cluster::registry(HostId id) { return *host(id).registry; }
Jitsu& Cluster::jitsu(HostId id) { return *host(id).jitsu; }

std::vector<HostId> Cluster::hosts() const {
  std::vector<HostId> out;
  for (const auto& [id, _] : hosts_) out.push_back(id);
  return out;
}

const std::string& Cluster::host_name(HostId id) const { return host(id).name; }

std::optional<HostId> Cluster::host_by_name(const std::string& name) const {
  for (const auto& [id, h] : hosts_)
    if (h.name == name) return id;
  return std::nullopt;
}

kv::Identity Cluster::jitsu_identity(const std::string& host_name) { return "jitsu@" + host_name; }

bool Cluster::alive(HostId id) const {
  auto it = hosts_.find(id);
  return it != hosts_.end() && it->second.alive;
}

std::size_t Cluster::load(HostId id) const {
  std::size_t n = 0;
  for (const auto& [_, vm] : vms_)
    if (vm.host == id && vm.executing) ++n;
  return n;
}

std::optional<HostId> Cluster::place(HostId local) const {
  PlacementView view;
  view.local = local;
  for (const auto& [id, h] : hosts_) view.hosts.push_back({id, load(id), config_.slots(), h.alive});
  return placement_(view);
}

const Service* Cluster::service(const std::string& name) const {
  auto it = services_.find(name);
  return it == services_.end() ? nullptr : &it->second;
}

const Service* Cluster::service_by_app(sw::GroupId app) const {
  for (const auto& [_, s] : services_)
    if (s.app_id == app) return &s;
  return nullptr;
}

const VmInfo* Cluster::vm(const std::string& name) const {
  auto it = vms_.find(name);
  return it == vms_.end() ? nullptr : &it->second;
}

VmInfo* Cluster::vm_mut(const std::string& name) {
  auto it = vms_.find(name);
  return it == vms_.end() ? nullptr : &it->second;
}

const VmInfo* Cluster::vm_at(HostId h, sw::PortId port) const {
  for (const auto& [_, vm] : vms_)
    if (vm.host == h && vm.vif_port == port) return &vm;
  return nullptr;
}

std::size_t Cluster::instance_count(const std::string& svc) const {
  std::size_t n = 0;
  for (const auto& [_, vm] : vms_)
    if (vm.service == svc && (vm.state == VmState::Running || vm.state == VmState::Halting)) ++n;
  return n;
}

std::size_t Cluster::replica_count(const std::string& svc) const {
  std::size_t n = instance_count(svc);
  return n > 0 ? n - 1 : 0;
}

const VmInfo& Cluster::boot_first_instance(const ServiceSpec& in) {
  if (services_.count(in.name)) raise(Errc::InvalidArgument, "service " + in.name + " exists");
  if (vms_.count(in.name)) raise(Errc::InvalidArgument, "vm " + in.name + " exists");
  if (!alive(in.host)) raise(Errc::NotRunning, "host " + std::to_string(in.host) + " is down");
  if (load(in.host) >= config_.slots()) raise(Errc::NoCapacity, "host is full");
  Service svc;
  svc.spec = in;
  if (svc.spec.dns_name.empty()) svc.spec.dns_name = in.name;
  if (svc.spec.image.empty()) svc.spec.image = in.name + ".xen";
  svc.app_id = in.app_id.value_or(in.ip.value);
  svc.host = in.host;
  if (service_by_app(svc.app_id)) raise(Errc::InvalidArgument, "app id already in use");

  VmInfo vm;
  vm.name = in.name;
  vm.service = in.name;
  vm.host = in.host;
  vm.dom_id = registry(in.host).create(in.name);
  vm.app_id = svc.app_id;
  vm.ip = in.ip;
  vm.mac = in.mac;
  vm.vif_port = vif_port(vm.dom_id);
  vm.first_instance = true;
  vm.state = VmState::Running;

  install_first_instance_network(svc, vm);
  write_first_instance_record(svc, vm, nullptr);
  store(in.host).grant(paths::request_root(in.name), kv::AccessScope{in.name, {}, {}});
  auto& stored = services_.emplace(in.name, std::move(svc)).first->second;
  auto& ref = register_vm(std::move(vm));
  log("first instance " + ref.name + " booted on " + host_name(stored.host) + " dom " +
      std::to_string(ref.dom_id));
  notify_running(ref);
  return ref;
}

void Cluster::install_first_instance_network(Service& svc, VmInfo& vm) {
  auto& sw = fabric_.at(vm.host);
  sw.add_port(vm.vif_port);
  sw.create_group(svc.app_id, {});
  vm.bucket = sw.add_bucket(
      svc.app_id, sw::Bucket{0, 1,
                             {sw::Action::set_dst_ip(vm.ip), sw::Action::set_dst_mac(vm.mac),
                              sw::Action::output(vm.vif_port)}});
  sw::FlowRule rule;
  rule.priority = kServicePriority;
  rule.match.dst_ip = svc.spec.ip;
  rule.match.proto = sw::kProtoTcp;
  rule.match.dst_port = config_.service_port;
  rule.actions = {sw::Action::group(svc.app_id)};
  svc.rule = sw.install_flow(rule);
  sw::FlowRule egress;
  egress.priority = kEgressPriority;
  egress.match.in_port = vm.vif_port;
  egress.actions = {sw::Action::output(sw::kUplinkPort)};
  vm.rules = {sw.install_flow(egress)};
}

void Cluster::write_first_instance_record(const Service& svc, const VmInfo& vm,
                                          const VmRecord* previous) {
  VmRecord r;
  r.name = vm.name;
  r.dom_id = vm.dom_id;
  r.app_id = svc.app_hex();
  r.state = vm.state;
  r.stop_mode = svc.spec.stop_mode;
  r.first_instance = true;
  const std::string vif = "vif" + std::to_string(vm.dom_id);
  r.ips[vif + ".1"] = svc.spec.ip.str();
  for (std::size_t i = 0; i < svc.spec.extra_ips.size(); ++i)
    r.ips[vif + "." + std::to_string(i + 2)] = svc.spec.extra_ips[i].str();
  r.mac = svc.spec.mac.str();
  r.dns[svc.spec.dns_name] = svc.spec.dns_ttl;
  std::vector<kv::Mutation> m;
  if (previous) m.push_back({paths::vm(vm.name), std::nullopt});
  for (auto& x : r.to_mutations()) m.push_back(std::move(x));
  auto& s = store(vm.host);
  s.transact(m, s.admin());
}

VmInfo& Cluster::register_vm(VmInfo vm) {
  const auto name = vm.name;
  auto [it, inserted] = vms_.emplace(name, std::move(vm));
  if (!inserted) raise(Errc::InvalidArgument, "vm " + name + " already registered");
  return it->second;
}

void Cluster::erase_vm(const std::string& name) { vms_.erase(name); }

void Cluster::set_state(VmInfo& vm, VmState to) {
  if (!transition_allowed(vm.state, to))
    raise(Errc::InvariantViolation, "vm " + vm.name + ": illegal transition " +
                                        std::string(state_name(vm.state)) + " -> " +
                                        std::string(state_name(to)));
  vm.state = to;
  if (alive(vm.host)) {
    auto& s = store(vm.host);
    if (s.get(paths::vm(vm.name) / "state"))
      s.put(paths::vm(vm.name) / "state", std::string(state_name(to)), s.admin());
  }
}

namespace {

std::vector<sw::Action> bucket_actions(const VmInfo& vm) {
  return {sw::Action::set_dst_ip(vm.ip), sw::Action::set_dst_mac(vm.mac),
          sw::Action::output(vm.tunnel ? *vm.tunnel : vm.vif_port)};
}

}  // namespace

void Cluster::install_host_rules(VmInfo& vm) {
  const Service& svc = services_.at(vm.service);
  auto& own = fabric_.at(vm.host);
  sw::FlowRule egress;
  egress.priority = kEgressPriority;
  egress.match.in_port = vm.vif_port;
  egress.actions = {sw::Action::output(sw::kUplinkPort)};
  vm.rules.push_back(own.install_flow(egress));
  if (vm.tunnel_far) {
    sw::FlowRule in;
    in.priority = kTunnelIngressPriority;
    in.match.in_port = *vm.tunnel_far;
    in.actions = {sw::Action::output(vm.vif_port)};
    vm.rules.push_back(own.install_flow(in));
  }
  if (vm.host != svc.host) vm.rules.push_back(own.install_snat(config_.service_port, vm.ip, svc.spec.ip));
}

void Cluster::attach(VmInfo& vm) {
  const Service& svc = services_.at(vm.service);
  auto& own = fabric_.at(vm.host);
  own.add_port(vm.vif_port);
  if (vm.host != svc.host) {
    const auto near = fabric_.create_tunnel(svc.host, vm.host, fabric_.allocate_gre_key());
    vm.tunnel = near.port;
    vm.tunnel_far = fabric_.peer(svc.host, near.port)->port;
    jitsu(svc.host).heartbeats().track(host_name(vm.host), loop_.now());
  }
  install_host_rules(vm);
  vm.bucket = fabric_.at(svc.host).add_bucket(svc.app_id, sw::Bucket{0, 1, bucket_actions(vm)});
}

std::vector<sw::FlowKey> Cluster::detach(VmInfo& vm, bool force) {
  std::vector<sw::FlowKey> expired;
  const Service* svc = service(vm.service);
  if (svc && vm.bucket) {
    auto& fsw = fabric_.at(svc->host);
    const auto* g = fsw.group(svc->app_id);
    if (g && g->find(*vm.bucket)) {
      if (force) {
        expired = fsw.force_remove_bucket(svc->app_id, *vm.bucket);
      } else {
        fsw.remove_bucket(svc->app_id, *vm.bucket);
      }
    }
  }
  vm.bucket.reset();
  if (svc && vm.tunnel && fabric_.peer(svc->host, *vm.tunnel))
    fabric_.remove_tunnel(svc->host, *vm.tunnel);
  vm.tunnel.reset();
  vm.tunnel_far.reset();
  auto& own = fabric_.at(vm.host);
  for (auto id : vm.rules) own.remove_flow(id);
  vm.rules.clear();
  if (own.has_port(vm.vif_port)) own.remove_port(vm.vif_port);
  if (svc && svc->host != vm.host) {
    const bool others = std::any_of(vms_.begin(), vms_.end(), [&](const auto& kv) {
      const VmInfo& o = kv.second;
      if (&o == &vm || o.host != vm.host || o.first_instance || !o.tunnel) return false;
      const Service* os = service(o.service);
      return os && os->host == svc->host;
    });
    if (!others) jitsu(svc->host).heartbeats().untrack(host_name(vm.host));
  }
  return expired;
}

void Cluster::rebind(VmInfo& vm, DomId dom) {
  auto& own = fabric_.at(vm.host);
  const auto old_port = vm.vif_port;
  vm.dom_id = dom;
  vm.vif_port = vif_port(dom);
  own.add_port(vm.vif_port);
  for (auto id : vm.rules) own.remove_flow(id);
  vm.rules.clear();
  install_host_rules(vm);
  const Service& svc = services_.at(vm.service);
  if (vm.bucket) fabric_.at(svc.host).set_bucket_actions(svc.app_id, *vm.bucket, bucket_actions(vm));
  if (old_port != vm.vif_port && own.has_port(old_port)) own.remove_port(old_port);
  if (vm.first_instance) {
    const auto previous = VmRecord::load(store(vm.host), vm.name);
    write_first_instance_record(svc, vm, previous ? &*previous : nullptr);
  }
}

std::pair<sw::Ipv4, sw::MacAddr> Cluster::allocate_replica_address(HostId id) {
  auto& h = host(id);
  for (std::uint32_t off = 0; off < kReplicaAddresses; ++off) {
    if (h.used_addresses.count(off)) continue;
    h.used_addresses.insert(off);
    const std::uint32_t last = kReplicaAddressBase + off;
    sw::Ipv4 ip{(10u << 24) | (id << 8) | last};
    sw::MacAddr mac{{0x02, 0x00, 0x0a, 0x00, static_cast<std::uint8_t>(id),
                     static_cast<std::uint8_t>(last)}};
    return {ip, mac};
  }
  raise(Errc::NoCapacity, "replica address pool exhausted on " + host(id).name);
}

void Cluster::release_replica_address(HostId id, sw::Ipv4 ip) {
  host(id).used_addresses.erase((ip.value & 0xff) - kReplicaAddressBase);
}

void Cluster::remote_put(HostId target, const kv::Path& path, std::string value,
                         const kv::Identity& writer) {
  loop_.schedule_after(config_.store_delay, [this, target, path, value = std::move(value), writer] {
    if (!alive(target)) return;
    try {
      store(target).put(path, value, writer);
    } catch (const Error& e) {
      log("remote put to " + host_name(target) + " rejected: " + e.what());
    }
  });
}

void Cluster::crash_vm(const std::string& name) {
  auto* vm = vm_mut(name);
  if (!vm) raise(Errc::NotFound, "no vm " + name);
  if (vm->first_instance) raise(Errc::InvalidArgument, "first instances fail only with their host");
  if (!vm->executing) return;
  registry(vm->host).destroy_by_name(name);
  vm->executing = false;
  log("vm " + name + " crashed");
  notify_stopped(*vm, StopReason::Crashed);
}

void Cluster::reboot_vm(const std::string& name) {
  auto* vm = vm_mut(name);
  if (!vm) raise(Errc::NotFound, "no vm " + name);
  const auto dom = registry(vm->host).reboot(name);
  log("vm " + name + " rebooted as dom " + std::to_string(dom));
}

void Cluster::fail_host(HostId id) {
  auto& h = host(id);
  if (!h.alive) return;
  h.alive = false;
  h.jitsu->stop();
  h.registry->clear();
  log("host " + h.name + " failed");
  for (auto& [_, vm] : vms_) {
    if (vm.host != id || !vm.executing) continue;
    vm.executing = false;
    notify_stopped(vm, StopReason::HostFailed);
  }
  if (id == master_) loop_.schedule_after(config_.ha_detect_delay, [this] { on_master_failure(); });
}

void Cluster::on_master_failure() {
  std::optional<HostId> elected;
  for (const auto& [id, h] : hosts_)
    if (h.alive) {
      elected = id;
      break;
    }
  if (!elected) {
    log("failover: no live host");
    return;
  }
  master_ = *elected;
  log("failover: master is now " + host_name(master_));
  for (auto& [id, h] : hosts_) {
    if (!h.alive) continue;
    fabric_.reset_host(id);
    h.jitsu->reset();
  }

  std::vector<std::string> replicas;
  for (const auto& [name, vm] : vms_)
    if (!vm.first_instance) replicas.push_back(name);
  for (const auto& name : replicas) {
    VmInfo& vm = vms_.at(name);
    if (vm.executing) {
      vm.executing = false;
      notify_stopped(vm, StopReason::Failover);
    }
    if (alive(vm.host)) {
      registry(vm.host).destroy_by_name(name);
      auto& own = fabric_.at(vm.host);
      if (own.has_port(vm.vif_port)) own.remove_port(vm.vif_port);
      auto& s = store(vm.host);
      s.transact({{paths::vm(name), std::nullopt},
                  {paths::vm_aux(name), std::nullopt},
                  {paths::request_root(name), std::nullopt}},
                 s.admin());
    }
    release_replica_address(vm.host, vm.ip);
    vms_.erase(name);
  }

  for (auto& [name, svc] : services_) {
    VmInfo& fi = vms_.at(svc.spec.name);
    std::optional<VmRecord> previous;
    if (alive(svc.host)) {
      registry(svc.host).destroy_by_name(fi.name);
      auto& own = fabric_.at(svc.host);
      if (own.has_port(fi.vif_port)) own.remove_port(fi.vif_port);
      previous = VmRecord::load(store(svc.host), fi.name);
    } else {
      svc.host = master_;
    }
    fi.host = svc.host;
    fi.dom_id = registry(fi.host).create(fi.name);
    fi.vif_port = vif_port(fi.dom_id);
    fi.rules.clear();
    fi.bucket.reset();
    fi.executing = true;
    install_first_instance_network(svc, fi);
    write_first_instance_record(svc, fi, previous ? &*previous : nullptr);
    store(fi.host).grant(paths::request_root(fi.name), kv::AccessScope{fi.name, {}, {}});
    log("first instance " + fi.name + " rebooted on " + host_name(fi.host) + " dom " +
        std::to_string(fi.dom_id));
    notify_rebooted(fi);
  }
}

void Cluster::notify_running(const VmInfo& vm) {
  for (auto* o : observers_) o->on_vm_running(vm);
}

void Cluster::notify_halting(const VmInfo& vm) {
  for (auto* o : observers_) o->on_vm_halting(vm);
}

void Cluster::notify_stopped(const VmInfo& vm, StopReason reason) {
  for (auto* o : observers_) o->on_vm_stopped(vm, reason);
}

void Cluster::notify_rebooted(const VmInfo& vm) {
  for (auto* o : observers_) o->on_vm_rebooted(vm);
}

void Cluster::notify_expired(const std::vector<sw::FlowKey>& keys) {
  if (keys.empty()) return;
  for (auto* o : observers_) o->on_flows_expired(keys);
}

void Cluster::log(std::string what) { events_.push_back({loop_.now(), std::move(what)}); }

std::vector<std::string> Cluster::check_invariants() const {
  std::vector<std::string> bad;
  for (const auto& [name, svc] : services_) {
    std::size_t halting = 0;
    std::set<sw::BucketId> expected;
    for (const auto& [_, vm] : vms_) {
      if (vm.service != name) continue;
      if (vm.app_id != svc.app_id) bad.push_back("vm " + vm.name + " has a foreign app id");
      if (vm.state == VmState::Halting) ++halting;
      const bool live = vm.state == VmState::Running || vm.state == VmState::Halting;
      if (live && vm.bucket) expected.insert(*vm.bucket);
      if (live && !vm.bucket && vm.executing)
        bad.push_back("live vm " + vm.name + " has no bucket");
    }
    if (halting > 1) bad.push_back("service " + name + " has " + std::to_string(halting) + " halting replicas");
    if (!alive(svc.host)) continue;
    for (HostId h : hosts()) {
      if (!alive(h)) continue;
      const auto* g = fabric_.at(h).group(svc.app_id);
      if (h != svc.host && g) bad.push_back("group for " + name + " on non-first-instance host");
      if (h != svc.host) continue;
      if (!g) {
        bad.push_back("service " + name + " has no group");
        continue;
      }
      std::set<sw::BucketId> actual;
      for (const auto& b : g->buckets) actual.insert(b.id);
      if (actual != expected) bad.push_back("group of " + name + " does not match its live instances");
    }
  }
  for (const auto& [name, vm] : vms_) {
    if (!alive(vm.host)) continue;
    auto st = store(vm.host).get(paths::vm(name) / "state");
    if (st && *st != state_name(vm.state))
      bad.push_back("vm " + name + " store state " + *st + " differs from " +
                    std::string(state_name(vm.state)));
  }
  return bad;
}

}  // namespace fractal::orch
