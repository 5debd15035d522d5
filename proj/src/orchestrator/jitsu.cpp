#include "fractal/orchestrator/jitsu.hpp"

#include <algorithm>

#include "fractal/common/error.hpp"

namespace fractal::orch {

Jitsu::Jitsu(Cluster& cluster, HostId host)
    : cluster_(cluster),
      host_(host),
      heartbeats_(cluster.config().heartbeat_interval, cluster.config().heartbeat_multiplier) {}

const std::string& Jitsu::name() const { return cluster_.host_name(host_); }

kv::Identity Jitsu::identity() const { return Cluster::jitsu_identity(name()); }

void Jitsu::start() {
  if (running_) return;
  running_ = true;
  auto& s = cluster_.store(host_);
  watches_.push_back(s.watch_subtree(paths::requests(), [this](const kv::WatchEvent& ev) {
    const auto& seg = ev.path.segments();
    if (!running_ || !ev.value || seg.size() != 4 || seg[3] != "request") return;
    handle_request(seg[2], *ev.value);
  }));
  watches_.push_back(s.watch_subtree(paths::heartbeats(), [this](const kv::WatchEvent& ev) {
    const auto& seg = ev.path.segments();
    if (!running_ || !ev.value || seg.size() != 3) return;
    heartbeat_update(seg[2], cluster_.loop().now());
  }));
  for (HostId other : cluster_.hosts()) {
    if (other == host_) continue;
    auto h = cluster_.store(other).watch_key(
        paths::response(name()), [this, other](const kv::WatchEvent& ev) {
          if (!running_ || !ev.value) return;
          const auto epoch = epoch_;
          cluster_.loop().schedule_after(cluster_.config().store_delay,
                                         [this, other, epoch, v = *ev.value] {
                                           if (running_ && epoch == epoch_) on_remote_response(other, v);
                                         });
        });
    remote_watches_.emplace_back(other, h);
  }
  monitor_event_ = cluster_.loop().schedule_after(cluster_.config().monitor_period,
                                                  [this] { monitor_timer(); });
  heartbeat_event_ = cluster_.loop().schedule_after(cluster_.config().heartbeat_interval,
                                                    [this] { heartbeat_timer(); });
}

void Jitsu::stop() {
  if (!running_) return;
  running_ = false;
  auto& loop = cluster_.loop();
  if (monitor_event_) loop.cancel(*monitor_event_);
  if (heartbeat_event_) loop.cancel(*heartbeat_event_);
  monitor_event_.reset();
  heartbeat_event_.reset();
  auto& s = cluster_.store(host_);
  for (const auto& w : watches_) s.unwatch(w);
  watches_.clear();
  for (const auto& [other, w] : remote_watches_) cluster_.store(other).unwatch(w);
  remote_watches_.clear();
  reset();
}

void Jitsu::reset() {
  ++epoch_;
  pending_.clear();
  outbound_.clear();
  heartbeats_ = HeartbeatTable(cluster_.config().heartbeat_interval,
                               cluster_.config().heartbeat_multiplier);
}

void Jitsu::respond(const std::string& requester, const Response& r) {
  auto& s = cluster_.store(host_);
  s.put(paths::response(requester), r.encode(), s.admin());
}

void Jitsu::handle_request(const std::string& requester, const std::string& value) {
  RequestRecord req;
  try {
    req = RequestRecord::parse(value);
  } catch (const Error& e) {
    cluster_.log(name() + ": malformed request from " + requester + ": " + e.what());
    respond(requester, Response::error(Errc::Malformed));
    return;
  }
  if (const auto* vm = cluster_.vm(requester); vm && vm->host == host_) {
    handle_local(requester, req);
  } else if (auto h = cluster_.host_by_name(requester); h && *h != host_) {
    handle_remote(requester, req);
  } else {
    respond(requester, Response::error(Errc::PermissionDenied));
  }
}

void Jitsu::handle_local(const std::string& requester, const RequestRecord& req) {
  if (pending_.count(requester)) {
    respond(requester, Response::error(Errc::InvocationPending));
    return;
  }
  const VmInfo* vm = cluster_.vm(requester);
  // Instances act only on themselves and their own service.
  const std::string& own = req.verb == Verb::Replicate ? vm->service : vm->name;
  if (req.target != own || req.remote) {
    respond(requester, Response::error(Errc::PermissionDenied));
    return;
  }
  switch (req.verb) {
    case Verb::Replicate: replicate(requester); break;
    case Verb::Halt: halt(requester); break;
    case Verb::Die: die(requester); break;
  }
}

void Jitsu::handle_remote(const std::string& requester_host, const RequestRecord& req) {
  if (req.verb != Verb::Replicate || !req.remote || req.target != name()) {
    respond(requester_host, Response::error(Errc::Malformed));
    return;
  }
  if (pending_.count(requester_host)) {
    respond(requester_host, Response::error(Errc::InvocationPending));
    return;
  }
  const Service* svc = cluster_.service_by_app(sw::Ipv4::from_hex(req.remote->app_id).value);
  if (!svc) {
    respond(requester_host, Response::error(Errc::NotFound));
    return;
  }
  pending_.insert(requester_host);
  const auto epoch = epoch_;
  boot_replica(*svc, requester_host, req.remote->ttl, req.remote->stop_mode,
               [this, requester_host, epoch](const Response& r) {
                 if (epoch != epoch_) return;
                 pending_.erase(requester_host);
                 respond(requester_host, r);
               });
}

void Jitsu::replicate(const std::string& requester) {
  const VmInfo* vm = cluster_.vm(requester);
  const Service* svc = cluster_.service(vm->service);
  const auto target = cluster_.place(host_);
  if (!target) {
    respond(requester, Response::error(Errc::NoCapacity));
    return;
  }
  pending_.insert(requester);
  const auto ttl = cluster_.config().replica_ttl;
  if (*target == host_) {
    const auto epoch = epoch_;
    boot_replica(*svc, "", ttl, svc->spec.stop_mode, [this, requester, epoch](const Response& r) {
      if (epoch != epoch_) return;
      pending_.erase(requester);
      if (cluster_.vm(requester)) respond(requester, r);
    });
    return;
  }
  RequestRecord remote;
  remote.verb = Verb::Replicate;
  remote.target = cluster_.host_name(*target);
  remote.remote = RemoteBootParams{svc->app_hex(), ttl, svc->spec.stop_mode, svc->spec.image};
  auto& q = outbound_[*target];
  q.push_back({requester, remote});
  // One outstanding request per (this host, target) pair; the rest queue.
  if (q.size() == 1) send_next(*target);
}

void Jitsu::send_next(HostId target) {
  const auto& front = outbound_.at(target).front();
  cluster_.remote_put(target, paths::request(name()), front.request.encode(), identity());
}

void Jitsu::on_remote_response(HostId target, const std::string& value) {
  auto& q = outbound_[target];
  if (q.empty()) {
    cluster_.log(name() + ": unexpected response from " + cluster_.host_name(target));
    return;
  }
  const auto ob = q.front();
  q.pop_front();
  pending_.erase(ob.requester);
  if (cluster_.vm(ob.requester)) {
    auto& s = cluster_.store(host_);
    s.put(paths::response(ob.requester), value, s.admin());
  }
  if (!q.empty()) send_next(target);
}

void Jitsu::boot_replica(const Service& svc, const std::string& initial_xs, std::uint32_t ttl,
                         const std::string& stop_mode, std::function<void(const Response&)> done) {
  if (cluster_.load(host_) >= cluster_.config().slots()) {
    done(Response::error(Errc::NoCapacity));
    return;
  }
  std::pair<sw::Ipv4, sw::MacAddr> addr;
  try {
    addr = cluster_.allocate_replica_address(host_);
  } catch (const Error&) {
    done(Response::error(Errc::NoCapacity));
    return;
  }
  VmInfo vm;
  vm.name = addr.second.str();
  vm.service = svc.spec.name;
  vm.host = host_;
  vm.dom_id = cluster_.registry(host_).create(vm.name);
  vm.app_id = svc.app_id;
  vm.ip = addr.first;
  vm.mac = addr.second;
  vm.vif_port = Cluster::vif_port(vm.dom_id);
  vm.first_instance = false;
  vm.state = VmState::Provisioning;
  vm.requester = initial_xs;
  vm.ttl = ttl;

  VmRecord r;
  r.name = vm.name;
  r.dom_id = vm.dom_id;
  r.app_id = svc.app_hex();
  r.state = vm.state;
  r.stop_mode = stop_mode;
  r.ip = vm.ip.str();
  r.first_instance_host = cluster_.host_name(svc.host);
  auto m = r.to_mutations();
  m.push_back({paths::initial_xs(vm.name), initial_xs});
  m.push_back({paths::ttl(vm.name), std::to_string(ttl)});
  auto& s = cluster_.store(host_);
  s.transact(m, s.admin());
  s.grant(paths::request_root(vm.name), kv::AccessScope{vm.name, {}, {}});
  const auto name = vm.name;
  cluster_.register_vm(std::move(vm));
  cluster_.log(this->name() + ": booting replica " + name + " of " + svc.spec.name);

  const auto epoch = epoch_;
  cluster_.loop().schedule_after(cluster_.config().boot_delay, [this, name, epoch, done] {
    if (!running_) return;
    VmInfo* v = cluster_.vm_mut(name);
    if (epoch != epoch_ || !v || !v->executing || !cluster_.registry(host_).dom_of(name)) {
      done(Response::error(Errc::BootFailed));
      return;
    }
    cluster_.attach(*v);
    cluster_.set_state(*v, VmState::Running);
    cluster_.log(this->name() + ": replica " + name + " running");
    cluster_.notify_running(*v);
    done(Response::success());
  });
}

void Jitsu::halt(const std::string& requester) {
  VmInfo* vm = cluster_.vm_mut(requester);
  if (vm->first_instance) {
    respond(requester, Response::error(Errc::PermissionDenied));
    return;
  }
  if (vm->state != VmState::Running) {
    respond(requester, Response::error(Errc::NotRunning));
    return;
  }
  // At most one halting replica per service.
  for (const auto& [name, other] : cluster_.vms()) {
    if (other.service == vm->service && other.state == VmState::Halting) {
      respond(requester, Response::error(Errc::Retry));
      return;
    }
  }
  const Service* svc = cluster_.service(vm->service);
  if (vm->bucket) cluster_.fabric().at(svc->host).set_bucket_weight(svc->app_id, *vm->bucket, 0);
  cluster_.set_state(*vm, VmState::Halting);
  cluster_.log(name() + ": " + requester + " halting");
  cluster_.notify_halting(*vm);
  respond(requester, Response::success());
}

void Jitsu::die(const std::string& requester) {
  VmInfo* vm = cluster_.vm_mut(requester);
  if (vm->first_instance) {
    respond(requester, Response::error(Errc::PermissionDenied));
    return;
  }
  if (vm->state != VmState::Halting) {
    respond(requester, Response::error(Errc::NotHalting));
    return;
  }
  vm->ttl = 0;
  auto& s = cluster_.store(host_);
  s.put(paths::ttl(requester), "0", s.admin());
  respond(requester, Response::success());
}

void Jitsu::delete_metadata(const std::string& vm_name) {
  auto& s = cluster_.store(host_);
  s.transact({{paths::vm(vm_name), std::nullopt},
              {paths::vm_aux(vm_name), std::nullopt},
              {paths::request_root(vm_name), std::nullopt}},
             s.admin());
}

void Jitsu::destroy(VmInfo& vm, StopReason reason, bool force) {
  const auto expired = cluster_.detach(vm, force);
  cluster_.registry(host_).destroy_by_name(vm.name);
  if (vm.executing) {
    vm.executing = false;
    cluster_.notify_stopped(vm, reason);
  }
  cluster_.set_state(vm, VmState::Dead);
  delete_metadata(vm.name);
  cluster_.release_replica_address(vm.host, vm.ip);
  const auto vm_name = vm.name;
  cluster_.erase_vm(vm_name);
  cluster_.notify_expired(expired);
}

std::vector<RecoveryAction> Jitsu::monitor_tick() {
  std::vector<RecoveryAction> out;
  auto& s = cluster_.store(host_);
  auto& reg = cluster_.registry(host_);
  for (const auto& vm_name : s.children(paths::vms())) {
    VmInfo* vm = cluster_.vm_mut(vm_name);
    if (!vm || vm->host != host_) continue;
    const auto dom = reg.dom_of(vm_name);
    if (!dom) {
      if (vm->first_instance) continue;
      const auto expired = cluster_.detach(*vm, true);
      if (vm->executing) {
        vm->executing = false;
        cluster_.notify_stopped(*vm, StopReason::Crashed);
      }
      cluster_.set_state(*vm, VmState::Dead);
      delete_metadata(vm_name);
      cluster_.release_replica_address(vm->host, vm->ip);
      cluster_.erase_vm(vm_name);
      cluster_.notify_expired(expired);
      out.push_back({RecoveryAction::Kind::CrashCollected, vm_name,
                     std::to_string(expired.size()) + " pinned flows lost"});
      continue;
    }
    if (*dom != vm->dom_id && vm->state != VmState::Provisioning) {
      const auto old = vm->dom_id;
      cluster_.rebind(*vm, *dom);
      if (!vm->first_instance) s.put(paths::vm(vm_name) / "dom-id", std::to_string(*dom), s.admin());
      cluster_.notify_rebooted(*vm);
      out.push_back({RecoveryAction::Kind::Reconciled, vm_name,
                     "dom " + std::to_string(old) + " -> " + std::to_string(*dom)});
    }
    if (!vm->first_instance && vm->state == VmState::Halting && s.get(paths::ttl(vm_name)) == "0") {
      const Service* svc = cluster_.service(vm->service);
      std::size_t pinned = 0;
      if (svc && vm->bucket && cluster_.alive(svc->host))
        pinned = cluster_.fabric().at(svc->host).pinned_count(svc->app_id, *vm->bucket);
      if (pinned == 0) {
        destroy(*vm, StopReason::Destroyed, false);
        out.push_back({RecoveryAction::Kind::Destroyed, vm_name, "ttl reached zero"});
      }
    }
  }
  for (const auto& failed : heartbeats_.check(cluster_.loop().now())) {
    auto h = cluster_.host_by_name(failed);
    if (!h) continue;
    auto acts = on_host_failure(*h);
    out.insert(out.end(), acts.begin(), acts.end());
  }
  // Requests parked on a host that has since died will never be answered.
  for (auto& [target, q] : outbound_) {
    if (cluster_.alive(target)) continue;
    for (const auto& ob : q) {
      pending_.erase(ob.requester);
      if (cluster_.vm(ob.requester)) respond(ob.requester, Response::error(Errc::BootFailed));
    }
    q.clear();
  }
  for (const auto& a : out)
    cluster_.log(name() + ": " + std::string(action_name(a.kind)) + " " + a.subject + " (" + a.detail + ")");
  actions_.insert(actions_.end(), out.begin(), out.end());
  return out;
}

void Jitsu::heartbeat_update(const std::string& host, double now) {
  if (!heartbeats_.beat(host, now))
    cluster_.log(name() + ": heartbeat from untracked host " + host + " ignored");
}

std::vector<RecoveryAction> Jitsu::on_host_failure(HostId failed) {
  std::vector<RecoveryAction> out;
  const auto& failed_name = cluster_.host_name(failed);
  out.push_back({RecoveryAction::Kind::HostFailed, failed_name, "heartbeat timeout"});
  std::vector<std::string> victims;
  for (const auto& [vm_name, vm] : cluster_.vms()) {
    if (vm.host != failed || vm.first_instance) continue;
    const Service* svc = cluster_.service(vm.service);
    if (svc && svc->host == host_) victims.push_back(vm_name);
  }
  for (const auto& vm_name : victims) {
    VmInfo& vm = *cluster_.vm_mut(vm_name);
    const auto expired = cluster_.detach(vm, true);
    if (vm.executing) {
      vm.executing = false;
      cluster_.notify_stopped(vm, StopReason::HostFailed);
    }
    cluster_.set_state(vm, VmState::Dead);
    auto& fs = cluster_.store(failed);
    fs.transact({{paths::vm(vm_name), std::nullopt},
                 {paths::vm_aux(vm_name), std::nullopt},
                 {paths::request_root(vm_name), std::nullopt}},
                fs.admin());
    cluster_.release_replica_address(failed, vm.ip);
    cluster_.erase_vm(vm_name);
    cluster_.notify_expired(expired);
    out.push_back({RecoveryAction::Kind::BucketRemoved, vm_name,
                   std::to_string(expired.size()) + " pinned flows lost"});
  }
  heartbeats_.untrack(failed_name);
  return out;
}

void Jitsu::monitor_timer() {
  monitor_event_.reset();
  if (!running_) return;
  monitor_tick();
  monitor_event_ = cluster_.loop().schedule_after(cluster_.config().monitor_period,
                                                  [this] { monitor_timer(); });
}

void Jitsu::heartbeat_timer() {
  heartbeat_event_.reset();
  if (!running_) return;
  std::set<HostId> targets;
  for (const auto& [_, vm] : cluster_.vms()) {
    if (vm.host != host_ || vm.first_instance || !vm.executing) continue;
    const Service* svc = cluster_.service(vm.service);
    if (svc && svc->host != host_) targets.insert(svc->host);
  }
  const auto stamp = std::to_string(cluster_.loop().now());
  for (HostId t : targets) cluster_.remote_put(t, paths::heartbeat(name()), stamp, identity());
  heartbeat_event_ = cluster_.loop().schedule_after(cluster_.config().heartbeat_interval,
                                                    [this] { heartbeat_timer(); });
}

}  // namespace fractal::orch
