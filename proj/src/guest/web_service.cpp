#include "fractal/guest/web_service.hpp"

#include "fractal/common/error.hpp"

namespace fractal::guest {

void ScalePolicy::validate() const {
  if (!(lo_rps >= 0.0 && lo_rps < hi_rps)) raise(Errc::InvalidArgument, "thresholds inverted");
  if (poll_halt < 1) raise(Errc::InvalidArgument, "poll_halt must be at least 1");
  if (!(poll_period > 0.0) || !(window > 0.0))
    raise(Errc::InvalidArgument, "poll period and window must be positive");
}

double RateMeter::rate(double now, double window) {
  while (!times_.empty() && times_.front() <= now - window) {
    times_.pop_front();
    ++total_;
  }
  return static_cast<double>(times_.size()) / window;
}

WebService::WebService(GuestRuntime& runtime, std::string instance, AppRepo& repo)
    : runtime_(runtime),
      instance_(std::move(instance)),
      repo_(repo),
      client_(runtime.cluster(), instance_) {}

WebService::~WebService() { stop(); }

void WebService::start() {
  halted_ = false;
  if (!poll_event_) schedule_poll();
}

void WebService::stop() {
  halted_ = true;
  if (poll_event_) runtime_.cluster().loop().cancel(*poll_event_);
  poll_event_.reset();
}

void WebService::schedule_poll() {
  if (halted_) return;
  poll_event_ = runtime_.cluster().loop().schedule_after(runtime_.options().policy.poll_period,
                                                         [this] { poll(); });
}

void WebService::served(double t, const std::string& desc) {
  meter_.record(t);
  if (runtime_.options().log_requests) {
    runtime_.note_appended(repo_.append(t, desc));
  } else {
    ++unlogged_;
  }
}

void WebService::flush_summary(double now) {
  if (unlogged_ == 0) return;
  runtime_.note_appended(repo_.append(now, "served " + std::to_string(unlogged_)));
  unlogged_ = 0;
}

double WebService::current_rps() {
  return meter_.rate(runtime_.cluster().loop().now(), runtime_.options().policy.window);
}

void WebService::track(orch::Verb verb, Handler then) {
  const auto idx = runtime_.record_invocation({runtime_.cluster().loop().now(), instance_, verb, {}});
  Handler h = [this, idx, then = std::move(then)](const FractalResponse& r) {
    runtime_.answer_invocation(idx, r);
    if (then) then(r);
  };
  switch (verb) {
    case orch::Verb::Replicate: client_.replicate(std::move(h)); break;
    case orch::Verb::Halt: client_.halt(std::move(h)); break;
    case orch::Verb::Die: client_.die(std::move(h)); break;
  }
}

void WebService::poll() {
  poll_event_.reset();
  ++polls_;
  const auto& p = runtime_.options().policy;
  flush_summary(runtime_.cluster().loop().now());
  if (!runtime_.options().scaling) {
    schedule_poll();
    return;
  }
  const double rps = current_rps();
  if (rps >= p.hi_rps) {
    track(orch::Verb::Replicate, nullptr);
    n_ = 0;
    schedule_poll();
  } else if (n_ < p.poll_halt) {
    ++n_;
    schedule_poll();
  } else if (rps <= p.lo_rps) {
    track(orch::Verb::Halt, [this](const FractalResponse& r) {
      if (halted_) return;
      if (r.ok) {
        // Persist before asking to be collected.
        merge_state();
        halted_ = true;
        track(orch::Verb::Die, nullptr);
      } else {
        n_ = 0;
        schedule_poll();
      }
    });
  } else {
    n_ = 0;
    schedule_poll();
  }
}

void WebService::merge_state() {
  const orch::VmInfo* vm = runtime_.cluster().vm(instance_);
  if (!vm || vm->first_instance) return;
  merge_into(runtime_.first_repo(vm->service));
}

void WebService::merge_into(AppRepo* first) {
  flush_summary(runtime_.cluster().loop().now());
  if (!first || first == &repo_) return;
  repo_.merge_into(*first);
  runtime_.note_merge();
}

GuestRuntime::GuestRuntime(orch::Cluster& cluster, GuestOptions options)
    : cluster_(cluster), options_(std::move(options)) {
  options_.policy.validate();
  cluster_.add_observer(this);
  for (const auto& [_, vm] : cluster_.vms())
    if (vm.executing && vm.state == orch::VmState::Running) launch(vm);
}

GuestRuntime::~GuestRuntime() {
  cluster_.remove_observer(this);
  services_.clear();
  retired_.clear();
}

WebService* GuestRuntime::service(const std::string& instance) {
  auto it = services_.find(instance);
  return it == services_.end() ? nullptr : it->second.get();
}

AppRepo* GuestRuntime::repo(const std::string& instance) {
  auto it = repos_.find(instance);
  return it == repos_.end() ? nullptr : it->second.get();
}

AppRepo* GuestRuntime::first_repo(const std::string& service) {
  const orch::Service* svc = cluster_.service(service);
  return svc ? repo(svc->spec.name) : nullptr;
}

std::size_t GuestRuntime::record_invocation(Invocation inv) {
  invocations_.push_back(std::move(inv));
  return invocations_.size() - 1;
}

void GuestRuntime::answer_invocation(std::size_t index, const FractalResponse& r) {
  invocations_.at(index).response = r;
}

void GuestRuntime::launch(const orch::VmInfo& vm) {
  retired_.clear();
  auto& repo = repos_[vm.name];
  if (!repo) {
    AppRepo* first = vm.first_instance ? nullptr : first_repo(vm.service);
    // Replica names are reused once an address is released; the domain id
    // keeps each incarnation's entry ids distinct.
    repo = first ? first->clone_for(vm.name + ".d" + std::to_string(vm.dom_id)) : std::make_unique<AppRepo>(vm.name);
  }
  auto svc = std::make_unique<WebService>(*this, vm.name, *repo);
  svc->start();
  services_[vm.name] = std::move(svc);
}

void GuestRuntime::retire(const std::string& instance) {
  auto it = services_.find(instance);
  if (it == services_.end()) return;
  it->second->stop();
  // A handler of this service may be on the stack.
  retired_.push_back(std::move(it->second));
  services_.erase(it);
}

void GuestRuntime::on_vm_running(const orch::VmInfo& vm) { launch(vm); }

void GuestRuntime::on_vm_stopped(const orch::VmInfo& vm, orch::StopReason reason) {
  // Requests served while draining finished after merge_state; fold them in
  // too. A crashed replica's log is lost with it.
  if (reason == orch::StopReason::Destroyed && !vm.first_instance)
    if (WebService* s = service(vm.name)) s->merge_into(first_repo(vm.service));
  retire(vm.name);
  // A replica's log survives only through merge_state.
  if (!vm.first_instance) repos_.erase(vm.name);
}

void GuestRuntime::on_vm_rebooted(const orch::VmInfo& vm) {
  retire(vm.name);
  launch(vm);
}

}  // namespace fractal::guest
