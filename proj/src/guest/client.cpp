#include "fractal/guest/client.hpp"

#include "fractal/orchestrator/records.hpp"

namespace fractal::guest {

FractalResponse FractalResponse::error(std::string message) {
  if (message.empty()) raise(Errc::InvalidArgument, "error response needs a message");
  return {false, std::move(message)};
}

std::optional<Errc> FractalResponse::code() const {
  if (ok) return std::nullopt;
  return orch::errc_from_wire(message);
}

FractalClient::FractalClient(orch::Cluster& cluster, std::string instance)
    : cluster_(cluster), instance_(std::move(instance)) {
  const orch::VmInfo* vm = cluster_.vm(instance_);
  if (!vm) raise(Errc::NotFound, "no vm " + instance_);
  service_ = vm->service;
  host_ = vm->host;
  watch_ = cluster_.store(host_).watch_key(orch::paths::response(instance_), [this](const kv::WatchEvent& ev) {
    if (!ev.value || !waiting_) return;
    FractalResponse r;
    try {
      const auto parsed = orch::Response::parse(*ev.value);
      r = parsed.ok ? FractalResponse::success() : FractalResponse::error(parsed.message);
    } catch (const Error&) {
      r = FractalResponse::error(orch::wire_message(Errc::Malformed));
    }
    waiting_ = false;
    auto h = std::move(handler_);
    handler_ = nullptr;
    if (h) h(r);
  });
}

FractalClient::~FractalClient() { cluster_.store(host_).unwatch(watch_); }

void FractalClient::replicate(Handler handler) { invoke(orch::Verb::Replicate, std::move(handler)); }
void FractalClient::halt(Handler handler) { invoke(orch::Verb::Halt, std::move(handler)); }
void FractalClient::die(Handler handler) { invoke(orch::Verb::Die, std::move(handler)); }

void FractalClient::invoke(orch::Verb verb, Handler handler) {
  if (waiting_) {
    if (handler) handler(FractalResponse::error(orch::wire_message(Errc::InvocationPending)));
    return;
  }
  orch::RequestRecord req{verb, verb == orch::Verb::Replicate ? service_ : instance_, {}};
  waiting_ = true;
  handler_ = std::move(handler);
  ++invocations_;
  try {
    cluster_.store(host_).put(orch::paths::request(instance_), req.encode(), instance_);
  } catch (const Error& e) {
    // Scope gone: the VM is being torn down.
    if (waiting_) {
      waiting_ = false;
      auto h = std::move(handler_);
      handler_ = nullptr;
      if (h) h(FractalResponse::error(orch::wire_message(e.code())));
    }
  }
}

}  // namespace fractal::guest
