#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "fractal/common/error.hpp"
#include "fractal/orchestrator/cluster.hpp"

namespace fractal::guest {

struct FractalResponse {
  bool ok = true;
  std::string message;  // non-empty iff !ok

  static FractalResponse success() { return {}; }
  static FractalResponse error(std::string message);
  // The error code named by the message, if it is one of ours.
  std::optional<Errc> code() const;
};

using Handler = std::function<void(const FractalResponse&)>;

// In-guest library. Invocations are written to this instance's request key;
// the orchestrator's answer arrives on the response key and is handed to the
// pending handler exactly once.
class FractalClient {
 public:
  FractalClient(orch::Cluster& cluster, std::string instance);
  ~FractalClient();

  FractalClient(const FractalClient&) = delete;
  FractalClient& operator=(const FractalClient&) = delete;

  const std::string& instance() const { return instance_; }

  void replicate(Handler handler);
  void halt(Handler handler);
  // The handler may never run: the VM can be destroyed first.
  void die(Handler handler);

  bool outstanding() const { return waiting_; }
  // Requests actually written to the store.
  std::uint64_t invocations() const { return invocations_; }

 private:
  void invoke(orch::Verb verb, Handler handler);

  orch::Cluster& cluster_;
  std::string instance_;
  std::string service_;
  orch::HostId host_;
  kv::WatchHandle watch_;
  bool waiting_ = false;
  Handler handler_;
  std::uint64_t invocations_ = 0;
};

}  // namespace fractal::guest
