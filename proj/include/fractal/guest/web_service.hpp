#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fractal/guest/app_log.hpp"
#include "fractal/guest/client.hpp"
#include "fractal/orchestrator/cluster.hpp"

namespace fractal::guest {

struct ScalePolicy {
  double lo_rps = 100.0;
  double hi_rps = 1000.0;
  int poll_halt = 10;
  double poll_period = 1.0;
  double window = 1.0;  // trailing rate window

  // Throws InvalidArgument unless 0 <= lo < hi, poll_halt >= 1 and the
  // period and window are positive.
  void validate() const;
};

struct GuestOptions {
  ScalePolicy policy;
  bool scaling = true;  // false: the poll loop never invokes the orchestrator
  // Log every completed request; otherwise one summary entry per busy poll.
  bool log_requests = false;
};

// Completions over a trailing window.
class RateMeter {
 public:
  void record(double t) { times_.push_back(t); }
  // Completions in (now - window, now] divided by window.
  double rate(double now, double window);
  std::uint64_t total() const { return total_ + times_.size(); }

 private:
  std::deque<double> times_;
  std::uint64_t total_ = 0;  // pruned completions
};

class GuestRuntime;

struct Invocation {
  double time = 0.0;
  std::string instance;
  orch::Verb verb = orch::Verb::Replicate;
  std::optional<FractalResponse> response;  // unset until answered
};

// The self-scaling web service running in one instance.
class WebService {
 public:
  WebService(GuestRuntime& runtime, std::string instance, AppRepo& repo);
  ~WebService();

  WebService(const WebService&) = delete;
  WebService& operator=(const WebService&) = delete;

  const std::string& instance() const { return instance_; }
  void start();
  void stop();
  bool polling() const { return poll_event_.has_value(); }

  // A request finished on this instance.
  void served(double t, const std::string& desc);
  double current_rps();
  std::uint64_t polls() const { return polls_; }
  int quiet_polls() const { return n_; }

  // Folds this instance's log into the first instance's log.
  void merge_state();
  void merge_into(AppRepo* first);

  FractalClient& client() { return client_; }
  AppRepo& repo() { return repo_; }

 private:
  void poll();
  void schedule_poll();
  void track(orch::Verb verb, Handler then);
  void flush_summary(double now);

  GuestRuntime& runtime_;
  std::string instance_;
  AppRepo& repo_;
  FractalClient client_;
  RateMeter meter_;
  int n_ = 0;
  std::uint64_t polls_ = 0;
  std::uint64_t unlogged_ = 0;
  bool halted_ = false;
  std::optional<sim::EventId> poll_event_;
};

// Starts a web service in every VM that comes up and keeps each instance's
// application repository.
class GuestRuntime : public orch::VmObserver {
 public:
  GuestRuntime(orch::Cluster& cluster, GuestOptions options);
  ~GuestRuntime() override;

  orch::Cluster& cluster() { return cluster_; }
  const GuestOptions& options() const { return options_; }

  WebService* service(const std::string& instance);
  AppRepo* repo(const std::string& instance);
  // The log of the service's first instance.
  AppRepo* first_repo(const std::string& service);

  // Every invocation any instance issued, in order.
  const std::vector<Invocation>& invocations() const { return invocations_; }
  std::size_t record_invocation(Invocation inv);
  void answer_invocation(std::size_t index, const FractalResponse& r);
  // Every log entry id ever appended, first instance included.
  const std::vector<std::string>& appended() const { return appended_; }
  void note_appended(std::string id) { appended_.push_back(std::move(id)); }
  std::uint64_t merges() const { return merges_; }
  void note_merge() { ++merges_; }

  void on_vm_running(const orch::VmInfo& vm) override;
  void on_vm_stopped(const orch::VmInfo& vm, orch::StopReason reason) override;
  void on_vm_rebooted(const orch::VmInfo& vm) override;

 private:
  void launch(const orch::VmInfo& vm);
  void retire(const std::string& instance);

  orch::Cluster& cluster_;
  GuestOptions options_;
  std::map<std::string, std::unique_ptr<AppRepo>> repos_;
  std::map<std::string, std::unique_ptr<WebService>> services_;
  std::vector<std::unique_ptr<WebService>> retired_;
  std::vector<Invocation> invocations_;
  std::vector<std::string> appended_;
  std::uint64_t merges_ = 0;
};

}  // namespace fractal::guest
