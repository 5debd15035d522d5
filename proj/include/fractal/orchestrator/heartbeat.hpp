#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fractal::orch {

// Last-seen timestamps for the hosts carrying replicas of locally
// first-instanced services. A host silent for longer than
// interval * multiplier is reported by check() once.
class HeartbeatTable {
 public:
  HeartbeatTable(double interval, int multiplier);

  double interval() const { return interval_; }
  int multiplier() const { return multiplier_; }
  double timeout() const { return interval_ * multiplier_; }

  // Starts expecting beats; a host already tracked keeps its timestamp.
  void track(const std::string& host, double now);
  void untrack(const std::string& host);
  bool tracked(const std::string& host) const { return last_.count(host) > 0; }
  // False (and nothing stored) for an untracked host.
  bool beat(const std::string& host, double now);
  // Hosts newly past the timeout. A reported host stays failed until
  // untracked.
  std::vector<std::string> check(double now);
  bool failed(const std::string& host) const;
  std::optional<double> last(const std::string& host) const;

 private:
  struct Entry {
    double last = 0.0;
    bool failed = false;
  };
  double interval_;
  int multiplier_;
  std::map<std::string, Entry> last_;
};

}  // namespace fractal::orch
