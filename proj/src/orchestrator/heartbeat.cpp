#include "fractal/orchestrator/heartbeat.hpp"

#include "fractal/common/error.hpp"

namespace fractal::orch {

HeartbeatTable::HeartbeatTable(double interval, int multiplier)
    : interval_(interval), multiplier_(multiplier) {
  if (!(interval > 0.0) || multiplier < 1)
    raise(Errc::InvalidArgument, "heartbeat interval must be > 0 and multiplier >= 1");
}

void HeartbeatTable::track(const std::string& host, double now) {
  last_.try_emplace(host, Entry{now, false});
}

void HeartbeatTable::untrack(const std::string& host) { last_.erase(host); }

bool HeartbeatTable::beat(const std::string& host, double now) {
  auto it = last_.find(host);
  if (it == last_.end()) return false;
  if (!it->second.failed && now > it->second.last) it->second.last = now;
  return true;
}

std::vector<std::string> HeartbeatTable::check(double now) {
  std::vector<std::string> out;
  for (auto& [host, e] : last_) {
    if (!e.failed && now - e.last > timeout()) {
      e.failed = true;
      out.push_back(host);
    }
  }
  return out;
}

bool HeartbeatTable::failed(const std::string& host) const {
  auto it = last_.find(host);
  return it != last_.end() && it->second.failed;
}

std::optional<double> HeartbeatTable::last(const std::string& host) const {
  auto it = last_.find(host);
  if (it == last_.end()) return std::nullopt;
  return it->second.last;
}

}  // namespace fractal::orch
