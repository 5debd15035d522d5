#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <unordered_set>
#include <vector>

namespace fractal::sim {

using EventId = std::uint64_t;

// Discrete-event clock. Events run in (time, insertion sequence) order, so a
// scenario replayed with the same inputs produces the same trace.
class EventLoop {
 public:
  double now() const { return now_; }

  // Throws Error(SchedulePast) if time < now().
  EventId schedule(double time, std::function<void()> fn);
  EventId schedule_after(double delay, std::function<void()> fn) {
    return schedule(now_ + delay, std::move(fn));
  }
  void cancel(EventId id);

  // Runs every event with time <= t, then advances the clock to t.
  void run_until(double t);
  // Runs the next event; false when the queue is empty.
  bool step();

  std::size_t pending() const { return live_.size(); }
  std::uint64_t executed() const { return executed_; }

 private:
  struct Event {
    double time;
    EventId seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  double now_ = 0.0;
  EventId next_seq_ = 1;
  std::uint64_t executed_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::unordered_set<EventId> live_;
  std::unordered_set<EventId> cancelled_;
};

}  // namespace fractal::sim
