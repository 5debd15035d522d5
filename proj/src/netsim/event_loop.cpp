#include "fractal/netsim/event_loop.hpp"

#include <string>

#include "fractal/common/error.hpp"

namespace fractal::sim {

EventId EventLoop::schedule(double time, std::function<void()> fn) {
  if (time < now_)
    raise(Errc::SchedulePast,
          "event at t=" + std::to_string(time) + " is before now=" + std::to_string(now_));
  const EventId id = next_seq_++;
  queue_.push(Event{time, id, std::move(fn)});
  live_.insert(id);
  return id;
}

void EventLoop::cancel(EventId id) {
  if (live_.erase(id)) cancelled_.insert(id);
}

bool EventLoop::step() {
  while (!queue_.empty()) {
    // priority_queue::top is const; the event is copied out before popping.
    Event ev = queue_.top();
    queue_.pop();
    if (cancelled_.erase(ev.seq)) continue;
    live_.erase(ev.seq);
    now_ = ev.time;
    ++executed_;
    ev.fn();
    return true;
  }
  return false;
}

void EventLoop::run_until(double t) {
  while (!queue_.empty()) {
    const auto& top = queue_.top();
    if (top.time > t) break;
    if (cancelled_.erase(top.seq)) {
      queue_.pop();
      continue;
    }
    step();
  }
  if (t > now_) now_ = t;
}

}  // namespace fractal::sim
