#include "fractal/netsim/ps_queue.hpp"

#include <algorithm>

#include "fractal/common/error.hpp"

namespace fractal::sim {

void PsQueue::advance(double now) {
  if (now < last_) raise(Errc::InvalidArgument, "ps queue time went backwards");
  const double dt = now - last_;
  if (!jobs_.empty()) {
    vclock_ += dt * rate_ / static_cast<double>(jobs_.size());
    busy_ += dt;
  }
  last_ = now;
}

void PsQueue::set_rate(double now, double rate) {
  if (!(rate > 0.0)) raise(Errc::InvalidArgument, "service rate must be positive");
  advance(now);
  rate_ = rate;
}

void PsQueue::arrive(double now, JobId id, double work) {
  advance(now);
  const double finish = vclock_ + std::max(work, 0.0);
  if (!index_.emplace(id, finish).second) raise(Errc::DuplicateKey, "job already queued");
  jobs_.emplace(finish, id);
}

bool PsQueue::remove(double now, JobId id) {
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  advance(now);
  jobs_.erase({it->second, id});
  index_.erase(it);
  return true;
}

std::vector<JobId> PsQueue::drop_all(double now) {
  advance(now);
  std::vector<JobId> out;
  for (const auto& [_, id] : jobs_) out.push_back(id);
  jobs_.clear();
  index_.clear();
  return out;
}

std::optional<double> PsQueue::next_completion() const {
  if (jobs_.empty()) return std::nullopt;
  const double remaining = std::max(0.0, jobs_.begin()->first - vclock_);
  return last_ + remaining * static_cast<double>(jobs_.size()) / rate_;
}

std::vector<JobId> PsQueue::complete_due(double now) {
  std::vector<JobId> out;
  // Advance in steps: each departure speeds up the rest.
  while (!jobs_.empty()) {
    const double t = *next_completion();
    if (t > now + 1e-12) break;
    advance(std::max(last_, std::min(t, now)));
    const auto [finish, id] = *jobs_.begin();
    jobs_.erase(jobs_.begin());
    index_.erase(id);
    out.push_back(id);
    // Snap the clock so rounding never leaves a job a hair short.
    vclock_ = std::max(vclock_, finish);
  }
  advance(now);
  return out;
}

double PsQueue::busy_time(double now) const {
  return busy_ + (jobs_.empty() ? 0.0 : std::max(0.0, now - last_));
}

}  // namespace fractal::sim
