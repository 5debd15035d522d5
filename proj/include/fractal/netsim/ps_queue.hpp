#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace fractal::sim {

using JobId = std::uint64_t;

// Processor-sharing server. All jobs present receive rate/n work per second,
// so every job advances the same virtual clock; a job finishes when that
// clock passes its arrival mark plus its size. Events cost O(log n).
class PsQueue {
 public:
  explicit PsQueue(double rate) : rate_(rate) {}

  double rate() const { return rate_; }
  void set_rate(double now, double rate);

  void arrive(double now, JobId id, double work);
  bool remove(double now, JobId id);
  std::vector<JobId> drop_all(double now);

  // Absolute time of the next completion with the current population.
  std::optional<double> next_completion() const;
  // Pops every job finished by `now`, earliest first.
  std::vector<JobId> complete_due(double now);

  std::size_t size() const { return jobs_.size(); }
  bool contains(JobId id) const { return index_.count(id) > 0; }
  // Total time with at least one job present, up to `now`.
  double busy_time(double now) const;

 private:
  void advance(double now);

  double rate_;
  double vclock_ = 0.0;
  double last_ = 0.0;
  double busy_ = 0.0;
  std::set<std::pair<double, JobId>> jobs_;  // (virtual finish, id)
  std::map<JobId, double> index_;
};

}  // namespace fractal::sim
