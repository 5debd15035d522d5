#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fractal/netsim/event_loop.hpp"
#include "fractal/switchfab/flow.hpp"

namespace fractal::sim {

struct SizeBucket {
  std::uint32_t bytes = 0;
  double freq = 0.0;
};

struct RateStep {
  double start = 0.0;
  double rps = 0.0;
};

// Ten-bucket synthetic page-size mix, mean about 42 KiB.
std::vector<SizeBucket> default_page_sizes();

struct WorkloadSpec {
  std::vector<SizeBucket> sizes = default_page_sizes();
  std::size_t urls = 100;
  std::vector<RateStep> schedule;  // rate holds until the next step
  double jitter = 0.1;             // fraction of the inter-arrival gap

  // Throws InvalidArgument: frequencies must sum to 1, step times strictly
  // increase, rates are non-negative.
  void validate() const;
  double mean_size() const;

  // `steps` windows of `period` seconds, the first at `first_rps`.
  static std::vector<RateStep> ramp(double start, double first_rps, double step_rps, double period,
                                    std::size_t steps);
};

struct Request {
  std::uint64_t seq = 0;
  double time = 0.0;
  sw::FlowKey key;
  std::uint32_t bytes = 0;
  std::uint32_t url = 0;
};

// Evenly spaced arrivals per schedule window, each displaced by a seeded
// uniform jitter. Every request gets a distinct client 5-tuple.
class WorkloadGenerator {
 public:
  WorkloadGenerator(WorkloadSpec spec, std::uint64_t seed, sw::Ipv4 service_ip, std::uint16_t port);

  const WorkloadSpec& spec() const { return spec_; }
  // Size of each seed URL; counts per bucket follow the frequencies.
  const std::vector<std::uint32_t>& url_sizes() const { return url_sizes_; }

  // Feeds arrivals up to `until` into `sink`, one pending event at a time.
  void start(EventLoop& loop, double until, std::function<void(const Request&)> sink);
  // Same stream, generated eagerly.
  std::vector<Request> generate(double until);

  std::uint64_t emitted() const { return seq_; }

 private:
  bool next(double until, Request& out);
  void pump(EventLoop& loop, double until);

  WorkloadSpec spec_;
  std::mt19937_64 rng_;
  sw::Ipv4 service_ip_;
  std::uint16_t port_;
  std::vector<std::uint32_t> url_sizes_;
  std::size_t step_ = 0;
  std::uint64_t index_ = 0;  // within the current step
  std::uint64_t seq_ = 0;
  std::function<void(const Request&)> sink_;
};

}  // namespace fractal::sim
