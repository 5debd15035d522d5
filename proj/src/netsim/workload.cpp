#include "fractal/netsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fractal/common/error.hpp"

namespace fractal::sim {

std::vector<SizeBucket> default_page_sizes() {
  return {{1024, 0.14},   {2048, 0.12},   {4096, 0.14},   {8192, 0.14},   {16384, 0.13},
          {32768, 0.12},  {65536, 0.09},  {131072, 0.06}, {262144, 0.04}, {524288, 0.02}};
}

void WorkloadSpec::validate() const {
  if (sizes.empty()) raise(Errc::InvalidArgument, "page-size distribution is empty");
  double sum = 0.0;
  for (const auto& b : sizes) {
    if (b.bytes == 0 || b.freq < 0.0) raise(Errc::InvalidArgument, "bad page-size bucket");
    sum += b.freq;
  }
  if (std::abs(sum - 1.0) > 1e-6) raise(Errc::InvalidArgument, "page-size frequencies must sum to 1");
  if (urls == 0) raise(Errc::InvalidArgument, "need at least one url");
  if (jitter < 0.0 || jitter >= 0.5) raise(Errc::InvalidArgument, "jitter must be in [0, 0.5)");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i].rps < 0.0) raise(Errc::InvalidArgument, "negative rate");
    if (i > 0 && !(schedule[i].start > schedule[i - 1].start))
      raise(Errc::InvalidArgument, "schedule times must strictly increase");
  }
}

double WorkloadSpec::mean_size() const {
  double m = 0.0;
  for (const auto& b : sizes) m += b.bytes * b.freq;
  return m;
}

std::vector<RateStep> WorkloadSpec::ramp(double start, double first_rps, double step_rps, double period,
                                         std::size_t steps) {
  std::vector<RateStep> out;
  for (std::size_t i = 0; i < steps; ++i) out.push_back({start + i * period, first_rps + i * step_rps});
  return out;
}

WorkloadGenerator::WorkloadGenerator(WorkloadSpec spec, std::uint64_t seed, sw::Ipv4 service_ip,
                                     std::uint16_t port)
    : spec_(std::move(spec)), rng_(seed), service_ip_(service_ip), port_(port) {
  spec_.validate();
  // Largest-remainder apportionment of the seed URLs to buckets.
  const auto n = spec_.urls;
  std::vector<std::size_t> counts(spec_.sizes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double exact = spec_.sizes[i].freq * n;
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    given += counts[i];
    rem.push_back({exact - counts[i], i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < n; ++k, ++given) counts[rem[k % rem.size()].second]++;
  for (std::size_t i = 0; i < counts.size(); ++i)
    url_sizes_.insert(url_sizes_.end(), counts[i], spec_.sizes[i].bytes);
}

bool WorkloadGenerator::next(double until, Request& out) {
  const auto& sched = spec_.schedule;
  while (step_ < sched.size()) {
    const auto& s = sched[step_];
    const double end = std::min(until, step_ + 1 < sched.size() ? sched[step_ + 1].start : until);
    const double span = std::max(0.0, end - s.start);
    const auto count = static_cast<std::uint64_t>(std::floor(span * s.rps + 1e-9));
    if (s.rps > 0.0 && index_ < count) {
      std::uniform_real_distribution<double> jit(-spec_.jitter, spec_.jitter);
      std::uniform_int_distribution<std::size_t> pick(0, url_sizes_.size() - 1);
      const double t = s.start + (index_ + 0.5 + jit(rng_)) / s.rps;
      ++index_;
      out.seq = seq_++;
      out.time = t;
      out.url = static_cast<std::uint32_t>(pick(rng_));
      out.bytes = url_sizes_[out.url];
      // 50000 source ports per client address.
      out.key.src_ip = sw::Ipv4{(172u << 24 | 16u << 16) + static_cast<std::uint32_t>(out.seq / 50000)};
      out.key.src_port = static_cast<std::uint16_t>(10000 + out.seq % 50000);
      out.key.dst_ip = service_ip_;
      out.key.dst_port = port_;
      out.key.proto = sw::kProtoTcp;
      return true;
    }
    if (end >= until) return false;
    ++step_;
    index_ = 0;
  }
  return false;
}

void WorkloadGenerator::pump(EventLoop& loop, double until) {
  Request r;
  if (!next(until, r)) return;
  loop.schedule(std::max(r.time, loop.now()), [this, &loop, until, r] {
    sink_(r);
    pump(loop, until);
  });
}

void WorkloadGenerator::start(EventLoop& loop, double until, std::function<void(const Request&)> sink) {
  sink_ = std::move(sink);
  pump(loop, until);
}

std::vector<Request> WorkloadGenerator::generate(double until) {
  std::vector<Request> out;
  Request r;
  while (next(until, r)) out.push_back(r);
  return out;
}

}  // namespace fractal::sim
