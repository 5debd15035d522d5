#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fractal/guest/web_service.hpp"
#include "fractal/netsim/traffic.hpp"
#include "fractal/netsim/workload.hpp"
#include "fractal/orchestrator/cluster.hpp"

namespace fractal::scn {

struct Fault {
  enum class Kind { CrashReplica, RebootReplica, FailHost };
  double time = 0.0;
  Kind kind = Kind::CrashReplica;
  std::size_t index = 0;    // k-th replica in name order at fault time
  std::uint32_t host = 0;   // FailHost
};

std::string_view fault_name(Fault::Kind k);

struct Scenario {
  std::string name = "unnamed";
  double until = 60.0;
  std::uint64_t seed = 1;
  orch::ClusterConfig cluster;
  orch::ServiceSpec service;
  guest::GuestOptions guest;
  sim::NetConfig net;
  sim::WorkloadSpec workload;
  std::vector<Fault> faults;

  Scenario();
};

struct Diagnostic {
  enum class Level { Error, Warning };
  Level level = Level::Error;
  int line = 0;  // 0 when not tied to a line
  std::string key;
  std::string message;

  std::string str() const;
};

struct ParseResult {
  Scenario scenario;
  std::vector<Diagnostic> diagnostics;

  bool ok() const;
  std::size_t errors() const;
  std::size_t warnings() const;
};

// Flat `section.key = value` text; '#' starts a comment. Unknown keys are
// warnings; malformed values and failed range checks are errors.
ParseResult parse_scenario(std::string_view text);
ParseResult load_scenario(const std::string& path);

// Range checks on an assembled scenario, appended to `out`.
void check_ranges(const Scenario& s, std::vector<Diagnostic>& out);

}  // namespace fractal::scn
