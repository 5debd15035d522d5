#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace fractal::orch {

using HostId = std::uint32_t;

struct HostLoad {
  HostId host = 0;
  std::size_t vms = 0;    // booted or booting on the host
  std::size_t slots = 0;  // replica capacity
  bool alive = true;

  bool admits() const { return alive && vms < slots; }
};

struct PlacementView {
  HostId local = 0;
  std::vector<HostLoad> hosts;
};

// Returns nullopt when no host admits another VM.
using PlacementPolicy = std::function<std::optional<HostId>(const PlacementView&)>;

// Local host while it has room, else the least-loaded remote, ties to the
// lowest host id.
std::optional<HostId> local_first_placement(const PlacementView& view);

}  // namespace fractal::orch
