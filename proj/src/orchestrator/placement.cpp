#include "fractal/orchestrator/placement.hpp"

namespace fractal::orch {

std::optional<HostId> local_first_placement(const PlacementView& view) {
  const HostLoad* best = nullptr;
  for (const auto& h : view.hosts) {
    if (!h.admits()) continue;
    if (h.host == view.local) return h.host;
    if (!best || h.vms < best->vms || (h.vms == best->vms && h.host < best->host)) best = &h;
  }
  if (!best) return std::nullopt;
  return best->host;
}

}  // namespace fractal::orch
