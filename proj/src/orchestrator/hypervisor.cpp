#include "fractal/orchestrator/hypervisor.hpp"

#include <algorithm>

#include "fractal/common/error.hpp"

namespace fractal::orch {

DomId HypervisorRegistry::create(const std::string& name) {
  const DomId dom = next_++;
  domains_[dom] = Domain{name, true};
  return dom;
}

bool HypervisorRegistry::destroy(DomId dom) { return domains_.erase(dom) > 0; }

bool HypervisorRegistry::destroy_by_name(const std::string& name) {
  auto dom = dom_of(name);
  return dom && destroy(*dom);
}

DomId HypervisorRegistry::reboot(const std::string& name) {
  auto dom = dom_of(name);
  if (!dom) raise(Errc::NotFound, "no domain named " + name);
  domains_.erase(*dom);
  return create(name);
}

std::optional<DomId> HypervisorRegistry::dom_of(const std::string& name) const {
  for (const auto& [dom, d] : domains_)
    if (d.name == name) return dom;
  return std::nullopt;
}

const HypervisorRegistry::Domain* HypervisorRegistry::find(DomId dom) const {
  auto it = domains_.find(dom);
  return it == domains_.end() ? nullptr : &it->second;
}

void HypervisorRegistry::skip_to(DomId next) { next_ = std::max(next_, next); }

}  // namespace fractal::orch
