#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace fractal::orch {

using DomId = std::uint32_t;

// Per-host stand-in for the hypervisor's live domain table. Domain ids are
// handed out from a counter and never reused.
class HypervisorRegistry {
 public:
  struct Domain {
    std::string name;
    bool running = true;
  };

  explicit HypervisorRegistry(DomId first_dom_id = 1) : next_(first_dom_id) {}

  DomId create(const std::string& name);
  bool destroy(DomId dom);
  bool destroy_by_name(const std::string& name);
  // Same VM, fresh domain. Throws NotFound if `name` has no domain.
  DomId reboot(const std::string& name);
  void clear() { domains_.clear(); }

  std::optional<DomId> dom_of(const std::string& name) const;
  const Domain* find(DomId dom) const;
  std::size_t size() const { return domains_.size(); }
  const std::map<DomId, Domain>& domains() const { return domains_; }
  DomId next_dom_id() const { return next_; }
  // Only moves forward.
  void skip_to(DomId next);

 private:
  std::map<DomId, Domain> domains_;
  DomId next_;
};

}  // namespace fractal::orch
