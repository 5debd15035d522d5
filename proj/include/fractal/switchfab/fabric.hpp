#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "fractal/switchfab/switch.hpp"

namespace fractal::sw {

struct PortRef {
  HostId host = 0;
  PortId port = 0;
  friend auto operator<=>(const PortRef&, const PortRef&) = default;
};

// All host switches plus the GRE tunnels between them. A packet leaving a
// tunnel port arrives, with its flow key unchanged, on the paired port of
// the remote switch.
class Fabric {
 public:
  static constexpr PortId kFirstTunnelPort = 5000;

  explicit Fabric(std::uint64_t hash_seed) : seed_(hash_seed) {}

  Switch& add_switch(HostId host);
  Switch& at(HostId host);
  const Switch& at(HostId host) const;
  bool has(HostId host) const { return switches_.count(host) > 0; }
  std::vector<HostId> hosts() const;

  void set_mode(SteeringMode mode);

  // Returns the local end. Throws DuplicateKey if `gre_key` already joins
  // these two hosts.
  TunnelPort create_tunnel(HostId local, HostId remote, std::uint32_t gre_key);
  std::uint32_t allocate_gre_key() { return next_key_++; }
  // Removes both ends.
  void remove_tunnel(HostId local, PortId port);
  std::optional<PortRef> peer(HostId host, PortId port) const;

  // Clears the host's switch and forgets its tunnels at both ends.
  void reset_host(HostId host);

 private:
  std::uint64_t seed_;
  std::map<HostId, std::unique_ptr<Switch>> switches_;
  std::map<HostId, PortId> next_port_;
  std::map<PortRef, PortRef> peers_;
  std::uint32_t next_key_ = 1;
};

}  // namespace fractal::sw
