#include "fractal/switchfab/fabric.hpp"

#include "fractal/common/error.hpp"

namespace fractal::sw {

Switch& Fabric::add_switch(HostId host) {
  if (has(host)) raise(Errc::InvalidArgument, "switch for host " + std::to_string(host) + " exists");
  // Every switch hashes with the same seed so decisions do not depend on
  // which host the group lives on.
  auto& sw = switches_[host] = std::make_unique<Switch>(host, seed_);
  next_port_[host] = kFirstTunnelPort;
  return *sw;
}

Switch& Fabric::at(HostId host) {
  auto it = switches_.find(host);
  if (it == switches_.end()) raise(Errc::NotFound, "no switch for host " + std::to_string(host));
  return *it->second;
}

const Switch& Fabric::at(HostId host) const {
  auto it = switches_.find(host);
  if (it == switches_.end()) raise(Errc::NotFound, "no switch for host " + std::to_string(host));
  return *it->second;
}

std::vector<HostId> Fabric::hosts() const {
  std::vector<HostId> out;
  for (const auto& [h, _] : switches_) out.push_back(h);
  return out;
}

void Fabric::set_mode(SteeringMode mode) {
  for (auto& [_, sw] : switches_) sw->select_backend_mode(mode);
}

TunnelPort Fabric::create_tunnel(HostId local, HostId remote, std::uint32_t gre_key) {
  if (local == remote) raise(Errc::InvalidArgument, "tunnel endpoints must differ");
  auto& a = at(local);
  auto& b = at(remote);
  TunnelPort near{next_port_[local], remote, gre_key};
  TunnelPort far{next_port_[remote], local, gre_key};
  a.add_tunnel(near);
  try {
    b.add_tunnel(far);
  } catch (...) {
    a.remove_tunnel(near.port);
    throw;
  }
  ++next_port_[local];
  ++next_port_[remote];
  peers_[{local, near.port}] = {remote, far.port};
  peers_[{remote, far.port}] = {local, near.port};
  return near;
}

void Fabric::remove_tunnel(HostId local, PortId port) {
  auto it = peers_.find({local, port});
  if (it == peers_.end()) raise(Errc::NoSuchPort, "no tunnel port " + std::to_string(port));
  const PortRef far = it->second;
  at(local).remove_tunnel(port);
  if (has(far.host) && at(far.host).tunnel(far.port)) at(far.host).remove_tunnel(far.port);
  peers_.erase(it);
  peers_.erase(far);
}

std::optional<PortRef> Fabric::peer(HostId host, PortId port) const {
  auto it = peers_.find({host, port});
  if (it == peers_.end()) return std::nullopt;
  return it->second;
}

void Fabric::reset_host(HostId host) {
  for (auto it = peers_.begin(); it != peers_.end();) {
    if (it->first.host == host) {
      const PortRef far = it->second;
      if (has(far.host) && at(far.host).tunnel(far.port)) at(far.host).remove_tunnel(far.port);
      peers_.erase(far);
      it = peers_.erase(it);
    } else {
      ++it;
    }
  }
  at(host).reset();
}

}  // namespace fractal::sw
