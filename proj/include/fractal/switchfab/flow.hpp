#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fractal/switchfab/addr.hpp"

namespace fractal::sw {

using HostId = std::uint32_t;
using PortId = std::uint32_t;
using GroupId = std::uint32_t;
using BucketId = std::uint32_t;
using RuleId = std::uint64_t;

// Port facing the physical network on every switch.
inline constexpr PortId kUplinkPort = 1;
inline constexpr std::uint8_t kProtoTcp = 6;

struct FlowKey {
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint8_t proto = kProtoTcp;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;

  std::string str() const;
  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

// Seeded 64-bit mixing hash over the 13-byte big-endian 5-tuple.
std::uint64_t flow_hash(const FlowKey& key, std::uint64_t seed);

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept { return flow_hash(k, 0); }
};

struct Action {
  enum class Kind { SetDstIp, SetDstMac, SetSrcIp, Output, Group };

  Kind kind;
  Ipv4 ip;
  MacAddr mac;
  std::uint32_t id = 0;  // port for Output, group for Group

  static Action set_dst_ip(Ipv4 ip) { return {Kind::SetDstIp, ip, {}, 0}; }
  static Action set_dst_mac(MacAddr mac) { return {Kind::SetDstMac, {}, mac, 0}; }
  static Action set_src_ip(Ipv4 ip) { return {Kind::SetSrcIp, ip, {}, 0}; }
  static Action output(PortId port) { return {Kind::Output, {}, {}, port}; }
  static Action group(GroupId gid) { return {Kind::Group, {}, {}, gid}; }

  std::string str() const;
  friend bool operator==(const Action&, const Action&) = default;
};

std::string actions_str(const std::vector<Action>& actions);

struct Bucket {
  BucketId id = 0;  // 0 asks add_bucket to assign one
  std::uint32_t weight = 1;
  std::vector<Action> actions;

  // The port named by the trailing output action.
  PortId output_port() const;
};

struct GroupEntry {
  GroupId id = 0;
  std::vector<Bucket> buckets;

  const Bucket* find(BucketId bid) const;
  std::uint64_t total_weight() const;
};

// Partial predicate; unset fields match anything.
struct Match {
  std::optional<PortId> in_port;
  std::optional<Ipv4> src_ip;
  std::optional<Ipv4> dst_ip;
  std::optional<std::uint8_t> proto;
  std::optional<std::uint16_t> src_port;
  std::optional<std::uint16_t> dst_port;

  bool matches(const FlowKey& key, PortId ingress) const;
  static Match exact(const FlowKey& key);
  std::string str() const;
  friend bool operator==(const Match&, const Match&) = default;
};

struct FlowRule {
  int priority = 0;
  Match match;
  // A trailing Group action hands the packet to that select group.
  std::vector<Action> actions;
};

struct CachedFlow {
  FlowKey key;
  std::vector<Action> actions;
  GroupId group = 0;
  BucketId bucket = 0;
  double created_at = 0.0;
};

struct TunnelPort {
  PortId port = 0;
  HostId remote = 0;
  std::uint32_t gre_key = 0;
};

struct Decision {
  enum class Verdict { Forward, Drop, NoLiveBucket };

  Verdict verdict = Verdict::Drop;
  FlowKey key;  // after header rewrites
  std::vector<Action> actions;
  PortId egress = 0;
  std::optional<GroupId> group;
  std::optional<BucketId> bucket;
  bool pinned_hit = false;

  bool forwarded() const { return verdict == Verdict::Forward; }
};

}  // namespace fractal::sw
