#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fractal/switchfab/flow.hpp"

namespace fractal::sw {

enum class SteeringMode {
  // Select group with weighted buckets; first classification of a flow is
  // pinned in an exact-match cache consulted before the flow table.
  GroupTable,
  // Hash-to-register default rule plus a learn step that installs an
  // exact-match rule back into table 0. A weight w is a bucket listed w times
  // in the bundle, so selection matches group mode flow by flow.
  TwoTableLearn,
};

std::string_view mode_name(SteeringMode mode);
SteeringMode parse_mode(std::string_view name);  // "group" | "learn"

// Software switch for one host: prioritized flow table, select groups, the
// pinned-flow cache, tunnel ports and SNAT rules.
class Switch {
 public:
  static constexpr int kSnatPriority = 20;

  Switch(HostId host, std::uint64_t hash_seed);

  HostId host() const { return host_; }
  std::uint64_t hash_seed() const { return seed_; }

  void add_port(PortId port);
  void remove_port(PortId port);
  bool has_port(PortId port) const { return ports_.count(port) > 0; }

  RuleId install_flow(FlowRule rule);
  bool remove_flow(RuleId id);
  std::size_t rule_count() const { return rules_.size(); }

  const GroupEntry& create_group(GroupId gid, std::vector<Bucket> buckets);
  void remove_group(GroupId gid);
  const GroupEntry* group(GroupId gid) const;
  BucketId add_bucket(GroupId gid, Bucket bucket);
  void set_bucket_weight(GroupId gid, BucketId bid, std::uint32_t weight);
  // Re-points a bucket (e.g. after the replica got a new domain). Pinned
  // flows keep the actions they were created with.
  void set_bucket_actions(GroupId gid, BucketId bid, std::vector<Action> actions);
  // Requires weight 0 and no pinned flows.
  void remove_bucket(GroupId gid, BucketId bid);
  // Removes regardless of drain state; returns the pinned flows it expired.
  std::vector<FlowKey> force_remove_bucket(GroupId gid, BucketId bid);

  Decision classify(const FlowKey& key, PortId ingress, double now = 0.0);
  // Flow closed: drop its pin (cache entry or learned rule).
  bool expire_flow(const FlowKey& key);
  const CachedFlow* pinned(const FlowKey& key) const;
  std::size_t pinned_count(GroupId gid, BucketId bid) const;
  std::size_t pinned_total() const { return pins_.size(); }

  // Rewrites the source of replica responses leaving on the service port.
  RuleId install_snat(std::uint16_t service_port, Ipv4 replica_ip, Ipv4 service_ip);

  void add_tunnel(const TunnelPort& tunnel);
  void remove_tunnel(PortId port);
  const TunnelPort* tunnel(PortId port) const;
  const std::map<PortId, TunnelPort>& tunnels() const { return tunnels_; }

  void select_backend_mode(SteeringMode mode);
  SteeringMode mode() const { return mode_; }

  // Drops every rule, group, pin and tunnel; keeps VM ports and the mode.
  void reset();

  std::string dump_flows() const;
  std::string dump_groups() const;

 private:
  struct InstalledRule {
    RuleId id;
    FlowRule rule;
    std::optional<FlowKey> learned_for;
  };
  struct Pin {
    CachedFlow flow;
    std::optional<RuleId> learned_rule;
  };

  GroupEntry& group_mut(GroupId gid);
  Bucket& bucket_mut(GroupId gid, BucketId bid);
  void validate_actions(const std::vector<Action>& actions, bool allow_group) const;
  const Bucket* select_bucket(const GroupEntry& group, const FlowKey& key) const;
  Decision apply(const FlowKey& key, const std::vector<Action>& actions) const;
  RuleId insert_rule(FlowRule rule, std::optional<FlowKey> learned_for);
  void drop_pin(std::unordered_map<FlowKey, Pin, FlowKeyHash>::iterator it);

  HostId host_;
  std::uint64_t seed_;
  SteeringMode mode_ = SteeringMode::GroupTable;
  bool traffic_seen_ = false;
  std::set<PortId> ports_{kUplinkPort};
  std::vector<InstalledRule> rules_;  // classification order
  RuleId next_rule_ = 1;
  std::map<GroupId, GroupEntry> groups_;
  std::map<GroupId, BucketId> next_bucket_;
  std::unordered_map<FlowKey, Pin, FlowKeyHash> pins_;
  std::map<std::pair<GroupId, BucketId>, std::size_t> pin_counts_;
  std::map<PortId, TunnelPort> tunnels_;
};

}  // namespace fractal::sw
