#include "fractal/switchfab/switch.hpp"

#include <algorithm>

#include "fractal/common/error.hpp"

namespace fractal::sw {

namespace {

// Maps a 64-bit hash onto [0, n) by multiply-shift.
std::uint64_t reduce(std::uint64_t hash, std::uint64_t n) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(hash) * n) >> 64);
}

std::string gid_str(GroupId gid) { return Ipv4{gid}.hex(); }

}  // namespace

std::string_view mode_name(SteeringMode mode) {
  return mode == SteeringMode::GroupTable ? "group" : "learn";
}

SteeringMode parse_mode(std::string_view name) {
  if (name == "group") return SteeringMode::GroupTable;
  if (name == "learn") return SteeringMode::TwoTableLearn;
  raise(Errc::InvalidArgument, "unknown steering backend: " + std::string(name));
}

Switch::Switch(HostId host, std::uint64_t hash_seed) : host_(host), seed_(hash_seed) {}

void Switch::add_port(PortId port) { ports_.insert(port); }

void Switch::remove_port(PortId port) {
  if (port == kUplinkPort) raise(Errc::InvalidArgument, "cannot remove the uplink port");
  ports_.erase(port);
}

void Switch::validate_actions(const std::vector<Action>& actions, bool allow_group) const {
  int outputs = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto& a = actions[i];
    if (a.kind == Action::Kind::Output) {
      ++outputs;
      if (!has_port(a.id))
        raise(Errc::NoSuchPort, "output port " + std::to_string(a.id) + " does not exist");
    }
    if (a.kind == Action::Kind::Group) {
      if (!allow_group || i + 1 != actions.size())
        raise(Errc::InvalidArgument, "group reference must be the last action of a rule");
      if (!groups_.count(a.id)) raise(Errc::NoSuchGroup, "no group " + gid_str(a.id));
    }
  }
  if (outputs > 1) raise(Errc::InvalidArgument, "more than one output action");
}

RuleId Switch::insert_rule(FlowRule rule, std::optional<FlowKey> learned_for) {
  const RuleId id = next_rule_++;
  // Stable: equal priorities keep install order.
  auto pos = std::find_if(rules_.begin(), rules_.end(), [&](const InstalledRule& r) {
    return r.rule.priority < rule.priority;
  });
  rules_.insert(pos, InstalledRule{id, std::move(rule), std::move(learned_for)});
  return id;
}

RuleId Switch::install_flow(FlowRule rule) {
  for (const auto& r : rules_) {
    if (!r.learned_for && r.rule.priority == rule.priority && r.rule.match == rule.match)
      raise(Errc::DuplicateExactRule, "rule with identical match and priority " +
                                          std::to_string(rule.priority) + " exists");
  }
  validate_actions(rule.actions, true);
  return insert_rule(std::move(rule), std::nullopt);
}

bool Switch::remove_flow(RuleId id) {
  auto it = std::find_if(rules_.begin(), rules_.end(),
                         [&](const InstalledRule& r) { return r.id == id; });
  if (it == rules_.end()) return false;
  rules_.erase(it);
  return true;
}

const GroupEntry& Switch::create_group(GroupId gid, std::vector<Bucket> buckets) {
  if (groups_.count(gid)) raise(Errc::DuplicateGroup, "group " + gid_str(gid) + " exists");
  groups_[gid] = GroupEntry{gid, {}};
  next_bucket_[gid] = 1;
  try {
    for (auto& b : buckets) add_bucket(gid, std::move(b));
  } catch (...) {
    groups_.erase(gid);
    next_bucket_.erase(gid);
    throw;
  }
  return groups_.at(gid);
}

void Switch::remove_group(GroupId gid) {
  group_mut(gid);
  for (auto it = pins_.begin(); it != pins_.end();) {
    auto next = std::next(it);
    if (it->second.flow.group == gid) drop_pin(it);
    it = next;
  }
  groups_.erase(gid);
  next_bucket_.erase(gid);
}

const GroupEntry* Switch::group(GroupId gid) const {
  auto it = groups_.find(gid);
  return it == groups_.end() ? nullptr : &it->second;
}

GroupEntry& Switch::group_mut(GroupId gid) {
  auto it = groups_.find(gid);
  if (it == groups_.end()) raise(Errc::NoSuchGroup, "no group " + gid_str(gid));
  return it->second;
}

Bucket& Switch::bucket_mut(GroupId gid, BucketId bid) {
  auto& g = group_mut(gid);
  for (auto& b : g.buckets)
    if (b.id == bid) return b;
  raise(Errc::NoSuchBucket, "no bucket " + std::to_string(bid) + " in group " + gid_str(gid));
}

BucketId Switch::add_bucket(GroupId gid, Bucket bucket) {
  auto& g = group_mut(gid);
  bucket.output_port();
  validate_actions(bucket.actions, false);
  auto& next = next_bucket_[gid];
  if (bucket.id == 0) bucket.id = next;
  if (g.find(bucket.id))
    raise(Errc::InvalidArgument, "bucket id " + std::to_string(bucket.id) + " already in group");
  next = std::max(next, bucket.id + 1);
  g.buckets.push_back(std::move(bucket));
  return g.buckets.back().id;
}

void Switch::set_bucket_weight(GroupId gid, BucketId bid, std::uint32_t weight) {
  bucket_mut(gid, bid).weight = weight;
}

void Switch::set_bucket_actions(GroupId gid, BucketId bid, std::vector<Action> actions) {
  auto& b = bucket_mut(gid, bid);
  Bucket probe{bid, b.weight, actions};
  probe.output_port();
  validate_actions(actions, false);
  b.actions = std::move(actions);
}

void Switch::remove_bucket(GroupId gid, BucketId bid) {
  const auto& b = bucket_mut(gid, bid);
  if (b.weight != 0)
    raise(Errc::BucketStillDraining, "bucket " + std::to_string(bid) + " still has weight " +
                                         std::to_string(b.weight));
  if (auto n = pinned_count(gid, bid); n > 0)
    raise(Errc::BucketStillDraining,
          "bucket " + std::to_string(bid) + " has " + std::to_string(n) + " pinned flows");
  force_remove_bucket(gid, bid);
}

std::vector<FlowKey> Switch::force_remove_bucket(GroupId gid, BucketId bid) {
  auto& g = group_mut(gid);
  bucket_mut(gid, bid);
  std::vector<FlowKey> expired;
  for (auto it = pins_.begin(); it != pins_.end();) {
    auto next = std::next(it);
    if (it->second.flow.group == gid && it->second.flow.bucket == bid) {
      expired.push_back(it->first);
      drop_pin(it);
    }
    it = next;
  }
  std::sort(expired.begin(), expired.end());
  std::erase_if(g.buckets, [&](const Bucket& b) { return b.id == bid; });
  return expired;
}

const Bucket* Switch::select_bucket(const GroupEntry& group, const FlowKey& key) const {
  std::vector<const Bucket*> live;
  for (const auto& b : group.buckets)
    if (b.weight > 0) live.push_back(&b);
  if (live.empty()) return nullptr;
  const auto h = flow_hash(key, seed_);
  if (mode_ == SteeringMode::TwoTableLearn) {
    // Bundle member list: each live bucket repeated `weight` times, indexed
    // by the hash register.
    std::vector<const Bucket*> members;
    for (const auto* b : live) members.insert(members.end(), b->weight, b);
    return members[reduce(h, members.size())];
  }

  std::uint64_t total = 0;
  for (const auto* b : live) total += b->weight;
  auto pos = reduce(h, total);
  for (const auto* b : live) {
    if (pos < b->weight) return b;
    pos -= b->weight;
  }
  return live.back();
}

Decision Switch::apply(const FlowKey& key, const std::vector<Action>& actions) const {
  Decision d;
  d.key = key;
  d.actions = actions;
  for (const auto& a : actions) {
    switch (a.kind) {
      case Action::Kind::SetDstIp: d.key.dst_ip = a.ip; break;
      case Action::Kind::SetSrcIp: d.key.src_ip = a.ip; break;
      case Action::Kind::SetDstMac: break;
      case Action::Kind::Output:
        d.egress = a.id;
        d.verdict = Decision::Verdict::Forward;
        break;
      case Action::Kind::Group: break;
    }
  }
  return d;
}

Decision Switch::classify(const FlowKey& key, PortId ingress, double now) {
  traffic_seen_ = true;

  if (mode_ == SteeringMode::GroupTable) {
    if (auto it = pins_.find(key); it != pins_.end()) {
      auto d = apply(key, it->second.flow.actions);
      d.group = it->second.flow.group;
      d.bucket = it->second.flow.bucket;
      d.pinned_hit = true;
      return d;
    }
  }

  for (const auto& r : rules_) {
    if (!r.rule.match.matches(key, ingress)) continue;
    if (r.learned_for) {
      const auto& pin = pins_.at(*r.learned_for).flow;
      auto d = apply(key, r.rule.actions);
      d.group = pin.group;
      d.bucket = pin.bucket;
      d.pinned_hit = true;
      return d;
    }
    const auto& actions = r.rule.actions;
    if (actions.empty() || actions.back().kind != Action::Kind::Group) return apply(key, actions);

    const GroupId gid = actions.back().id;
    const auto& g = groups_.at(gid);
    const Bucket* b = select_bucket(g, key);
    if (b == nullptr) {
      Decision d;
      d.verdict = Decision::Verdict::NoLiveBucket;
      d.key = key;
      d.group = gid;
      return d;
    }
    std::vector<Action> resolved(actions.begin(), actions.end() - 1);
    resolved.insert(resolved.end(), b->actions.begin(), b->actions.end());

    Pin pin{CachedFlow{key, resolved, gid, b->id, now}, std::nullopt};
    if (mode_ == SteeringMode::TwoTableLearn) {
      FlowRule learned{r.rule.priority + 1, Match::exact(key), resolved};
      pin.learned_rule = insert_rule(std::move(learned), key);
    }
    pins_.emplace(key, std::move(pin));
    ++pin_counts_[{gid, b->id}];

    auto d = apply(key, resolved);
    d.group = gid;
    d.bucket = b->id;
    return d;
  }

  Decision miss;
  miss.key = key;
  return miss;
}

void Switch::drop_pin(std::unordered_map<FlowKey, Pin, FlowKeyHash>::iterator it) {
  const auto& flow = it->second.flow;
  auto count = pin_counts_.find({flow.group, flow.bucket});
  if (count != pin_counts_.end() && --count->second == 0) pin_counts_.erase(count);
  if (it->second.learned_rule) remove_flow(*it->second.learned_rule);
  pins_.erase(it);
}

bool Switch::expire_flow(const FlowKey& key) {
  auto it = pins_.find(key);
  if (it == pins_.end()) return false;
  drop_pin(it);
  return true;
}

const CachedFlow* Switch::pinned(const FlowKey& key) const {
  auto it = pins_.find(key);
  return it == pins_.end() ? nullptr : &it->second.flow;
}

std::size_t Switch::pinned_count(GroupId gid, BucketId bid) const {
  auto it = pin_counts_.find({gid, bid});
  return it == pin_counts_.end() ? 0 : it->second;
}

RuleId Switch::install_snat(std::uint16_t service_port, Ipv4 replica_ip, Ipv4 service_ip) {
  Match m;
  m.src_ip = replica_ip;
  m.proto = kProtoTcp;
  m.src_port = service_port;
  return install_flow(
      FlowRule{kSnatPriority, m, {Action::set_src_ip(service_ip), Action::output(kUplinkPort)}});
}

void Switch::add_tunnel(const TunnelPort& tunnel) {
  for (const auto& [_, t] : tunnels_) {
    if (t.remote == tunnel.remote && t.gre_key == tunnel.gre_key)
      raise(Errc::DuplicateKey, "gre key " + std::to_string(tunnel.gre_key) +
                                    " already used towards host " + std::to_string(t.remote));
  }
  if (tunnels_.count(tunnel.port) || has_port(tunnel.port))
    raise(Errc::InvalidArgument, "port " + std::to_string(tunnel.port) + " already exists");
  tunnels_[tunnel.port] = tunnel;
  ports_.insert(tunnel.port);
}

void Switch::remove_tunnel(PortId port) {
  if (!tunnels_.erase(port)) raise(Errc::NoSuchPort, "no tunnel port " + std::to_string(port));
  ports_.erase(port);
}

const TunnelPort* Switch::tunnel(PortId port) const {
  auto it = tunnels_.find(port);
  return it == tunnels_.end() ? nullptr : &it->second;
}

void Switch::select_backend_mode(SteeringMode mode) {
  if (traffic_seen_ && mode != mode_)
    raise(Errc::ModeChangeAfterTraffic, "steering backend must be chosen before traffic");
  mode_ = mode;
}

void Switch::reset() {
  rules_.clear();
  groups_.clear();
  next_bucket_.clear();
  pins_.clear();
  pin_counts_.clear();
  for (const auto& [port, _] : tunnels_) ports_.erase(port);
  tunnels_.clear();
}

std::string Switch::dump_flows() const {
  std::string out;
  for (const auto& r : rules_) {
    out += "priority=" + std::to_string(r.rule.priority) + " match=" + r.rule.match.str() +
           " actions=" + actions_str(r.rule.actions) + "\n";
  }
  return out;
}

std::string Switch::dump_groups() const {
  std::string out;
  for (const auto& [gid, g] : groups_) {
    out += "group=" + gid_str(gid) + " type=select";
    for (const auto& b : g.buckets) {
      out += " bucket=" + std::to_string(b.id) + ":w=" + std::to_string(b.weight) + ":" +
             actions_str(b.actions);
    }
    out += "\n";
  }
  return out;
}

}  // namespace fractal::sw
