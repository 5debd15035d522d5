#include "fractal/switchfab/flow.hpp"

#include <cstdio>

#include "fractal/common/error.hpp"

namespace fractal::sw {

namespace {

// Finalizer from MurmurHash3.
std::uint64_t fmix64(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

}  // namespace

std::uint64_t flow_hash(const FlowKey& key, std::uint64_t seed) {
  const std::uint64_t w0 = (std::uint64_t{key.src_ip.value} << 32) | key.dst_ip.value;
  const std::uint64_t w1 = (std::uint64_t{key.proto} << 32) |
                           (std::uint64_t{key.src_port} << 16) | key.dst_port;
  std::uint64_t h = fmix64(seed ^ 0x9e3779b97f4a7c15ULL);
  h = fmix64(h ^ w0);
  h = fmix64(h ^ (w1 + 0x632be59bd9b4e019ULL));
  return h;
}

std::string FlowKey::str() const {
  char buf[80];
  std::snprintf(buf, sizeof buf, "%s:%u>%s:%u/%u", src_ip.str().c_str(), src_port,
                dst_ip.str().c_str(), dst_port, proto);
  return buf;
}

std::string Action::str() const {
  switch (kind) {
    case Kind::SetDstIp: return "mod_dst_ip:" + ip.str();
    case Kind::SetDstMac: return "mod_dst_mac:" + mac.str();
    case Kind::SetSrcIp: return "mod_src_ip:" + ip.str();
    case Kind::Output: return "output:" + std::to_string(id);
    case Kind::Group: return "group:" + Ipv4{id}.hex();
  }
  return "?";
}

std::string actions_str(const std::vector<Action>& actions) {
  if (actions.empty()) return "drop";
  std::string out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) out += ';';
    out += actions[i].str();
  }
  return out;
}

PortId Bucket::output_port() const {
  if (actions.empty() || actions.back().kind != Action::Kind::Output)
    raise(Errc::InvalidArgument, "bucket " + std::to_string(id) + " does not end with output");
  return actions.back().id;
}

const Bucket* GroupEntry::find(BucketId bid) const {
  for (const auto& b : buckets)
    if (b.id == bid) return &b;
  return nullptr;
}

std::uint64_t GroupEntry::total_weight() const {
  std::uint64_t sum = 0;
  for (const auto& b : buckets) sum += b.weight;
  return sum;
}

bool Match::matches(const FlowKey& key, PortId ingress) const {
  return (!in_port || *in_port == ingress) && (!src_ip || *src_ip == key.src_ip) &&
         (!dst_ip || *dst_ip == key.dst_ip) && (!proto || *proto == key.proto) &&
         (!src_port || *src_port == key.src_port) && (!dst_port || *dst_port == key.dst_port);
}

Match Match::exact(const FlowKey& key) {
  return Match{std::nullopt, key.src_ip, key.dst_ip, key.proto, key.src_port, key.dst_port};
}

std::string Match::str() const {
  std::vector<std::string> parts;
  if (in_port) parts.push_back("in_port=" + std::to_string(*in_port));
  if (src_ip) parts.push_back("src_ip=" + src_ip->str());
  if (dst_ip) parts.push_back("dst_ip=" + dst_ip->str());
  if (proto) parts.push_back("proto=" + std::to_string(*proto));
  if (src_port) parts.push_back("src_port=" + std::to_string(*src_port));
  if (dst_port) parts.push_back("dst_port=" + std::to_string(*dst_port));
  if (parts.empty()) return "any";
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  return out;
}

}  // namespace fractal::sw
