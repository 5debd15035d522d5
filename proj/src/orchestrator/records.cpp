#include "fractal/orchestrator/records.hpp"

#include <charconv>

#include "fractal/common/error.hpp"
#include "fractal/kvstore/value_list.hpp"

namespace fractal::orch {

using kv::ListItem;
using kv::Path;

namespace paths {

Path vms() { return Path{"jitsu", "vms"}; }
Path vm(std::string_view name) { return vms() / name; }
Path vm_aux(std::string_view name) { return Path{"jitsu", "vm"} / name; }
Path initial_xs(std::string_view name) { return vm_aux(name) / "initial_xs"; }
Path ttl(std::string_view name) { return vm_aux(name) / "ttl"; }
Path requests() { return Path{"jitsu", "requests"}; }
Path request_root(std::string_view instance) { return requests() / instance; }
Path request(std::string_view instance) { return request_root(instance) / "request"; }
Path response(std::string_view instance) { return request_root(instance) / "response"; }
Path heartbeats() { return Path{"jitsu", "heartbeats"}; }
Path heartbeat(std::string_view host) { return heartbeats() / host; }

}  // namespace paths

namespace {

std::uint32_t parse_u32(std::string_view text, int base, std::string_view what) {
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, base);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    raise(Errc::Malformed, "bad " + std::string(what) + ": " + std::string(text));
  return v;
}

}  // namespace

std::string_view state_name(VmState s) {
  switch (s) {
    case VmState::Provisioning: return "provisioning";
    case VmState::Running: return "running";
    case VmState::Halting: return "halting";
    case VmState::Dead: return "dead";
  }
  return "?";
}

VmState parse_state(std::string_view s) {
  if (s == "provisioning") return VmState::Provisioning;
  if (s == "running") return VmState::Running;
  if (s == "halting") return VmState::Halting;
  if (s == "dead") return VmState::Dead;
  raise(Errc::Malformed, "unknown vm state: " + std::string(s));
}

bool transition_allowed(VmState from, VmState to) {
  switch (from) {
    case VmState::Provisioning: return to == VmState::Running || to == VmState::Dead;
    case VmState::Running: return to == VmState::Halting || to == VmState::Dead;
    case VmState::Halting: return to == VmState::Dead;
    case VmState::Dead: return false;
  }
  return false;
}

void VmRecord::validate() const {
  const bool ok = first_instance
                      ? !mac.empty() && !dns.empty() && ip.empty() && first_instance_host.empty()
                      : mac.empty() && dns.empty() && ips.empty() && !first_instance_host.empty();
  if (!ok)
    raise(Errc::InvalidArgument, "vm record " + name + " mixes first-instance and replica fields");
}

std::vector<kv::Mutation> VmRecord::to_mutations() const {
  validate();
  const auto base = paths::vm(name);
  std::vector<kv::Mutation> m;
  m.push_back({base / "dom-id", std::to_string(dom_id)});
  m.push_back({base / "app-id", app_id});
  m.push_back({base / "state", std::string(state_name(state))});
  m.push_back({base / "stop-mode", stop_mode});
  if (first_instance) {
    for (const auto& [vif, addr] : ips) m.push_back({base / "ips" / vif, addr});
  } else {
    m.push_back({base / "ip", ip});
  }
  m.push_back({base / "first-instance", first_instance ? "true" : "false"});
  if (first_instance) {
    m.push_back({base / "mac", mac});
    for (const auto& [rec, t] : dns) m.push_back({base / "dns" / rec / "ttl", std::to_string(t)});
  } else {
    m.push_back({base / "first-instance-host", first_instance_host});
  }
  return m;
}

std::optional<VmRecord> VmRecord::load(const kv::Store& store, std::string_view name) {
  const auto base = paths::vm(name);
  auto state = store.get(base / "state");
  if (!state) return std::nullopt;
  VmRecord r;
  r.name = std::string(name);
  r.state = parse_state(*state);
  r.dom_id = parse_u32(store.get(base / "dom-id").value_or(""), 10, "dom-id");
  r.app_id = store.get(base / "app-id").value_or("");
  r.stop_mode = store.get(base / "stop-mode").value_or("");
  r.first_instance = store.get(base / "first-instance") == "true";
  for (const auto& vif : store.children(base / "ips"))
    r.ips[vif] = store.get(base / "ips" / vif).value_or("");
  r.mac = store.get(base / "mac").value_or("");
  for (const auto& rec : store.children(base / "dns"))
    r.dns[rec] = parse_u32(store.get(base / "dns" / rec / "ttl").value_or(""), 10, "dns ttl");
  r.ip = store.get(base / "ip").value_or("");
  r.first_instance_host = store.get(base / "first-instance-host").value_or("");
  return r;
}

std::string_view verb_name(Verb v) {
  switch (v) {
    case Verb::Replicate: return "replicate";
    case Verb::Halt: return "halt";
    case Verb::Die: return "die";
  }
  return "?";
}

std::string RequestRecord::encode() const {
  std::vector<ListItem> items{ListItem::str(std::string(verb_name(verb))), ListItem::str(target)};
  if (remote) {
    items.push_back(ListItem::integer(remote->app_id));
    items.push_back(ListItem::integer(std::to_string(remote->ttl)));
    items.push_back(ListItem::str(remote->stop_mode));
    items.push_back(ListItem::str(remote->image));
  }
  return kv::encode_list(items);
}

RequestRecord RequestRecord::parse(std::string_view value) {
  const auto items = kv::decode_list(value);
  if (items.size() != 2 && items.size() != 6)
    raise(Errc::Malformed, "request must have 2 or 6 fields: " + std::string(value));
  if (items[0].kind != ListItem::Kind::String || items[1].kind != ListItem::Kind::String)
    raise(Errc::Malformed, "verb and target must be strings");
  RequestRecord r;
  const auto& verb = items[0].text;
  if (verb == "replicate") {
    r.verb = Verb::Replicate;
  } else if (verb == "halt") {
    r.verb = Verb::Halt;
  } else if (verb == "die") {
    r.verb = Verb::Die;
  } else {
    raise(Errc::Malformed, "unknown verb " + verb);
  }
  r.target = items[1].text;
  if (r.target.empty()) raise(Errc::Malformed, "empty target");
  if (items.size() == 6) {
    if (r.verb != Verb::Replicate) raise(Errc::Malformed, "only replicate takes boot parameters");
    if (items[2].kind != ListItem::Kind::Integer || items[3].kind != ListItem::Kind::Integer ||
        items[4].kind != ListItem::Kind::String || items[5].kind != ListItem::Kind::String)
      raise(Errc::Malformed, "remote boot parameters must be I I S S");
    RemoteBootParams p;
    p.app_id = items[2].text;
    parse_u32(p.app_id, 16, "app id");
    if (p.app_id.size() != 8) raise(Errc::Malformed, "app id must be 8 hex digits");
    p.ttl = parse_u32(items[3].text, 10, "ttl");
    p.stop_mode = items[4].text;
    p.image = items[5].text;
    r.remote = p;
  }
  return r;
}

std::string wire_message(Errc code) {
  std::string out;
  for (char c : errc_name(code)) {
    if (c >= 'A' && c <= 'Z') {
      if (!out.empty()) out += ' ';
      out += static_cast<char>(c - 'A' + 'a');
    } else {
      out += c;
    }
  }
  return out;
}

std::optional<Errc> errc_from_wire(std::string_view message) {
  for (Errc c : all_errc())
    if (wire_message(c) == message) return c;
  return std::nullopt;
}

std::string Response::encode() const {
  if (ok) return kv::encode_list({ListItem::str("success")});
  return kv::encode_list({ListItem::str("error"), ListItem::str(message)});
}

Response Response::parse(std::string_view value) {
  const auto items = kv::decode_list(value);
  if (items.size() == 1 && items[0] == ListItem::str("success")) return success();
  if (items.size() == 2 && items[0] == ListItem::str("error") && !items[1].text.empty())
    return error(items[1].text);
  raise(Errc::Malformed, "not a response: " + std::string(value));
}

}  // namespace fractal::orch
