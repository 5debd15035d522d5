#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fractal/common/error.hpp"
#include "fractal/kvstore/store.hpp"

namespace fractal::orch {

// Store layout shared by every host.
namespace paths {
kv::Path vms();                             // jitsu/vms
kv::Path vm(std::string_view name);         // jitsu/vms/<name>
kv::Path vm_aux(std::string_view name);     // jitsu/vm/<name>  (initial_xs, ttl)
kv::Path initial_xs(std::string_view name); // jitsu/vm/<name>/initial_xs
kv::Path ttl(std::string_view name);        // jitsu/vm/<name>/ttl
kv::Path requests();                        // jitsu/requests
kv::Path request_root(std::string_view instance);
kv::Path request(std::string_view instance);
kv::Path response(std::string_view instance);
kv::Path heartbeats();                      // jitsu/heartbeats
kv::Path heartbeat(std::string_view host);
}  // namespace paths

enum class VmState { Provisioning, Running, Halting, Dead };

std::string_view state_name(VmState s);
VmState parse_state(std::string_view s);
// provisioning->running->halting->dead, plus crashes straight to dead.
bool transition_allowed(VmState from, VmState to);

// Per-VM metadata under jitsu/vms/<name>. A first instance carries ips, mac
// and dns; a replica carries ip and first-instance-host instead.
struct VmRecord {
  std::string name;
  std::uint32_t dom_id = 0;
  std::string app_id;  // 8 hex digits
  VmState state = VmState::Provisioning;
  std::string stop_mode = "shutdown";
  bool first_instance = false;
  std::map<std::string, std::string> ips;             // vif name -> address
  std::string mac;
  std::map<std::string, std::uint32_t> dns;           // record name -> ttl
  std::string ip;
  std::string first_instance_host;

  // Throws Error(InvalidArgument) if the first-instance fields are mixed up.
  void validate() const;
  std::vector<kv::Mutation> to_mutations() const;
  static std::optional<VmRecord> load(const kv::Store& store, std::string_view name);
};

enum class Verb { Replicate, Halt, Die };

std::string_view verb_name(Verb v);

struct RemoteBootParams {
  std::string app_id;  // hex
  std::uint32_t ttl = 0;
  std::string stop_mode;
  std::string image;
};

// The value written under jitsu/requests/<INSTANCE>/request.
struct RequestRecord {
  Verb verb = Verb::Replicate;
  std::string target;
  std::optional<RemoteBootParams> remote;

  std::string encode() const;
  // Throws Error(Malformed).
  static RequestRecord parse(std::string_view value);
};

// Error codes travel as lower-case words ("no capacity"), which keeps them
// clear of the list delimiters.
std::string wire_message(Errc code);
std::optional<Errc> errc_from_wire(std::string_view message);

struct Response {
  bool ok = true;
  std::string message;

  static Response success() { return {true, {}}; }
  static Response error(std::string message) { return {false, std::move(message)}; }
  static Response error(Errc code) { return {false, wire_message(code)}; }

  std::string encode() const;
  static Response parse(std::string_view value);
};

}  // namespace fractal::orch
