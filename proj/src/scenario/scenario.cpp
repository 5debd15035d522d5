#include "fractal/scenario/scenario.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fractal/common/error.hpp"

namespace fractal::scn {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) out.push_back(trim(part));
  return out;
}

double to_double(const std::string& v) {
  double d = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) raise(Errc::Malformed, "not a number: " + v);
  return d;
}

std::uint64_t to_uint(const std::string& v, int base = 10) {
  std::uint64_t n = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n, base);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size())
    raise(Errc::Malformed, "not a non-negative integer: " + v);
  return n;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  raise(Errc::Malformed, "not a boolean: " + v);
}

// "a:b, c:d" pairs.
std::vector<std::pair<std::string, std::string>> pairs(const std::string& v) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : split(v, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) raise(Errc::Malformed, "expected a:b in " + item);
    out.emplace_back(trim(item.substr(0, colon)), trim(item.substr(colon + 1)));
  }
  return out;
}

Fault parse_fault(const std::string& v) {
  std::istringstream in(v);
  std::string when, kind, arg;
  in >> when >> kind >> arg;
  Fault f;
  f.time = to_double(when);
  if (kind == "crash-replica" || kind == "reboot-replica") {
    f.kind = kind == "crash-replica" ? Fault::Kind::CrashReplica : Fault::Kind::RebootReplica;
    f.index = arg.empty() ? 0 : to_uint(arg);
  } else if (kind == "fail-host") {
    f.kind = Fault::Kind::FailHost;
    f.host = static_cast<std::uint32_t>(to_uint(arg));
  } else {
    raise(Errc::Malformed, "unknown fault: " + kind);
  }
  return f;
}

using Setter = std::function<void(Scenario&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    auto num = [&m](const std::string& key, auto get) {
      m[key] = [get](Scenario& s, const std::string& v) { get(s) = to_double(v); };
    };
    auto uint = [&m](const std::string& key, auto get) {
      m[key] = [get](Scenario& s, const std::string& v) {
        using T = std::remove_reference_t<decltype(get(s))>;
        get(s) = static_cast<T>(to_uint(v));
      };
    };
    m["scenario.name"] = [](Scenario& s, const std::string& v) { s.name = v; };
    num("run.until", [](Scenario& s) -> double& { return s.until; });
    uint("run.seed", [](Scenario& s) -> std::uint64_t& { return s.seed; });

    uint("cluster.hosts", [](Scenario& s) -> std::size_t& { return s.cluster.hosts; });
    uint("cluster.cores", [](Scenario& s) -> std::size_t& { return s.cluster.cores; });
    uint("cluster.reserved_cores", [](Scenario& s) -> std::size_t& { return s.cluster.reserved_cores; });
    num("cluster.store_delay", [](Scenario& s) -> double& { return s.cluster.store_delay; });
    num("cluster.boot_delay", [](Scenario& s) -> double& { return s.cluster.boot_delay; });
    num("cluster.monitor_period", [](Scenario& s) -> double& { return s.cluster.monitor_period; });
    num("cluster.heartbeat_interval", [](Scenario& s) -> double& { return s.cluster.heartbeat_interval; });
    uint("cluster.heartbeat_multiplier", [](Scenario& s) -> int& { return s.cluster.heartbeat_multiplier; });
    num("cluster.ha_detect_delay", [](Scenario& s) -> double& { return s.cluster.ha_detect_delay; });
    uint("cluster.replica_ttl", [](Scenario& s) -> std::uint32_t& { return s.cluster.replica_ttl; });
    m["cluster.backend"] = [](Scenario& s, const std::string& v) { s.cluster.mode = sw::parse_mode(v); };

    m["service.name"] = [](Scenario& s, const std::string& v) { s.service.name = v; };
    uint("service.host", [](Scenario& s) -> std::uint32_t& { return s.service.host; });
    m["service.ip"] = [](Scenario& s, const std::string& v) { s.service.ip = sw::Ipv4::parse(v); };
    m["service.mac"] = [](Scenario& s, const std::string& v) { s.service.mac = sw::MacAddr::parse(v); };
    uint("service.port", [](Scenario& s) -> std::uint16_t& { return s.cluster.service_port; });
    m["service.image"] = [](Scenario& s, const std::string& v) { s.service.image = v; };
    m["service.app_id"] = [](Scenario& s, const std::string& v) {
      if (v.size() != 8) raise(Errc::Malformed, "app id must be 8 hex digits");
      s.service.app_id = static_cast<sw::GroupId>(to_uint(v, 16));
    };
    uint("service.dns_ttl", [](Scenario& s) -> std::uint32_t& { return s.service.dns_ttl; });

    num("guest.lo_rps", [](Scenario& s) -> double& { return s.guest.policy.lo_rps; });
    num("guest.hi_rps", [](Scenario& s) -> double& { return s.guest.policy.hi_rps; });
    uint("guest.poll_halt", [](Scenario& s) -> int& { return s.guest.policy.poll_halt; });
    num("guest.poll_period", [](Scenario& s) -> double& { return s.guest.policy.poll_period; });
    num("guest.window", [](Scenario& s) -> double& { return s.guest.policy.window; });
    m["guest.scaling"] = [](Scenario& s, const std::string& v) { s.guest.scaling = to_bool(v); };
    m["guest.log_requests"] = [](Scenario& s, const std::string& v) { s.guest.log_requests = to_bool(v); };

    m["net.base_latency_ms"] = [](Scenario& s, const std::string& v) { s.net.base_latency = to_double(v) / 1e3; };
    m["net.hop_delay_ms"] = [](Scenario& s, const std::string& v) { s.net.hop_delay = to_double(v) / 1e3; };
    num("net.core_mbps", [](Scenario& s) -> double& { return s.net.core_mbps; });
    uint("net.cores", [](Scenario& s) -> std::size_t& { return s.net.cores; });
    uint("net.reserved_cores", [](Scenario& s) -> std::size_t& { return s.net.reserved_cores; });
    num("net.sample_period", [](Scenario& s) -> double& { return s.net.sample_period; });

    uint("workload.urls", [](Scenario& s) -> std::size_t& { return s.workload.urls; });
    num("workload.jitter", [](Scenario& s) -> double& { return s.workload.jitter; });
    m["workload.sizes"] = [](Scenario& s, const std::string& v) {
      s.workload.sizes.clear();
      for (const auto& [b, f] : pairs(v))
        s.workload.sizes.push_back({static_cast<std::uint32_t>(to_uint(b)), to_double(f)});
    };
    m["workload.schedule"] = [](Scenario& s, const std::string& v) {
      for (const auto& [t, r] : pairs(v)) s.workload.schedule.push_back({to_double(t), to_double(r)});
    };
    // start, first rps, step rps, period, steps
    m["workload.ramp"] = [](Scenario& s, const std::string& v) {
      const auto f = split(v, ',');
      if (f.size() != 5) raise(Errc::Malformed, "ramp needs start,first,step,period,steps");
      for (const auto& step : sim::WorkloadSpec::ramp(to_double(f[0]), to_double(f[1]), to_double(f[2]),
                                                      to_double(f[3]), to_uint(f[4])))
        s.workload.schedule.push_back(step);
    };
    return m;
  }();
  return table;
}

}  // namespace

std::string_view fault_name(Fault::Kind k) {
  switch (k) {
    case Fault::Kind::CrashReplica: return "crash-replica";
    case Fault::Kind::RebootReplica: return "reboot-replica";
    case Fault::Kind::FailHost: return "fail-host";
  }
  return "?";
}

Scenario::Scenario() {
  service.name = "www";
  service.ip = sw::Ipv4::parse("10.0.0.18");
  service.mac = sw::MacAddr::parse("12:43:3d:a3:d3:02");
}

std::string Diagnostic::str() const {
  std::string out = level == Level::Error ? "error" : "warning";
  if (line > 0) out += ": line " + std::to_string(line);
  if (!key.empty()) out += ": " + key;
  return out + ": " + message;
}

std::size_t ParseResult::errors() const {
  std::size_t n = 0;
  for (const auto& d : diagnostics) n += d.level == Diagnostic::Level::Error;
  return n;
}

std::size_t ParseResult::warnings() const { return diagnostics.size() - errors(); }
bool ParseResult::ok() const { return errors() == 0; }

void check_ranges(const Scenario& s, std::vector<Diagnostic>& out) {
  auto err = [&out](std::string key, std::string msg) {
    out.push_back({Diagnostic::Level::Error, 0, std::move(key), std::move(msg)});
  };
  if (!(s.until > 0.0)) err("run.until", "must be positive");
  if (s.guest.policy.lo_rps >= s.guest.policy.hi_rps) err("guest.lo_rps", "thresholds inverted");
  try {
    s.guest.policy.validate();
  } catch (const Error& e) {
    if (s.guest.policy.lo_rps < s.guest.policy.hi_rps) err("guest", e.what());
  }
  if (s.cluster.hosts == 0) err("cluster.hosts", "need at least one host");
  if (s.cluster.slots() == 0) err("cluster.cores", "capacity must be positive: no cores left after reservation");
  if (s.cluster.heartbeat_interval <= 0.0 || s.cluster.heartbeat_multiplier < 1)
    err("cluster.heartbeat_interval", "heartbeat parameters must be positive");
  if (s.cluster.monitor_period <= 0.0) err("cluster.monitor_period", "must be positive");
  if (s.cluster.boot_delay < 0.0 || s.cluster.store_delay < 0.0) err("cluster.boot_delay", "delays must be >= 0");
  if (s.service.host < 1 || s.service.host > s.cluster.hosts) err("service.host", "no such host");
  if (!(s.net.core_mbps > 0.0)) err("net.core_mbps", "capacity must be positive");
  if (s.net.slots() == 0) err("net.cores", "capacity must be positive: no cores left after reservation");
  try {
    s.net.validate();
  } catch (const Error& e) {
    if (s.net.core_mbps > 0.0 && s.net.slots() > 0) err("net", e.what());
  }
  try {
    s.workload.validate();
  } catch (const Error& e) {
    err("workload", e.what());
  }
  for (const auto& f : s.faults) {
    if (f.time < 0.0) err("fault", "fault time must be >= 0");
    if (f.kind == Fault::Kind::FailHost && (f.host < 1 || f.host > s.cluster.hosts))
      err("fault", "fail-host names no such host");
  }
}

ParseResult parse_scenario(std::string_view text) {
  ParseResult r;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const auto body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      r.diagnostics.push_back({Diagnostic::Level::Error, line, "", "expected key = value"});
      continue;
    }
    const auto key = trim(body.substr(0, eq));
    const auto value = trim(body.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, line); !fresh && key != "workload.schedule" && key != "workload.ramp")
      r.diagnostics.push_back({Diagnostic::Level::Warning, line, key,
                               "overrides line " + std::to_string(it->second)});
    try {
      if (key.rfind("fault.", 0) == 0 && key.size() > 6) {
        r.scenario.faults.push_back(parse_fault(value));
        continue;
      }
      const auto& table = setters();
      auto it = table.find(key);
      if (it == table.end()) {
        r.diagnostics.push_back({Diagnostic::Level::Warning, line, key, "unknown key"});
        continue;
      }
      it->second(r.scenario, value);
    } catch (const Error& e) {
      r.diagnostics.push_back({Diagnostic::Level::Error, line, key, e.what()});
    }
  }
  r.scenario.cluster.hash_seed = r.scenario.seed;
  check_ranges(r.scenario, r.diagnostics);
  return r;
}

ParseResult load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    ParseResult r;
    r.diagnostics.push_back({Diagnostic::Level::Error, 0, "", "cannot open scenario file " + path});
    return r;
  }
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_scenario(buf.str());
}

}  // namespace fractal::scn
