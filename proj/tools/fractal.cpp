// Scenario runner. Exit codes: 0 clean, 2 validation error, 3 invariant
// violation.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fractal/common/error.hpp"
#include "fractal/scenario/simulation.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitViolation = 3;

struct Options {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<double> until;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--scenario", o.scenario, "scenario file")->required();
  cmd->add_option("--seed", o.seed, "override run.seed (also reseeds flow hashing)");
  cmd->add_option("--backend", o.backend, "steering backend")->check(CLI::IsMember({"group", "learn"}));
  cmd->add_option("--until", o.until, "run horizon in seconds; for dump-state, the dump time")
      ->check(CLI::NonNegativeNumber);
}

void report(const fractal::scn::ParseResult& r) {
  for (const auto& d : r.diagnostics) std::cerr << d.str() << "\n";
}

// Loads, applies overrides, and re-runs range checks so an override cannot
// sneak past validation.
std::optional<fractal::scn::Scenario> load(const Options& o, bool override_until = true) {
  auto r = fractal::scn::load_scenario(o.scenario);
  if (o.seed) {
    r.scenario.seed = *o.seed;
    r.scenario.cluster.hash_seed = *o.seed;
  }
  if (o.backend) r.scenario.cluster.mode = fractal::sw::parse_mode(*o.backend);
  const bool until = override_until && o.until;
  if (until) r.scenario.until = *o.until;
  if (o.seed || o.backend || until) {
    std::erase_if(r.diagnostics, [](const auto& d) { return d.line == 0 && !d.key.empty(); });
    fractal::scn::check_ranges(r.scenario, r.diagnostics);
  }
  report(r);
  if (!r.ok()) return std::nullopt;
  return r.scenario;
}

int violated(const std::vector<std::string>& v) {
  for (const auto& s : v) std::cerr << "invariant violated: " << s << "\n";
  return kExitViolation;
}

int run(const Options& o) {
  auto sc = load(o);
  if (!sc) return kExitInvalid;
  const std::filesystem::path dir = o.out.empty() ? "." : o.out;
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "metrics.csv");
  if (!csv) {
    std::cerr << "error: cannot write " << (dir / "metrics.csv").string() << "\n";
    return kExitInvalid;
  }
  // Unit buffering keeps the CSV intact up to the last sample on abort.
  csv << std::unitbuf;
  fractal::scn::Simulation s(*sc, &csv);
  s.run();
  const auto summary = s.summary();
  std::ofstream(dir / "summary.txt") << summary.str();
  std::cout << summary.str();
  return summary.violations.empty() ? kExitOk : violated(summary.violations);
}

int validate(const Options& o) { return load(o) ? kExitOk : kExitInvalid; }

int dump_state(const Options& o) {
  auto sc = load(o, false);
  if (!sc) return kExitInvalid;
  const double at = o.until.value_or(sc->until);
  if (at > sc->until) {
    std::cerr << "error: --until " << at << " is past the run horizon " << sc->until << "\n";
    return kExitInvalid;
  }
  fractal::scn::Simulation s(*sc);
  s.run_until(at);
  const auto dump = s.dump_state();
  if (o.out.empty()) {
    std::cout << dump;
  } else {
    std::ofstream f(o.out);
    if (!f) {
      std::cerr << "error: cannot write " << o.out << "\n";
      return kExitInvalid;
    }
    f << dump;
  }
  return s.violations().empty() ? kExitOk : violated(s.violations());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fractal scenario runner"};
  app.require_subcommand(1);
  Options o;

  auto* run_cmd = app.add_subcommand("run", "run a scenario, write metrics.csv and summary.txt");
  add_common(run_cmd, o);
  run_cmd->add_option("--out", o.out, "output directory");

  auto* val_cmd = app.add_subcommand("validate", "check a scenario file");
  add_common(val_cmd, o);

  auto* dump_cmd = app.add_subcommand("dump-state", "dump every host's store and switch at --until");
  add_common(dump_cmd, o);
  dump_cmd->add_option("--out", o.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }
  try {
    if (*run_cmd) return run(o);
    if (*val_cmd) return validate(o);
    return dump_state(o);
  } catch (const fractal::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}
