// Experiment runner for the ad hoc BFT protocol stack.
//
//   bftsim run   --scenario cfg.json [overrides]   one scenario, emit metrics
//   bftsim sweep --scenario cfg.json --n-list ...  scaling study over n
//   bftsim audit --trace file                      re-check a saved trace
//
// Exit code 0 when every property verdict passed, 2 on any violation.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bftstack/runner.hpp"

using namespace bftstack;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Overrides {
  std::string scenario_path;
  std::string out_dir;
  int n = -1, f = -1, trials = -1, sink_cap = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string protocol, proposals, adversary, sink_mode;
  SimTime time_budget = -1;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "scenario file (json)");
    cmd->add_option("--out-dir", out_dir, "output directory (default: env BFTSIM_OUT_DIR or ./out)");
    cmd->add_option("--n", n, "node count");
    cmd->add_option("--f", f, "fault budget");
    cmd->add_option("--trials", trials, "seeded trials");
    cmd->add_option("--seed", seed, "base seed")->each([this](const std::string&) { seed_set = true; });
    cmd->add_option("--protocol", protocol, "binary|multivalued|vector|bootstrap");
    cmd->add_option("--proposals", proposals, "unanimous|divergent");
    cmd->add_option("--adversary", adversary, "none|silent|random_values|wrong_phase|equivocate|drop_forwarding|mixed");
    cmd->add_option("--sink-mode", sink_mode, "sink_only|all_nodes");
    cmd->add_option("--sink-cap", sink_cap, "cap on sink clique size");
    cmd->add_option("--time-budget", time_budget, "consensus budget, simulated ms");
  }

  ScenarioConfig build() const {
    ScenarioConfig cfg;
    if (!scenario_path.empty()) cfg = ScenarioConfig::from_json_text(slurp(scenario_path));
    if (n >= 0) cfg.n = n;
    if (f >= 0) cfg.f = f;
    if (trials >= 0) cfg.trials = trials;
    if (seed_set) cfg.seed = seed;
    if (sink_cap >= 0) cfg.sink_cap = sink_cap;
    if (time_budget >= 0) cfg.time_budget_ms = time_budget;
    if (!protocol.empty()) {
      ScenarioConfig tmp = ScenarioConfig::from_json_text("{\"protocol\":\"" + protocol + "\"}");
      cfg.protocol = tmp.protocol;
    }
    if (!proposals.empty()) {
      ScenarioConfig tmp = ScenarioConfig::from_json_text("{\"proposals\":\"" + proposals + "\"}");
      cfg.proposals = tmp.proposals;
    }
    if (!sink_mode.empty()) {
      ScenarioConfig tmp = ScenarioConfig::from_json_text("{\"sink_mode\":\"" + sink_mode + "\"}");
      cfg.sink_mode = tmp.sink_mode;
    }
    if (!adversary.empty()) cfg.adversary.behavior = adversary_from_name(adversary);
    cfg.validate();
    return cfg;
  }

  std::string resolved_out_dir() const {
    if (!out_dir.empty()) return out_dir;
    if (const char* env = std::getenv("BFTSIM_OUT_DIR")) return env;
    return "out";
  }
};

int cmd_run(const Overrides& o) {
  ScenarioConfig cfg = o.build();
  ScenarioResult r = run_scenario(cfg);
  emit_files(r, o.resolved_out_dir());
  std::cout << summary_table(r);
  int bad = r.violations();
  if (bad) {
    std::cerr << "property violations in " << bad << " of " << r.trials.size() << " trials\n";
    for (const auto& t : r.trials)
      if (!t.metrics.all_verdicts_ok()) {
        std::cerr << "  trial " << t.metrics.trial_index << ": " << t.metrics.violation << "\n";
        break;
      }
    return 2;
  }
  return 0;
}

int cmd_sweep(const Overrides& o, const std::vector<int>& ns) {
  ScenarioConfig cfg = o.build();
  auto rows = sweep(cfg, ns);
  std::string table = sweep_table(rows);
  std::cout << table;
  namespace fs = std::filesystem;
  fs::create_directories(o.resolved_out_dir());
  std::ofstream f(fs::path(o.resolved_out_dir()) / "sweep.tsv", std::ios::binary);
  f << table;
  for (const auto& row : rows)
    if (row.violations) return 2;
  return 0;
}

int cmd_audit(const std::string& trace_path) {
  auto events = TraceLog::parse(slurp(trace_path));
  // Standalone re-check of what a bare trace supports: decision agreement
  // among all deciders per instance.
  std::map<std::string, std::set<Bytes>> decided;
  for (const auto& e : events)
    if (e.kind == TraceKind::Decide) decided[e.instance].insert(e.payload);
  bool ok = true;
  for (const auto& [inst, values] : decided) {
    if (values.size() > 1) {
      std::cerr << "agreement violation in instance " << inst << "\n";
      ok = false;
    }
  }
  std::cout << "events: " << events.size() << ", instances decided: " << decided.size() << "\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ad hoc Byzantine fault-tolerant stack simulator"};
  app.require_subcommand(1);

  Overrides o;
  std::vector<int> ns;
  std::string trace_path;

  CLI::App* run = app.add_subcommand("run", "run one scenario");
  o.add_flags(run);

  CLI::App* sw = app.add_subcommand("sweep", "scaling study over node counts");
  o.add_flags(sw);
  sw->add_option("--n-list", ns, "node counts to sweep")->delimiter(',');

  CLI::App* audit = app.add_subcommand("audit", "re-check a saved trace");
  audit->add_option("--trace", trace_path, "trace file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(o);
    if (sw->parsed()) return cmd_sweep(o, ns.empty() ? std::vector<int>{4, 10, 25} : ns);
    if (audit->parsed()) return cmd_audit(trace_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
