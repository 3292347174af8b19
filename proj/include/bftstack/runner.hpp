#pragma once

#include <string>
#include <vector>

#include "bftstack/audit.hpp"
#include "bftstack/metrics.hpp"
#include "bftstack/scenario.hpp"
#include "bftstack/trace.hpp"

namespace bftstack {

struct TrialOutput {
  TrialMetrics metrics;
  std::string trace_text;      // stable serialization of the event log
  std::vector<NodeId> group;   // consensus group the trial ran with
  std::vector<bool> byzantine; // indexed by node id
};

/// Runs one seeded trial end to end: bootstrap, consensus, dissemination,
/// then the offline audit of the produced trace.
TrialOutput run_trial(const ScenarioConfig& cfg, std::uint64_t seed, int trial_index);

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<TrialOutput> trials;

  int violations() const;
  int decided_trials() const;
  std::vector<double> decide_latencies() const;  // per correct deciding node, ms
  std::vector<double> rounds() const;            // binary rounds per deciding trial (median per trial)
};

/// Trials run with seeds base..base+trials-1, in parallel workers, merged
/// by trial index.
ScenarioResult run_scenario(const ScenarioConfig& cfg, int workers = 0);

struct SweepRow {
  int n = 0;
  int decided = 0;
  int trials = 0;
  double median_rounds = 0;
  double mean_latency_ms = 0;
  double mean_total_sends = 0;
  double mean_consensus_sends = 0;
  int violations = 0;
};

std::vector<SweepRow> sweep(const ScenarioConfig& base, const std::vector<int>& node_counts);

/// Detail table: one row per trial per node. Column order is stable:
/// label trial seed node byzantine decided latency_ms rounds envelopes_sent
/// consensus_sends rrb_forwards rejected_bad_sig rejected_duplicate
/// rejected_unjustified agreement validity structure justification sink
std::string detail_table(const ScenarioResult& r);
/// Summary table: metric mean ci95 min max count, plus verdict counts.
std::string summary_table(const ScenarioResult& r);
std::string sweep_table(const std::vector<SweepRow>& rows);

/// Writes detail, summary and (for the first trial) the trace into out_dir.
void emit_files(const ScenarioResult& r, const std::string& out_dir);

}  // namespace bftstack
