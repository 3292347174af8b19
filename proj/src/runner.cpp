#include "bftstack/runner.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace bftstack {

namespace {

Bytes proposal_for(const ScenarioConfig& cfg, NodeId id) {
  switch (cfg.protocol) {
    case ProtocolChoice::Binary:
      if (cfg.proposals == ProposalMode::Unanimous) return {1};
      return {static_cast<std::uint8_t>(id % 2)};  // 1 when the identifier is odd
    case ProtocolChoice::Multivalued:
    case ProtocolChoice::Vector: {
      if (cfg.proposals == ProposalMode::Unanimous) return to_bytes("V");
      return to_bytes("p" + std::to_string(id));
    }
    default:
      return {};
  }
}

InstanceId top_instance(const ScenarioConfig& cfg) {
  switch (cfg.protocol) {
    case ProtocolChoice::Binary: return {cfg.label, ProtocolTag::Bin, -1};
    case ProtocolChoice::Multivalued: return {cfg.label, ProtocolTag::Mv, -1};
    case ProtocolChoice::Vector: return {cfg.label, ProtocolTag::Vec, -1};
    default: return {cfg.label, ProtocolTag::Bin, -1};
  }
}

bool topology_is_complete(const TopologyConfig& t, int n) {
  switch (t.kind) {
    case TopologyKind::Grid:
    case TopologyKind::RandomWaypoint: {
      double diag = std::sqrt(t.room_width * t.room_width + t.room_height * t.room_height);
      return t.radio_range >= diag;
    }
    case TopologyKind::ExplicitGraph: {
      for (int a = 0; a < n; ++a) {
        std::set<NodeId> nb(t.adjacency[a].begin(), t.adjacency[a].end());
        for (int b = 0; b < n; ++b)
          if (b != a && !nb.count(static_cast<NodeId>(b))) return false;
      }
      return true;
    }
  }
  return false;
}

}  // namespace

TrialOutput run_trial(const ScenarioConfig& cfg, std::uint64_t seed, int trial_index) {
  cfg.validate();
  TrialOutput out;
  out.byzantine.assign(cfg.n, false);
  for (NodeId b : cfg.byzantine_nodes()) out.byzantine[b] = true;

  auto signer = std::make_shared<SimAuthenticator>();
  KeyDirectory keys(seed, cfg.n, signer);

  LinkModel link = cfg.link;
  if (cfg.adversary.loss_override >= 0) link.loss_probability = cfg.adversary.loss_override;
  if (cfg.adversary.duplication_override >= 0) link.duplication_probability = cfg.adversary.duplication_override;

  Simulator sim(seed, cfg.n, cfg.topology, link);
  TraceLog trace;

  StackConfig stack_cfg = cfg.stack;
  stack_cfg.membership.sink_compute_at_ms = cfg.bootstrap_ms;
  stack_cfg.membership.sink_cap = cfg.sink_cap;
  // Overheard-forwarder suppression is sound exactly when every node hears
  // every transmission; enable it automatically for such topologies.
  if (topology_is_complete(cfg.topology, cfg.n)) stack_cfg.comm.overhear_suppression = true;
  FaultBudget global_budget(cfg.n, cfg.f);

  std::vector<std::unique_ptr<NodeStack>> stacks;
  std::vector<std::unique_ptr<AdversaryEngine>> engines;
  stacks.reserve(cfg.n);
  int byz_index = 0;
  for (int i = 0; i < cfg.n; ++i) {
    auto st = std::make_unique<NodeStack>(static_cast<NodeId>(i), global_budget, keys, sim, stack_cfg, &trace);
    if (out.byzantine[i]) {
      AdversaryBehavior b = behavior_for(cfg.adversary, byz_index++);
      auto eng = std::make_unique<AdversaryEngine>(static_cast<NodeId>(i), b, seed, keys, cfg.n);
      if (eng->drops_forwarding()) st->comm().set_drop_forwarding(true);
      auto* raw = eng.get();
      st->consensus().set_send_filter(
          [raw](MsgKind k, const Bytes& body) { return raw->transform(k, body); });
      engines.push_back(std::move(eng));
    }
    sim.attach(static_cast<NodeId>(i), st.get());
    stacks.push_back(std::move(st));
  }
  if (cfg.crash) stacks[cfg.crash->first]->schedule_crash(cfg.crash->second);

  sim.start_nodes();
  sim.run_until(cfg.bootstrap_ms);

  // adjacency snapshot for the sink audit
  std::vector<std::vector<bool>> adjacency(cfg.n, std::vector<bool>(cfg.n, false));
  for (int a = 0; a < cfg.n; ++a)
    for (int b = 0; b < cfg.n; ++b)
      if (a != b) adjacency[a][b] = sim.in_range(a, b);

  // resolve the consensus group and configure every node
  std::vector<NodeId> group;
  bool sink_formed = false;
  if (cfg.sink_mode == SinkMode::AllNodes) {
    for (int i = 0; i < cfg.n; ++i) group.push_back(static_cast<NodeId>(i));
    sink_formed = true;
    for (auto& st : stacks) st->consensus().configure_group(group, global_budget);
  } else {
    // each node follows its own computed view; the audit confirms the views
    // agree. The runner's reference group is node 0's correct view (falling
    // back to any correct node that has one).
    for (int i = 0; i < cfg.n; ++i) {
      const auto& view = stacks[i]->membership().sink();
      if (view && !out.byzantine[i] && group.empty())
        group.assign(view->members.begin(), view->members.end());
    }
    sink_formed = !group.empty();
    for (auto& st : stacks) {
      const auto& view = st->membership().sink();
      if (view) {
        int nc = static_cast<int>(view->members.size());
        int fc = std::min(cfg.f, (nc - 1) / 3);
        st->consensus().configure_group({view->members.begin(), view->members.end()},
                                        FaultBudget(nc, fc));
      } else {
        st->consensus().configure_group({}, global_budget);
      }
    }
  }

  out.metrics.seed = seed;
  out.metrics.trial_index = trial_index;
  out.metrics.n = cfg.n;
  out.metrics.f = cfg.f;
  out.metrics.sink_formed = sink_formed;

  const InstanceId instance = top_instance(cfg);
  const SimTime consensus_start = sim.now();
  std::atomic<int> undecided{0};

  if (cfg.protocol != ProtocolChoice::Bootstrap && sink_formed) {
    int expected = 0;
    for (NodeId member : group) {
      if (out.byzantine[member]) continue;
      auto& svc = stacks[member]->consensus();
      if (!svc.in_group()) continue;
      ++expected;
    }
    undecided = expected;
    for (NodeId member : group) {
      auto& svc = stacks[member]->consensus();
      if (!svc.in_group()) continue;
      bool byz = out.byzantine[member];
      svc.on_decide = [&undecided, byz](const InstanceId&, const Bytes&, SimTime) {
        if (!byz) undecided.fetch_sub(1);
      };
      Bytes prop = proposal_for(cfg, member);
      try {
        switch (cfg.protocol) {
          case ProtocolChoice::Binary: svc.propose_binary(instance, prop[0]); break;
          case ProtocolChoice::Multivalued: svc.propose_multivalued(instance, prop); break;
          case ProtocolChoice::Vector: svc.propose_vector(instance, prop); break;
          default: break;
        }
      } catch (const std::logic_error&) {
        // a node whose view excludes itself does not participate
      }
    }
    SimTime deadline = consensus_start + cfg.time_budget_ms;
    sim.run([&]() { return undecided.load() <= 0; }, deadline);
    // drain window: dissemination to the rest of the network
    sim.run_until(std::min<SimTime>(deadline, sim.now() + 200));
  } else if (cfg.protocol != ProtocolChoice::Bootstrap && !sink_formed) {
    out.metrics.sink_unavailable_reported = true;
  }

  // ----- metrics ----------------------------------------------------------
  out.group = group;
  out.metrics.decide_latency_ms.assign(cfg.n, -1);
  out.metrics.rounds_used.assign(cfg.n, -1);
  out.metrics.node.resize(cfg.n);
  SimTime disc = -1, sink_t = -1;
  for (int i = 0; i < cfg.n; ++i) {
    auto& st = *stacks[i];
    out.metrics.node[i] = st.metrics();
    if (!out.byzantine[i]) {
      disc = std::max(disc, st.membership().discovery_done_at());
      sink_t = std::max(sink_t, st.membership().sink_done_at());
    }
    if (auto t = st.consensus().decide_time(instance)) out.metrics.decide_latency_ms[i] = *t - consensus_start;
    if (cfg.protocol == ProtocolChoice::Binary) {
      if (auto r = st.consensus().binary_rounds(instance)) out.metrics.rounds_used[i] = *r;
    }
  }
  out.metrics.discovery_done_ms = disc;
  out.metrics.sink_done_ms = sink_t;

  // ----- audit ------------------------------------------------------------
  AuditInput ain;
  ain.events = &trace.events();
  ain.keys = &keys;
  ain.byzantine = out.byzantine;
  ain.group = group;
  if (!group.empty()) {
    int nc = static_cast<int>(group.size());
    ain.group_budget = FaultBudget(nc, std::min(cfg.f, (nc - 1) / 3));
  }
  ain.min_sink_size = 3 * cfg.f + 1;
  ain.protocol = cfg.protocol;
  ain.instance_label = cfg.label;
  ain.adjacency = adjacency;
  ain.sink_expected = cfg.sink_mode == SinkMode::SinkOnly && cfg.protocol != ProtocolChoice::Bootstrap;
  AuditVerdicts verdicts = audit_trial(ain);
  out.metrics.agreement_ok = verdicts.agreement;
  out.metrics.validity_ok = verdicts.validity;
  out.metrics.structure_ok = verdicts.structure;
  out.metrics.justification_ok = verdicts.justification;
  out.metrics.sink_ok = verdicts.sink;
  out.metrics.violation = verdicts.violation;

  out.trace_text = trace.serialize();
  return out;
}

int ScenarioResult::violations() const {
  int v = 0;
  for (const auto& t : trials)
    if (!t.metrics.all_verdicts_ok()) ++v;
  return v;
}

int ScenarioResult::decided_trials() const {
  int d = 0;
  for (const auto& t : trials)
    if (t.metrics.decided(t.group, t.byzantine)) ++d;
  return d;
}

std::vector<double> ScenarioResult::decide_latencies() const {
  std::vector<double> out;
  for (const auto& t : trials) {
    for (NodeId id : t.group) {
      if (t.byzantine.size() > id && t.byzantine[id]) continue;
      if (t.metrics.decide_latency_ms.size() > id && t.metrics.decide_latency_ms[id] >= 0)
        out.push_back(static_cast<double>(t.metrics.decide_latency_ms[id]));
    }
  }
  return out;
}

std::vector<double> ScenarioResult::rounds() const {
  std::vector<double> out;
  for (const auto& t : trials) {
    std::vector<double> per_node;
    for (NodeId id : t.group) {
      if (t.byzantine.size() > id && t.byzantine[id]) continue;
      if (t.metrics.rounds_used.size() > id && t.metrics.rounds_used[id] >= 0)
        per_node.push_back(static_cast<double>(t.metrics.rounds_used[id]));
    }
    if (!per_node.empty()) out.push_back(median(per_node));
  }
  return out;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg, int workers) {
  cfg.validate();
  ScenarioResult result;
  result.config = cfg;
  result.trials.resize(cfg.trials);
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, cfg.trials));

  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= cfg.trials) return;
      result.trials[i] = run_trial(cfg, cfg.seed + static_cast<std::uint64_t>(i), i);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return result;
}

std::vector<SweepRow> sweep(const ScenarioConfig& base, const std::vector<int>& node_counts) {
  std::vector<SweepRow> rows;
  for (int n : node_counts) {
    ScenarioConfig cfg = base;
    cfg.n = n;
    cfg.f = std::min(cfg.f, (n - 1) / 3);
    ScenarioResult r = run_scenario(cfg);
    SweepRow row;
    row.n = n;
    row.trials = cfg.trials;
    row.decided = r.decided_trials();
    row.violations = r.violations();
    row.median_rounds = median(r.rounds());
    row.mean_latency_ms = summarize(r.decide_latencies()).mean;
    std::vector<double> totals, cons;
    for (const auto& t : r.trials) {
      totals.push_back(static_cast<double>(t.metrics.total_sends()));
      cons.push_back(static_cast<double>(t.metrics.total_consensus_sends()));
    }
    row.mean_total_sends = summarize(totals).mean;
    row.mean_consensus_sends = summarize(cons).mean;
    rows.push_back(row);
  }
  return rows;
}

std::string detail_table(const ScenarioResult& r) {
  std::ostringstream os;
  os << "label\ttrial\tseed\tnode\tbyzantine\tdecided\tlatency_ms\trounds\tenvelopes_sent\t"
        "consensus_sends\trrb_forwards\trejected_bad_sig\trejected_duplicate\trejected_unjustified\t"
        "agreement\tvalidity\tstructure\tjustification\tsink\n";
  for (const auto& t : r.trials) {
    for (int i = 0; i < t.metrics.n; ++i) {
      const auto& nm = t.metrics.node[i];
      bool byz = t.byzantine.size() > static_cast<std::size_t>(i) && t.byzantine[i];
      SimTime lat = t.metrics.decide_latency_ms[i];
      os << r.config.label << '\t' << t.metrics.trial_index << '\t' << t.metrics.seed << '\t' << i << '\t'
         << (byz ? 1 : 0) << '\t' << (lat >= 0 ? 1 : 0) << '\t' << lat << '\t' << t.metrics.rounds_used[i]
         << '\t' << nm.envelopes_sent << '\t' << nm.consensus_sends() << '\t' << nm.rrb_forwards << '\t'
         << nm.rejected_bad_sig << '\t' << nm.rejected_duplicate << '\t' << nm.rejected_unjustified << '\t'
         << t.metrics.agreement_ok << '\t' << t.metrics.validity_ok << '\t' << t.metrics.structure_ok
         << '\t' << t.metrics.justification_ok << '\t' << t.metrics.sink_ok << '\n';
    }
  }
  return os.str();
}

std::string summary_table(const ScenarioResult& r) {
  std::ostringstream os;
  os << "metric\tmean\tci95\tmin\tmax\tcount\n";
  auto line = [&](const char* name, const std::vector<double>& xs) {
    Summary s = summarize(xs);
    os << name << '\t' << s.mean << '\t' << s.ci_half << '\t' << s.min << '\t' << s.max << '\t' << s.count
       << '\n';
  };
  line("decide_latency_ms", r.decide_latencies());
  line("rounds", r.rounds());
  std::vector<double> totals, cons, disc, sink;
  for (const auto& t : r.trials) {
    totals.push_back(static_cast<double>(t.metrics.total_sends()));
    cons.push_back(static_cast<double>(t.metrics.total_consensus_sends()));
    if (t.metrics.discovery_done_ms >= 0) disc.push_back(static_cast<double>(t.metrics.discovery_done_ms));
    if (t.metrics.sink_done_ms >= 0) sink.push_back(static_cast<double>(t.metrics.sink_done_ms));
  }
  line("total_sends", totals);
  line("consensus_sends", cons);
  line("discovery_done_ms", disc);
  line("sink_done_ms", sink);
  os << "decided_trials\t" << r.decided_trials() << "\t0\t0\t0\t" << r.trials.size() << '\n';
  os << "violations\t" << r.violations() << "\t0\t0\t0\t" << r.trials.size() << '\n';
  return os.str();
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "n\ttrials\tdecided\tviolations\tmedian_rounds\tmean_latency_ms\tmean_total_sends\t"
        "mean_consensus_sends\n";
  for (const auto& row : rows) {
    os << row.n << '\t' << row.trials << '\t' << row.decided << '\t' << row.violations << '\t'
       << row.median_rounds << '\t' << row.mean_latency_ms << '\t' << row.mean_total_sends << '\t'
       << row.mean_consensus_sends << '\n';
  }
  return os.str();
}

void emit_files(const ScenarioResult& r, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write output file in " + out_dir);
    f << content;
  };
  write("detail.tsv", detail_table(r));
  write("summary.tsv", summary_table(r));
  if (!r.trials.empty()) write("trial0.trace", r.trials[0].trace_text);
}

}  // namespace bftstack
