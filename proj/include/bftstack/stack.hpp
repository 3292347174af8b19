#pragma once

#include <memory>

#include "bftstack/comm.hpp"
#include "bftstack/consensus.hpp"
#include "bftstack/membership.hpp"
#include "bftstack/metrics.hpp"
#include "bftstack/netsim.hpp"
#include "bftstack/trace.hpp"

namespace bftstack {

struct StackConfig {
  CommConfig comm;
  MembershipConfig membership;
  ConsensusConfig consensus;
  bool membership_enabled = true;
};

/// Full protocol stack of one node, driven by the simulator.
class NodeStack : public NodeHandler {
 public:
  static constexpr std::uint32_t kCrashTimer = 0x40;

  NodeStack(NodeId self, FaultBudget global_budget, const KeyDirectory& keys, Simulator& sim,
            StackConfig cfg, TraceLog* trace);

  void on_start() override;
  void on_deliver(const EnvelopePtr& env) override;
  void on_timer(std::uint32_t tag, TimerId id) override;

  NodeId id() const { return self_; }
  CommLayer& comm() { return *comm_; }
  MembershipLayer& membership() { return *membership_; }
  ConsensusService& consensus() { return *consensus_; }
  NodeMetrics& metrics() { return metrics_; }
  ResultCache& results() { return cache_; }

  /// Stops all processing at the given simulated time (fail-stop).
  void schedule_crash(SimTime at);
  bool crashed() const { return crashed_; }

  /// Test observation hook, called after the comm layer delivers upward.
  std::function<void(MsgKind, NodeId, const Bytes&, bool)> deliver_hook;

 private:
  void route_up(MsgKind kind, NodeId from, const Bytes& body, bool via_rrb);

  NodeId self_;
  Simulator& sim_;
  StackConfig cfg_;
  TraceLog* trace_;
  NodeMetrics metrics_;
  ResultCache cache_;
  InstanceRegistry registry_;
  std::unique_ptr<CommLayer> comm_;
  std::unique_ptr<MembershipLayer> membership_;
  std::unique_ptr<ConsensusService> consensus_;
  bool crashed_ = false;
};

}  // namespace bftstack
