#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "bftstack/comm.hpp"
#include "bftstack/core.hpp"
#include "bftstack/trace.hpp"

namespace bftstack {

struct SinkView {
  std::set<NodeId> members;
  std::uint64_t epoch = 0;
};

struct MembershipConfig {
  SimTime heartbeat_interval_ms = 100;
  int exclusion_multiplier = 5;       // silence window before removal
  SimTime discovery_start_ms = 300;
  int discovery_deadline_beats = 20;  // deadline = start + beats * interval
  SimTime sink_compute_at_ms = 800;   // absolute simulated time
  SimTime sink_recompute_delay_ms = 500;
  int sink_cap = 0;                   // clique growth stops here; 0 = unbounded
};

/// Neighbors discovery, network discovery and sink formation for one node.
class MembershipLayer {
 public:
  static constexpr std::uint32_t kHeartbeatTimer = 0x20;
  static constexpr std::uint32_t kDiscoveryStartTimer = 0x21;
  static constexpr std::uint32_t kDiscoveryRetryTimer = 0x22;
  static constexpr std::uint32_t kSinkComputeTimer = 0x23;
  static constexpr std::uint32_t kSinkRecomputeTimer = 0x24;

  MembershipLayer(NodeId self, FaultBudget budget, CommLayer& comm, Simulator& sim, MembershipConfig cfg,
                  TraceLog* trace);

  void start();
  void on_message(MsgKind kind, NodeId from, const Bytes& body);
  void on_timer(std::uint32_t tag);

  const std::map<NodeId, SimTime>& neighbor_table() const { return neighbors_; }
  std::vector<NodeId> neighbor_ids() const;
  const std::set<NodeId>& known() const { return known_; }
  bool discovery_complete() const { return discovery_complete_; }
  bool discovery_partial() const { return discovery_partial_; }
  SimTime discovery_done_at() const { return discovery_done_at_; }
  const std::optional<SinkView>& sink() const { return sink_; }
  bool sink_unavailable() const { return sink_unavailable_; }
  SimTime sink_done_at() const { return sink_done_at_; }
  std::uint64_t set_responses_processed() const { return set_responses_processed_; }

  std::function<void(const SinkView&)> on_sink_computed;
  std::function<void()> on_sink_unavailable;

 private:
  struct PeerReport {
    std::set<NodeId> known;
    std::set<NodeId> neighbors;
  };

  void heartbeat_tick();
  void check_exclusions();
  void begin_discovery();
  void finish_discovery(bool deadline_hit);
  void broadcast_known_set();
  void compute_sink();

  NodeId self_;
  FaultBudget budget_;
  CommLayer& comm_;
  Simulator& sim_;
  MembershipConfig cfg_;
  TraceLog* trace_;

  std::map<NodeId, SimTime> neighbors_;  // neighbor -> last heartbeat time
  std::set<NodeId> known_;
  std::map<NodeId, std::vector<NodeId>> nnei_;
  std::map<NodeId, std::uint64_t> set_digests_;  // last absorbed list per sender
  std::set<NodeId> pending_;
  bool discovery_started_ = false;
  bool discovery_complete_ = false;
  bool discovery_partial_ = false;
  SimTime discovery_deadline_ = 0;
  SimTime discovery_done_at_ = -1;
  std::uint64_t set_responses_processed_ = 0;
  TimerId retry_timer_ = 0;

  std::map<NodeId, PeerReport> reports_;
  std::optional<SinkView> sink_;
  bool sink_unavailable_ = false;
  bool recompute_scheduled_ = false;
  std::uint64_t epoch_ = 0;
  SimTime sink_done_at_ = -1;
};

/// Deterministic greedy clique: seeds in ascending id order, grows by the
/// smallest vertex adjacent to all current members, returns the first clique
/// reaching `minimum`. `cap` bounds growth when positive.
std::optional<std::set<NodeId>> greedy_clique(const std::set<NodeId>& vertices,
                                              const std::function<bool(NodeId, NodeId)>& adjacent,
                                              int minimum, int cap);

}  // namespace bftstack
