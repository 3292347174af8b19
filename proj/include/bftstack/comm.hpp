#pragma once

#include <deque>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "bftstack/core.hpp"
#include "bftstack/crypto.hpp"
#include "bftstack/envelope.hpp"
#include "bftstack/metrics.hpp"
#include "bftstack/netsim.hpp"

namespace bftstack {

/// Maximum number of pairwise node-disjoint sets among `paths`, where each
/// set holds the intermediate nodes of one received copy (empty set = the
/// direct link). Exact search up to `exact_limit` paths, greedy beyond;
/// greedy never overcounts.
int disjoint_path_count(const std::vector<std::set<NodeId>>& paths, std::size_t exact_limit = 12);

/// Directed "a knows b" edges learned from visited lists and discovery
/// answers. Comm only ever adds edges.
class KnowledgeGraph {
 public:
  void add(NodeId a, NodeId b) {
    if (a != b) edges_[a].insert(b);
  }
  bool knows(NodeId a, NodeId b) const {
    auto it = edges_.find(a);
    return it != edges_.end() && it->second.count(b) != 0;
  }
  const std::set<NodeId>& known_by(NodeId a) const {
    static const std::set<NodeId> empty;
    auto it = edges_.find(a);
    return it == edges_.end() ? empty : it->second;
  }

 private:
  std::map<NodeId, std::set<NodeId>> edges_;
};

struct CommConfig {
  SimTime comm_tick_ms = 1;     // send-batching timer
  int retransmit_initial_ticks = 4;  // first retransmission waits out the ack round trip
  int retransmit_backoff_cap = 16;
  int forward_cap = -1;         // forwards per message per node; -1 = f+1
  bool overhear_suppression = false;  // skip forwarding once f+1 disjoint
                                      // forwarder paths were overheard; only
                                      // sound when all nodes share one hop
  SimTime forward_jitter_ms = 8;      // forward hold-back so suppression can
                                      // observe earlier relays; applied only
                                      // with suppression on
  std::size_t dedup_window = 4096;
};

/// Best effort broadcast and reachable reliable broadcast for one node.
/// All sends are queued and leave on the 1 ms communication timer tick.
class CommLayer {
 public:
  static constexpr std::uint32_t kTimerTag = 0x10;

  CommLayer(NodeId self, FaultBudget budget, const KeyDirectory& keys, Simulator& sim, CommConfig cfg,
            NodeMetrics& metrics);

  void start();

  /// kind + body form the payload; best effort delivery to one-hop
  /// neighbors, immediate local self-delivery.
  void beb_broadcast(MsgKind kind, const Bytes& body);
  /// Restricted-target variant used to model equivocating senders. No
  /// self-delivery.
  void beb_broadcast_to(MsgKind kind, const Bytes& body, const std::set<NodeId>& targets);

  /// Reachable reliable broadcast: forwarded by receivers, delivered once
  /// at least f+1 node-disjoint paths carried it, retransmitted until the
  /// nodes in `pending_hint` (current neighbors) acknowledged.
  void rrb_broadcast(MsgKind kind, const Bytes& body);
  void rrb_broadcast_to(MsgKind kind, const Bytes& body, const std::set<NodeId>& targets);

  /// Impersonation attempt: envelope claims `claimed` as sender but is
  /// signed with this node's key. Receivers drop it on signature check.
  void beb_broadcast_forged(MsgKind kind, const Bytes& body, NodeId claimed);

  void on_radio(const EnvelopePtr& env);
  void on_timer_tick();

  /// Upper-layer delivery: (kind, origin, body, came_via_rrb).
  std::function<void(MsgKind, NodeId, const Bytes&, bool)> deliver_up;
  /// Current neighbor set, provided by the membership layer once it runs;
  /// used only to decide when retransmission may stop.
  std::function<std::vector<NodeId>()> neighbor_hint;

  KnowledgeGraph& knowledge() { return knowledge_; }
  const std::set<NodeId>& acquaintances() const { return acquaintances_; }

  void set_drop_forwarding(bool v) { drop_forwarding_ = v; }

  std::uint64_t retransmissions() const { return retransmissions_; }

 private:
  struct RrbRecord {
    std::vector<std::set<NodeId>> paths;      // intermediate sets of received copies
    std::vector<std::set<NodeId>> forwarded;  // paths of copies this node forwarded
    // Greedy pairwise-disjoint families, grown incrementally. The greedy
    // count never exceeds the true maximum; when it falls short and few
    // paths are stored, the exact search decides.
    std::vector<std::set<NodeId>> family;
    std::vector<std::set<NodeId>> relayed_family;
    Bytes inner;                              // encoded RrbMessage for forwarding
    bool delivered = false;
    bool acked = false;
    SimTime last_ack = -1;
    int forwards = 0;

    void grow_families(const std::set<NodeId>& p);
    int disjoint_lower_bound() const { return static_cast<int>(family.size()); }
    int relayed_lower_bound() const { return static_cast<int>(relayed_family.size()); }
  };

  struct OwnRrb {
    Bytes inner;                    // origin-signed content, re-wrapped per retransmission
    std::set<NodeId> pending;       // neighbors yet to acknowledge
    bool stop_when_empty = false;   // false when no neighbor hint existed at send
    SimTime next_retransmit = 0;
    SimTime backoff = 1;
  };

  struct PendingForward {
    NodeId origin;
    std::uint64_t origin_seq;
    std::vector<NodeId> visited;  // received path, self not yet appended
    SimTime due;                  // jittered so early forwards can suppress late ones
  };

  bool beb_accept(const EnvelopePtr& env);
  void handle_rrb(const EnvelopePtr& env);
  SimTime forward_due() const;
  void flush_sends();
  void send_now(const EnvelopePtr& env, MsgKind kind, const std::set<NodeId>* only = nullptr);
  EnvelopePtr make_envelope(ProtocolTag tag, Bytes payload, std::vector<NodeId> visited);
  void enqueue_ack(NodeId origin, std::uint64_t origin_seq);
  int forward_cap() const { return cfg_.forward_cap >= 0 ? cfg_.forward_cap : budget_.f + 1; }

  NodeId self_;
  FaultBudget budget_;
  const KeyDirectory& keys_;
  Simulator& sim_;
  CommConfig cfg_;
  NodeMetrics& metrics_;

  std::uint64_t env_seq_ = 0;
  std::uint64_t rrb_seq_ = 0;
  bool drop_forwarding_ = false;
  std::uint64_t retransmissions_ = 0;

  // envelope-level duplicate suppression, bounded per sender
  std::map<NodeId, std::set<std::uint64_t>> seen_;
  std::map<NodeId, std::uint64_t> seen_floor_;

  std::set<NodeId> acquaintances_;
  KnowledgeGraph knowledge_;

  std::map<std::pair<NodeId, std::uint64_t>, RrbRecord> rrb_;
  std::map<std::uint64_t, OwnRrb> own_;
  std::deque<std::pair<EnvelopePtr, std::set<NodeId>>> send_queue_;  // empty set = all
  std::deque<PendingForward> forward_queue_;
  std::vector<std::pair<NodeId, std::uint64_t>> ack_queue_;
};

}  // namespace bftstack
