#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <vector>

#include "bftstack/core.hpp"
#include "bftstack/envelope.hpp"
#include "bftstack/rng.hpp"

namespace bftstack {

struct Position {
  double x = 0;
  double y = 0;
};

inline double distance(const Position& a, const Position& b) {
  double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

enum class TopologyKind : std::uint8_t {
  Grid,            // fixed positions spread over the room
  RandomWaypoint,  // random placement, nodes move toward random waypoints
  ExplicitGraph,   // adjacency given directly (tests, partitioned scenarios)
};

struct TopologyConfig {
  TopologyKind kind = TopologyKind::Grid;
  double room_width = 30.0;   // meters
  double room_height = 30.0;  // meters
  double radio_range = 50.0;  // meters, unit-disk reception
  double speed = 1.0;         // m/s, RandomWaypoint only
  // ExplicitGraph: adjacency[i] lists i's neighbors.
  std::vector<std::vector<NodeId>> adjacency;
};

struct LinkModel {
  double loss_probability = 0.0;
  SimTime delay_min = 1;  // per-hop, simulated ms
  SimTime delay_max = 5;
  double duplication_probability = 0.0;
  double corruption_probability = 0.0;  // delivered with an invalid signature
};

using TimerId = std::uint64_t;

/// Per-node protocol endpoint driven by the simulator. Handlers run
/// sequentially; nodes never share mutable state.
class NodeHandler {
 public:
  virtual ~NodeHandler() = default;
  virtual void on_start() = 0;
  virtual void on_deliver(const EnvelopePtr& env) = 0;
  virtual void on_timer(std::uint32_t tag, TimerId id) = 0;
};

struct SimStats {
  std::uint64_t transmissions = 0;  // radio broadcasts performed
  std::uint64_t deliveries = 0;     // per-target deliveries executed
  std::uint64_t lost = 0;
  std::uint64_t duplicated = 0;
  std::uint64_t corrupted = 0;
  std::uint64_t events_processed = 0;
};

/// Deterministic discrete-event simulator of a wireless broadcast medium.
///
/// Determinism contract: equal (seed, configuration, node behavior) produces
/// a bit-identical event sequence. Events with equal timestamps are ordered
/// by (target, insertion sequence); every random draw comes from seeded
/// streams owned by the simulator.
class Simulator {
 public:
  Simulator(std::uint64_t seed, int node_count, TopologyConfig topology, LinkModel link);

  int node_count() const { return static_cast<int>(positions_.size()); }
  SimTime now() const { return now_; }
  std::uint64_t seed() const { return seed_; }

  void attach(NodeId id, NodeHandler* handler);
  /// Invokes on_start() on every attached handler at the current time.
  void start_nodes();

  /// Broadcasts one envelope from src to every node in radio range,
  /// each delivery independently subject to loss, delay and duplication.
  /// The source never receives its own transmission. When `only` is given,
  /// delivery is restricted to that subset (used to model an equivocating
  /// sender steering different content at different receivers).
  void broadcast(NodeId src, const EnvelopePtr& env, const std::set<NodeId>* only = nullptr);

  TimerId set_timer(NodeId node, SimTime interval, bool periodic, std::uint32_t tag);
  void cancel_timer(TimerId id);

  /// Processes the next event. Returns false when the queue is empty.
  bool step();
  /// Processes every event with time <= t and advances the clock to t.
  void run_until(SimTime t);
  /// Runs until `stop()` returns true, the queue empties, or time exceeds
  /// `deadline` (when non-negative).
  void run(const std::function<bool()>& stop, SimTime deadline = -1);

  const Position& position_of(NodeId id) const { return positions_.at(id); }
  bool in_range(NodeId a, NodeId b) const;
  std::vector<NodeId> neighbors_in_range(NodeId id) const;

  /// Per-node randomness for protocol-level choices (coin flips).
  Rng& node_rng(NodeId id) { return node_rngs_.at(id); }

  const SimStats& stats() const { return stats_; }

  /// Optional observation hooks (metrics, tracing).
  std::function<void(SimTime, NodeId, const EnvelopePtr&, int targets)> on_transmit;
  std::function<void(SimTime, NodeId, const EnvelopePtr&)> on_deliver_hook;

 private:
  enum class EventKind : std::uint8_t { Deliver, TimerFire, MobilityStep };

  struct Event {
    SimTime time;
    NodeId target;
    std::uint64_t seq;
    EventKind kind;
    EnvelopePtr env;
    TimerId timer = 0;
  };

  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.target != b.target) return a.target > b.target;
      return a.seq > b.seq;
    }
  };

  struct TimerRec {
    NodeId node;
    SimTime interval;
    bool periodic;
    std::uint32_t tag;
    bool alive;
  };

  void place_nodes();
  void schedule(Event e);
  void process(const Event& e);
  void mobility_step(SimTime dt);

  std::uint64_t seed_;
  TopologyConfig topology_;
  LinkModel link_;
  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_timer_ = 1;
  SimTime mobility_dt_ = 100;

  std::vector<Position> positions_;
  std::vector<Position> waypoints_;
  std::vector<NodeHandler*> handlers_;
  std::vector<Rng> node_rngs_;
  Rng link_rng_;
  Rng mobility_rng_;

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::map<TimerId, TimerRec> timers_;
  SimStats stats_;
};

}  // namespace bftstack
