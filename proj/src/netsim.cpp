#include "bftstack/netsim.hpp"

#include <cmath>
#include <stdexcept>

namespace bftstack {

Simulator::Simulator(std::uint64_t seed, int node_count, TopologyConfig topology, LinkModel link)
    : seed_(seed),
      topology_(std::move(topology)),
      link_(link),
      link_rng_(derive_seed(seed, "link")),
      mobility_rng_(derive_seed(seed, "mobility")) {
  if (node_count < 1) throw std::invalid_argument("node_count must be positive");
  if (topology_.radio_range <= 0 && topology_.kind != TopologyKind::ExplicitGraph)
    throw std::invalid_argument("radio_range must be positive");
  if (link_.delay_min < 1 || link_.delay_max < link_.delay_min)
    throw std::invalid_argument("link delay bounds invalid");
  positions_.resize(node_count);
  waypoints_.resize(node_count);
  handlers_.assign(node_count, nullptr);
  node_rngs_.reserve(node_count);
  for (int i = 0; i < node_count; ++i) node_rngs_.emplace_back(derive_seed(seed, "node", i));
  place_nodes();
  if (topology_.kind == TopologyKind::RandomWaypoint) {
    schedule(Event{mobility_dt_, 0xffffffff, next_seq_++, EventKind::MobilityStep, nullptr, 0});
  }
}

void Simulator::place_nodes() {
  const int n = node_count();
  switch (topology_.kind) {
    case TopologyKind::Grid: {
      int side = 1;
      while (side * side < n) ++side;
      double sx = side > 1 ? topology_.room_width / (side - 1) : 0;
      double sy = side > 1 ? topology_.room_height / (side - 1) : 0;
      for (int i = 0; i < n; ++i) {
        positions_[i] = Position{(i % side) * sx, (i / side) * sy};
      }
      break;
    }
    case TopologyKind::RandomWaypoint: {
      for (int i = 0; i < n; ++i) {
        positions_[i] = Position{mobility_rng_.real() * topology_.room_width,
                                 mobility_rng_.real() * topology_.room_height};
        waypoints_[i] = Position{mobility_rng_.real() * topology_.room_width,
                                 mobility_rng_.real() * topology_.room_height};
      }
      break;
    }
    case TopologyKind::ExplicitGraph: {
      if (static_cast<int>(topology_.adjacency.size()) != n)
        throw std::invalid_argument("adjacency size must match node count");
      for (int i = 0; i < n; ++i) positions_[i] = Position{static_cast<double>(i), 0};
      break;
    }
  }
}

void Simulator::attach(NodeId id, NodeHandler* handler) { handlers_.at(id) = handler; }

void Simulator::start_nodes() {
  for (int i = 0; i < node_count(); ++i)
    if (handlers_[i]) handlers_[i]->on_start();
}

bool Simulator::in_range(NodeId a, NodeId b) const {
  if (a == b) return false;
  if (topology_.kind == TopologyKind::ExplicitGraph) {
    for (NodeId v : topology_.adjacency[a])
      if (v == b) return true;
    return false;
  }
  return distance(positions_[a], positions_[b]) <= topology_.radio_range;
}

std::vector<NodeId> Simulator::neighbors_in_range(NodeId id) const {
  std::vector<NodeId> out;
  for (int j = 0; j < node_count(); ++j)
    if (in_range(id, static_cast<NodeId>(j))) out.push_back(static_cast<NodeId>(j));
  return out;
}

void Simulator::broadcast(NodeId src, const EnvelopePtr& env, const std::set<NodeId>* only) {
  ++stats_.transmissions;
  int targets = 0;
  for (int j = 0; j < node_count(); ++j) {
    NodeId dst = static_cast<NodeId>(j);
    if (dst == src) continue;  // local delivery is the upper layer's job
    if (!in_range(src, dst)) continue;
    if (only && !only->count(dst)) continue;
    ++targets;
    int copies = 1;
    if (link_rng_.chance(link_.loss_probability)) {
      ++stats_.lost;
      copies = 0;
    } else if (link_rng_.chance(link_.duplication_probability)) {
      ++stats_.duplicated;
      copies = 2;
    }
    for (int c = 0; c < copies; ++c) {
      SimTime delay = link_rng_.range(link_.delay_min, link_.delay_max);
      EnvelopePtr to_deliver = env;
      if (link_rng_.chance(link_.corruption_probability)) {
        ++stats_.corrupted;
        Envelope bad = *env;  // delivered with a mangled signature, then dropped by the receiver
        if (!bad.signature.empty()) bad.signature[0] ^= 0xff;
        if (!bad.wire.empty()) bad.wire[bad.wire.size() - bad.signature.size()] ^= 0xff;
        to_deliver = std::make_shared<const Envelope>(std::move(bad));
      }
      schedule(Event{now_ + delay, dst, next_seq_++, EventKind::Deliver, std::move(to_deliver), 0});
    }
  }
  if (on_transmit) on_transmit(now_, src, env, targets);
}

TimerId Simulator::set_timer(NodeId node, SimTime interval, bool periodic, std::uint32_t tag) {
  if (interval <= 0) throw std::invalid_argument("timer interval must be positive");
  TimerId id = next_timer_++;
  timers_.emplace(id, TimerRec{node, interval, periodic, tag, true});
  schedule(Event{now_ + interval, node, next_seq_++, EventKind::TimerFire, nullptr, id});
  return id;
}

void Simulator::cancel_timer(TimerId id) {
  auto it = timers_.find(id);
  if (it != timers_.end()) it->second.alive = false;
}

void Simulator::schedule(Event e) { queue_.push(std::move(e)); }

bool Simulator::step() {
  if (queue_.empty()) return false;
  Event e = queue_.top();
  queue_.pop();
  now_ = e.time;
  ++stats_.events_processed;
  process(e);
  return true;
}

void Simulator::run_until(SimTime t) {
  while (!queue_.empty() && queue_.top().time <= t) step();
  if (now_ < t) now_ = t;
}

void Simulator::run(const std::function<bool()>& stop, SimTime deadline) {
  while (!queue_.empty()) {
    if (stop && stop()) return;
    if (deadline >= 0 && queue_.top().time > deadline) {
      now_ = deadline;
      return;
    }
    step();
  }
}

void Simulator::process(const Event& e) {
  switch (e.kind) {
    case EventKind::Deliver: {
      ++stats_.deliveries;
      NodeHandler* h = handlers_.at(e.target);
      if (on_deliver_hook) on_deliver_hook(now_, e.target, e.env);
      if (h) h->on_deliver(e.env);
      break;
    }
    case EventKind::TimerFire: {
      auto it = timers_.find(e.timer);
      if (it == timers_.end() || !it->second.alive) {
        timers_.erase(e.timer);
        break;
      }
      TimerRec rec = it->second;
      if (rec.periodic) {
        schedule(Event{now_ + rec.interval, rec.node, next_seq_++, EventKind::TimerFire, nullptr, e.timer});
      } else {
        timers_.erase(e.timer);
      }
      NodeHandler* h = handlers_.at(rec.node);
      if (h) h->on_timer(rec.tag, e.timer);
      break;
    }
    case EventKind::MobilityStep: {
      mobility_step(mobility_dt_);
      schedule(Event{now_ + mobility_dt_, 0xffffffff, next_seq_++, EventKind::MobilityStep, nullptr, 0});
      break;
    }
  }
}

void Simulator::mobility_step(SimTime dt) {
  if (topology_.kind != TopologyKind::RandomWaypoint) return;
  const double step_m = topology_.speed * (static_cast<double>(dt) / 1000.0);
  for (int i = 0; i < node_count(); ++i) {
    Position& p = positions_[i];
    Position& w = waypoints_[i];
    double remaining = step_m;
    while (remaining > 0) {
      double d = distance(p, w);
      if (d <= remaining) {
        p = w;
        remaining -= d;
        w = Position{mobility_rng_.real() * topology_.room_width,
                     mobility_rng_.real() * topology_.room_height};
        if (d == 0) break;  // degenerate waypoint draw on top of the node
      } else {
        p.x += (w.x - p.x) / d * remaining;
        p.y += (w.y - p.y) / d * remaining;
        remaining = 0;
      }
    }
  }
}

}  // namespace bftstack
