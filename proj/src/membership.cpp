#include "bftstack/membership.hpp"

#include <algorithm>

namespace bftstack {

namespace {

Bytes encode_id_set(const std::set<NodeId>& ids) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(ids.size()));
  for (NodeId v : ids) w.u32(v);
  return w.take();
}

std::set<NodeId> decode_id_set(ByteReader& r) {
  std::set<NodeId> out;
  std::uint16_t n = r.u16();
  for (std::uint16_t i = 0; i < n; ++i) out.insert(r.u32());
  return out;
}

}  // namespace

std::optional<std::set<NodeId>> greedy_clique(const std::set<NodeId>& vertices,
                                              const std::function<bool(NodeId, NodeId)>& adjacent,
                                              int minimum, int cap) {
  for (NodeId seed : vertices) {
    std::set<NodeId> clique{seed};
    for (;;) {
      if (cap > 0 && static_cast<int>(clique.size()) >= cap) break;
      std::optional<NodeId> next;
      for (NodeId v : vertices) {
        if (clique.count(v)) continue;
        bool ok = true;
        for (NodeId c : clique) {
          if (!adjacent(v, c)) {
            ok = false;
            break;
          }
        }
        if (ok) {
          next = v;
          break;  // vertices iterate in ascending order
        }
      }
      if (!next) break;
      clique.insert(*next);
    }
    if (static_cast<int>(clique.size()) >= minimum) return clique;
  }
  return std::nullopt;
}

MembershipLayer::MembershipLayer(NodeId self, FaultBudget budget, CommLayer& comm, Simulator& sim,
                                 MembershipConfig cfg, TraceLog* trace)
    : self_(self), budget_(budget), comm_(comm), sim_(sim), cfg_(cfg), trace_(trace) {}

void MembershipLayer::start() {
  sim_.set_timer(self_, cfg_.heartbeat_interval_ms, true, kHeartbeatTimer);
  heartbeat_tick();  // first heartbeat goes out immediately
  SimTime start_in = std::max<SimTime>(1, cfg_.discovery_start_ms - sim_.now());
  sim_.set_timer(self_, start_in, false, kDiscoveryStartTimer);
  SimTime sink_in = std::max<SimTime>(1, cfg_.sink_compute_at_ms - sim_.now());
  sim_.set_timer(self_, sink_in, false, kSinkComputeTimer);
}

std::vector<NodeId> MembershipLayer::neighbor_ids() const {
  std::vector<NodeId> out;
  out.reserve(neighbors_.size());
  for (const auto& [id, t] : neighbors_) out.push_back(id);
  return out;
}

void MembershipLayer::heartbeat_tick() {
  comm_.beb_broadcast(MsgKind::Heartbeat, {});
  check_exclusions();
  if (discovery_started_ && !discovery_complete_ && sim_.now() >= discovery_deadline_) finish_discovery(true);
}

void MembershipLayer::check_exclusions() {
  const SimTime window = cfg_.exclusion_multiplier * cfg_.heartbeat_interval_ms;
  for (auto it = neighbors_.begin(); it != neighbors_.end();) {
    if (sim_.now() - it->second > window) {
      NodeId gone = it->first;
      it = neighbors_.erase(it);
      if (trace_) trace_->emit({sim_.now(), self_, TraceKind::NeighborDrop, "", gone, 0, {}});
      if (sink_ && sink_->members.count(gone) && !recompute_scheduled_) {
        recompute_scheduled_ = true;
        reports_.clear();
        broadcast_known_set();
        sim_.set_timer(self_, cfg_.sink_recompute_delay_ms, false, kSinkRecomputeTimer);
      }
    } else {
      ++it;
    }
  }
}

void MembershipLayer::on_timer(std::uint32_t tag) {
  switch (tag) {
    case kHeartbeatTimer:
      heartbeat_tick();
      break;
    case kDiscoveryStartTimer:
      begin_discovery();
      break;
    case kDiscoveryRetryTimer:
      if (!discovery_complete_ && !pending_.empty()) comm_.beb_broadcast(MsgKind::GetNeighbors, {});
      break;
    case kSinkComputeTimer:
    case kSinkRecomputeTimer:
      compute_sink();
      break;
    default:
      break;
  }
}

void MembershipLayer::begin_discovery() {
  discovery_started_ = true;
  discovery_deadline_ = sim_.now() + cfg_.discovery_deadline_beats * cfg_.heartbeat_interval_ms;
  known_.insert(self_);
  for (const auto& [id, t] : neighbors_) {
    known_.insert(id);
    pending_.insert(id);
  }
  if (pending_.empty()) {
    // isolated: nothing to ask, wait out the deadline in case someone shows up
    return;
  }
  comm_.beb_broadcast(MsgKind::GetNeighbors, {});
  retry_timer_ = sim_.set_timer(self_, cfg_.heartbeat_interval_ms, true, kDiscoveryRetryTimer);
}

void MembershipLayer::finish_discovery(bool deadline_hit) {
  if (discovery_complete_) return;
  discovery_complete_ = true;
  discovery_partial_ = (deadline_hit && !pending_.empty()) || known_.size() <= 1;
  discovery_done_at_ = sim_.now();
  if (retry_timer_) sim_.cancel_timer(retry_timer_);
  broadcast_known_set();
}

void MembershipLayer::broadcast_known_set() {
  std::set<NodeId> nb;
  for (const auto& [id, t] : neighbors_) nb.insert(id);
  ByteWriter w;
  Bytes k = encode_id_set(known_);
  Bytes n = encode_id_set(nb);
  w.raw(k);
  w.raw(n);
  comm_.rrb_broadcast(MsgKind::KnownSet, w.take());
}

void MembershipLayer::on_message(MsgKind kind, NodeId from, const Bytes& body) {
  switch (kind) {
    case MsgKind::Heartbeat: {
      if (from == self_) return;
      neighbors_[from] = sim_.now();
      if (discovery_started_) known_.insert(from);
      break;
    }
    case MsgKind::GetNeighbors: {
      if (from == self_) return;
      ByteWriter w;
      w.u32(from);  // requester
      std::set<NodeId> nb;
      for (const auto& [id, t] : neighbors_) nb.insert(id);
      w.raw(encode_id_set(nb));
      comm_.beb_broadcast(MsgKind::SetNeighbors, w.take());
      break;
    }
    case MsgKind::SetNeighbors: {
      if (from == self_) return;
      try {
        ByteReader r(body);
        NodeId requester = r.u32();
        if (requester == self_) ++set_responses_processed_;
        // answers to other requesters carry the same list; skip the ones
        // already absorbed
        std::uint64_t digest = fnv1a(body) ^ from;
        auto [it, fresh] = set_digests_.emplace(from, digest);
        if (!fresh) {
          if (it->second == digest) break;
          it->second = digest;
        }
        std::set<NodeId> list = decode_id_set(r);
        std::vector<NodeId> ordered(list.begin(), list.end());
        nnei_[from] = ordered;
        for (NodeId l : list) comm_.knowledge().add(from, l);
        if (!discovery_started_) break;
        pending_.erase(from);
        for (NodeId l : list) {
          if (l == self_) continue;
          if (known_.insert(l).second) pending_.insert(l);
        }
        if (!discovery_complete_ && pending_.empty()) finish_discovery(false);
      } catch (const std::out_of_range&) {
      }
      break;
    }
    case MsgKind::KnownSet: {
      try {
        ByteReader r(body);
        PeerReport rep;
        rep.known = decode_id_set(r);
        rep.neighbors = decode_id_set(r);
        reports_.emplace(from, std::move(rep));  // first report wins
      } catch (const std::out_of_range&) {
      }
      break;
    }
    default:
      break;
  }
}

void MembershipLayer::compute_sink() {
  recompute_scheduled_ = false;
  // own report
  PeerReport self_rep;
  self_rep.known = known_;
  self_rep.known.insert(self_);
  for (const auto& [id, t] : neighbors_) self_rep.neighbors.insert(id);
  reports_[self_] = self_rep;

  const int minimum = 3 * budget_.f + 1;
  // candidates: peers whose reported known set overlaps ours enough
  std::set<NodeId> candidates{self_};
  for (const auto& [peer, rep] : reports_) {
    if (peer == self_) continue;
    std::size_t overlap = 0;
    for (NodeId v : rep.known)
      if (self_rep.known.count(v)) ++overlap;
    if (static_cast<int>(overlap) >= minimum) candidates.insert(peer);
  }

  auto adjacent = [&](NodeId a, NodeId b) {
    auto ia = reports_.find(a);
    auto ib = reports_.find(b);
    if (ia == reports_.end() || ib == reports_.end()) return false;
    return ia->second.neighbors.count(b) != 0 && ib->second.neighbors.count(a) != 0;
  };

  auto clique = greedy_clique(candidates, adjacent, minimum, cfg_.sink_cap);
  ++epoch_;
  sink_done_at_ = sim_.now();
  if (clique) {
    sink_ = SinkView{*clique, epoch_};
    sink_unavailable_ = false;
    if (trace_) {
      ByteWriter w;
      w.u16(static_cast<std::uint16_t>(clique->size()));
      for (NodeId v : *clique) w.u32(v);
      trace_->emit({sim_.now(), self_, TraceKind::SinkView, "", 0, static_cast<std::int64_t>(epoch_), w.take()});
    }
    if (on_sink_computed) on_sink_computed(*sink_);
  } else {
    sink_.reset();
    sink_unavailable_ = true;
    if (trace_) trace_->emit({sim_.now(), self_, TraceKind::SinkUnavailable, "", 0, static_cast<std::int64_t>(epoch_), {}});
    if (on_sink_unavailable) on_sink_unavailable();
  }
}

}  // namespace bftstack
