#include "bftstack/comm.hpp"

#include <algorithm>

namespace bftstack {

namespace {

bool sets_disjoint(const std::set<NodeId>& a, const std::set<NodeId>& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) ++ia;
    else if (*ib < *ia) ++ib;
    else return false;
  }
  return true;
}

int best_disjoint(const std::vector<std::set<NodeId>>& paths, std::size_t i, std::vector<std::size_t>& chosen) {
  if (i == paths.size()) return static_cast<int>(chosen.size());
  // skip paths[i]
  int best = best_disjoint(paths, i + 1, chosen);
  // take paths[i] if compatible
  bool ok = true;
  for (std::size_t c : chosen) {
    if (!sets_disjoint(paths[i], paths[c])) {
      ok = false;
      break;
    }
  }
  if (ok) {
    chosen.push_back(i);
    best = std::max(best, best_disjoint(paths, i + 1, chosen));
    chosen.pop_back();
  }
  return best;
}

}  // namespace

int disjoint_path_count(const std::vector<std::set<NodeId>>& paths, std::size_t exact_limit) {
  if (paths.empty()) return 0;
  // Empty sets (direct copies) are disjoint from everything; count one and
  // solve the rest. Two direct copies are the same path.
  std::vector<std::set<NodeId>> rest;
  bool has_direct = false;
  for (const auto& p : paths) {
    if (p.empty()) has_direct = true;
    else rest.push_back(p);
  }
  std::sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });
  rest.erase(std::unique(rest.begin(), rest.end()), rest.end());
  int count;
  if (rest.size() <= exact_limit) {
    std::vector<std::size_t> chosen;
    count = best_disjoint(rest, 0, chosen);
  } else {
    // greedy by ascending size; never more than the true maximum
    std::vector<std::set<NodeId>> taken;
    for (const auto& p : rest) {
      bool ok = true;
      for (const auto& t : taken) {
        if (!sets_disjoint(p, t)) {
          ok = false;
          break;
        }
      }
      if (ok) taken.push_back(p);
    }
    count = static_cast<int>(taken.size());
  }
  return count + (has_direct ? 1 : 0);
}

void CommLayer::RrbRecord::grow_families(const std::set<NodeId>& p) {
  bool ok = true;
  for (const auto& q : family) {
    if (!sets_disjoint(p, q)) {
      ok = false;
      break;
    }
  }
  if (ok) family.push_back(p);
  if (p.empty()) return;
  ok = true;
  for (const auto& q : relayed_family) {
    if (!sets_disjoint(p, q)) {
      ok = false;
      break;
    }
  }
  if (ok) relayed_family.push_back(p);
}

CommLayer::CommLayer(NodeId self, FaultBudget budget, const KeyDirectory& keys, Simulator& sim, CommConfig cfg,
                     NodeMetrics& metrics)
    : self_(self), budget_(budget), keys_(keys), sim_(sim), cfg_(cfg), metrics_(metrics) {}

void CommLayer::start() { sim_.set_timer(self_, cfg_.comm_tick_ms, true, kTimerTag); }

EnvelopePtr CommLayer::make_envelope(ProtocolTag tag, Bytes payload, std::vector<NodeId> visited) {
  Envelope e;
  e.tag = tag;
  e.sender = self_;
  e.seq = env_seq_++;
  e.visited = std::move(visited);
  e.payload = std::move(payload);
  return seal_envelope(std::move(e), keys_);
}

void CommLayer::beb_broadcast(MsgKind kind, const Bytes& body) {
  Bytes payload;
  payload.reserve(body.size() + 1);
  payload.push_back(static_cast<std::uint8_t>(kind));
  payload.insert(payload.end(), body.begin(), body.end());
  send_queue_.push_back({make_envelope(ProtocolTag::Beb, std::move(payload), {}), {}});
  if (deliver_up) deliver_up(kind, self_, body, false);
}

void CommLayer::beb_broadcast_to(MsgKind kind, const Bytes& body, const std::set<NodeId>& targets) {
  Bytes payload;
  payload.push_back(static_cast<std::uint8_t>(kind));
  payload.insert(payload.end(), body.begin(), body.end());
  send_queue_.push_back({make_envelope(ProtocolTag::Beb, std::move(payload), {}), targets});
}

void CommLayer::beb_broadcast_forged(MsgKind kind, const Bytes& body, NodeId claimed) {
  Bytes payload;
  payload.push_back(static_cast<std::uint8_t>(kind));
  payload.insert(payload.end(), body.begin(), body.end());
  Envelope e;
  e.tag = ProtocolTag::Beb;
  e.sender = claimed;
  e.seq = env_seq_++;
  e.payload = std::move(payload);
  Bytes prefix = e.signed_prefix();
  e.signature = keys_.sign(self_, prefix);  // wrong key on purpose
  ByteWriter w;
  w.raw(prefix);
  w.blob16(e.signature);
  e.wire = w.take();
  send_queue_.push_back({std::make_shared<const Envelope>(std::move(e)), {}});
}

void CommLayer::rrb_broadcast(MsgKind kind, const Bytes& body) {
  Bytes inner_payload;
  inner_payload.push_back(static_cast<std::uint8_t>(kind));
  inner_payload.insert(inner_payload.end(), body.begin(), body.end());

  RrbMessage msg;
  msg.origin = self_;
  msg.origin_seq = rrb_seq_++;
  msg.payload = std::move(inner_payload);
  msg.origin_sig = keys_.sign(self_, msg.signed_part());

  Bytes inner = msg.encode();
  send_queue_.push_back({make_envelope(ProtocolTag::Rrb, inner, {self_}), {}});

  OwnRrb rec;
  rec.inner = std::move(inner);
  if (neighbor_hint) {
    for (NodeId v : neighbor_hint()) rec.pending.insert(v);
  }
  rec.stop_when_empty = !rec.pending.empty();
  rec.backoff = cfg_.comm_tick_ms * cfg_.retransmit_initial_ticks;
  rec.next_retransmit = sim_.now() + rec.backoff;
  own_.emplace(msg.origin_seq, std::move(rec));

  if (deliver_up) deliver_up(kind, self_, body, true);
}

void CommLayer::rrb_broadcast_to(MsgKind kind, const Bytes& body, const std::set<NodeId>& targets) {
  Bytes inner_payload;
  inner_payload.push_back(static_cast<std::uint8_t>(kind));
  inner_payload.insert(inner_payload.end(), body.begin(), body.end());
  RrbMessage msg;
  msg.origin = self_;
  msg.origin_seq = rrb_seq_++;
  msg.payload = std::move(inner_payload);
  msg.origin_sig = keys_.sign(self_, msg.signed_part());
  send_queue_.push_back({make_envelope(ProtocolTag::Rrb, msg.encode(), {self_}), targets});
}

bool CommLayer::beb_accept(const EnvelopePtr& env) {
  if (!verify_envelope(*env, keys_)) {
    ++metrics_.rejected_bad_sig;
    return false;
  }
  std::uint64_t floor = 0;
  if (auto it = seen_floor_.find(env->sender); it != seen_floor_.end()) floor = it->second;
  if (env->seq < floor) {
    ++metrics_.rejected_duplicate;
    return false;
  }
  auto& set = seen_[env->sender];
  if (!set.insert(env->seq).second) {
    ++metrics_.rejected_duplicate;
    return false;
  }
  while (set.size() > cfg_.dedup_window) {
    seen_floor_[env->sender] = *set.begin() + 1;
    set.erase(set.begin());
  }
  acquaintances_.insert(env->sender);
  return true;
}

void CommLayer::on_radio(const EnvelopePtr& env) {
  if (!beb_accept(env)) return;
  if (env->tag == ProtocolTag::Beb) {
    if (env->payload.empty()) {
      ++metrics_.rejected_malformed;
      return;
    }
    ++metrics_.beb_delivered;
    MsgKind kind = env->kind();
    Bytes body(env->payload.begin() + 1, env->payload.end());
    if (deliver_up) deliver_up(kind, env->sender, body, false);
    return;
  }
  handle_rrb(env);
}

void CommLayer::handle_rrb(const EnvelopePtr& env) {
  auto parsed = RrbMessage::decode(env->payload);
  if (!parsed) {
    ++metrics_.rejected_malformed;
    return;
  }
  RrbMessage& msg = *parsed;

  // visited sanity: origin first, transmitter last, no repeats
  const auto& visited = env->visited;
  if (visited.empty() || visited.front() != msg.origin || visited.back() != env->sender) {
    ++metrics_.rejected_malformed;
    return;
  }
  {
    std::set<NodeId> uniq(visited.begin(), visited.end());
    if (uniq.size() != visited.size()) {
      ++metrics_.rejected_malformed;
      return;
    }
  }
  if (!keys_.verify(msg.origin, msg.signed_part(), msg.origin_sig)) {
    ++metrics_.rejected_bad_sig;
    return;
  }

  // knowledge side effect: each hop heard the previous one
  for (std::size_t i = 1; i < visited.size(); ++i) knowledge_.add(visited[i], visited[i - 1]);
  knowledge_.add(self_, env->sender);

  std::set<NodeId> intermediates(visited.begin() + 1, visited.end());
  bool self_on_path = intermediates.count(self_) != 0;
  if (msg.origin == self_) return;  // own message echoed back

  MsgKind kind = msg.kind();
  auto key = std::make_pair(msg.origin, msg.origin_seq);

  if (kind == MsgKind::RrbAck) {
    // Acks gate retransmission only; process the first valid copy, then
    // keep forwarding so multi-hop origins hear them too.
    auto& rec = rrb_[key];
    if (rec.inner.empty()) rec.inner = env->payload;
    if (!self_on_path &&
        std::find(rec.paths.begin(), rec.paths.end(), intermediates) == rec.paths.end()) {
      rec.paths.push_back(intermediates);  // overheard relays, for suppression
      rec.grow_families(intermediates);
    }
    if (!rec.delivered) {
      rec.delivered = true;
      ByteReader r(std::span<const std::uint8_t>(msg.payload).subspan(1));
      try {
        std::uint16_t count = r.u16();
        for (std::uint16_t i = 0; i < count; ++i) {
          NodeId acked_origin = r.u32();
          std::uint64_t acked_seq = r.u64();
          if (acked_origin == self_) {
            auto it = own_.find(acked_seq);
            if (it != own_.end()) it->second.pending.erase(msg.origin);
          }
        }
      } catch (const std::out_of_range&) {
        ++metrics_.rejected_malformed;
        return;
      }
    }
    // Ack relaying only matters when the acked origin may be out of direct
    // range; in one-hop-complete topologies it is pure medium noise.
    if (!self_on_path && !drop_forwarding_ && !cfg_.overhear_suppression) {
      auto& rec2 = rrb_[key];
      if (rec2.forwards < 1) {  // acks fan out once per node
        ++rec2.forwards;
        forward_queue_.push_back({msg.origin, msg.origin_seq, visited, forward_due()});
      }
    }
    return;
  }

  RrbRecord& rec = rrb_[key];
  if (rec.inner.empty()) rec.inner = env->payload;

  bool direct_from_origin = visited.size() == 1;
  bool known_path = false;
  if (!self_on_path) {
    known_path = std::find(rec.paths.begin(), rec.paths.end(), intermediates) != rec.paths.end();
    if (!known_path) {
      rec.paths.push_back(intermediates);
      rec.grow_families(intermediates);
    }
  }

  // Acknowledge the first copy; re-acknowledge direct retransmissions (rate
  // limited) so a lost ack does not keep the origin retransmitting forever.
  bool re_ack = direct_from_origin && known_path &&
                sim_.now() - rec.last_ack >= 16 * cfg_.comm_tick_ms;
  if (!rec.acked || re_ack) {
    rec.acked = true;
    rec.last_ack = sim_.now();
    enqueue_ack(msg.origin, msg.origin_seq);
  }

  if (!rec.delivered) {
    bool enough = rec.disjoint_lower_bound() >= budget_.f + 1;
    if (!enough && rec.paths.size() <= 12) enough = disjoint_path_count(rec.paths) >= budget_.f + 1;
    if (enough) {
      rec.delivered = true;
      ++metrics_.rrb_delivered;
      if (deliver_up) deliver_up(kind, msg.origin, Bytes(msg.payload.begin() + 1, msg.payload.end()), true);
    }
  }

  // Forwarding policy, a documented tunable. A copy is forwarded when its
  // path strictly refines an already-forwarded one, or when it is disjoint
  // from everything forwarded so far and the per-message cap allows it.
  // With every node in direct range, relaying the direct copy once already
  // gives each receiver a single-relay path; longer relays add nothing.
  if (self_on_path || known_path || drop_forwarding_) return;
  if (cfg_.overhear_suppression && !direct_from_origin) return;
  bool refines = false;
  for (auto& fwd : rec.forwarded) {
    if (fwd.size() > intermediates.size() && std::includes(fwd.begin(), fwd.end(), intermediates.begin(), intermediates.end())) {
      fwd = intermediates;
      refines = true;
      break;
    }
  }
  bool fresh = !refines;
  if (fresh) {
    for (const auto& fwd : rec.forwarded) {
      if (!sets_disjoint(fwd, intermediates)) {
        fresh = false;
        break;
      }
    }
  }
  if (refines || (fresh && rec.forwards < forward_cap())) {
    if (!refines) {
      rec.forwarded.push_back(intermediates);
      ++rec.forwards;
    }
    forward_queue_.push_back({msg.origin, msg.origin_seq, visited, forward_due()});
  }
}

SimTime CommLayer::forward_due() const {
  if (!cfg_.overhear_suppression || cfg_.forward_jitter_ms <= 0) return sim_.now();
  Rng& rng = const_cast<Simulator&>(sim_).node_rng(self_);
  return sim_.now() + static_cast<SimTime>(rng.below(static_cast<std::uint64_t>(cfg_.forward_jitter_ms) + 1));
}

void CommLayer::enqueue_ack(NodeId origin, std::uint64_t origin_seq) {
  ack_queue_.emplace_back(origin, origin_seq);
}

void CommLayer::on_timer_tick() { flush_sends(); }

void CommLayer::flush_sends() {
  // queued protocol sends
  while (!send_queue_.empty()) {
    auto [env, targets] = std::move(send_queue_.front());
    send_queue_.pop_front();
    MsgKind kind = env->kind();
    if (env->tag == ProtocolTag::Rrb) {
      auto inner = RrbMessage::decode(env->payload);
      kind = inner ? inner->kind() : MsgKind::RrbAck;
    }
    send_now(env, kind, targets.empty() ? nullptr : &targets);
  }

  // forwards, re-checked against overheard traffic once their hold-back
  // elapses
  for (std::size_t pending = forward_queue_.size(); pending > 0; --pending) {
    PendingForward fw = std::move(forward_queue_.front());
    forward_queue_.pop_front();
    if (fw.due > sim_.now()) {
      forward_queue_.push_back(std::move(fw));
      continue;
    }
    auto it = rrb_.find({fw.origin, fw.origin_seq});
    if (it == rrb_.end() || it->second.inner.empty()) continue;
    if (cfg_.overhear_suppression && it->second.relayed_lower_bound() >= budget_.f + 1) continue;
    std::vector<NodeId> visited = fw.visited;
    visited.push_back(self_);
    auto inner = RrbMessage::decode(it->second.inner);
    MsgKind kind = inner ? inner->kind() : MsgKind::RrbAck;
    ++metrics_.rrb_forwards;
    send_now(make_envelope(ProtocolTag::Rrb, it->second.inner, std::move(visited)), kind);
  }

  // batched acknowledgements
  if (!ack_queue_.empty()) {
    ByteWriter w;
    w.u16(static_cast<std::uint16_t>(ack_queue_.size()));
    for (auto [origin, seq] : ack_queue_) {
      w.u32(origin);
      w.u64(seq);
    }
    ack_queue_.clear();
    Bytes inner_payload;
    inner_payload.push_back(static_cast<std::uint8_t>(MsgKind::RrbAck));
    Bytes body = w.take();
    inner_payload.insert(inner_payload.end(), body.begin(), body.end());
    RrbMessage msg;
    msg.origin = self_;
    msg.origin_seq = rrb_seq_++;
    msg.payload = std::move(inner_payload);
    msg.origin_sig = keys_.sign(self_, msg.signed_part());
    send_now(make_envelope(ProtocolTag::Rrb, msg.encode(), {self_}), MsgKind::RrbAck);
  }

  // Retransmissions with exponential backoff. Each retransmission is a new
  // envelope (fresh seq) carrying the same origin-signed content, or the
  // receivers' duplicate suppression would swallow it.
  for (auto& [seq, rec] : own_) {
    if (rec.stop_when_empty && rec.pending.empty()) continue;
    if (sim_.now() < rec.next_retransmit) continue;
    ++retransmissions_;
    auto inner = RrbMessage::decode(rec.inner);
    send_now(make_envelope(ProtocolTag::Rrb, rec.inner, {self_}), inner ? inner->kind() : MsgKind::RrbAck);
    rec.backoff = std::min<SimTime>(rec.backoff * 2, cfg_.comm_tick_ms * cfg_.retransmit_backoff_cap);
    rec.next_retransmit = sim_.now() + rec.backoff;
  }
}

void CommLayer::send_now(const EnvelopePtr& env, MsgKind kind, const std::set<NodeId>* only) {
  metrics_.count_send(kind);
  sim_.broadcast(self_, env, only);
}

}  // namespace bftstack
