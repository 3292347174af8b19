#include "bftstack/consensus.hpp"

#include <algorithm>
#include <cassert>

namespace bftstack {

namespace {

void write_instance(ByteWriter& w, const InstanceId& id) {
  Bytes label(id.label.begin(), id.label.end());
  w.blob16(label);
  w.u8(static_cast<std::uint8_t>(id.protocol));
  w.u32(static_cast<std::uint32_t>(id.sub_round));
}

InstanceId read_instance(ByteReader& r) {
  InstanceId id;
  Bytes label = r.blob16();
  id.label.assign(label.begin(), label.end());
  id.protocol = static_cast<ProtocolTag>(r.u8());
  id.sub_round = static_cast<std::int32_t>(r.u32());
  return id;
}

/// Most common bit with ties resolved toward 1; values are 0/1 only.
std::uint8_t most_common_bit(int zeros, int ones) { return ones >= zeros ? 1 : 0; }

}  // namespace

// --------------------------------------------------------------------------
// codecs
// --------------------------------------------------------------------------

Bytes BinTuple::signed_payload(const InstanceId& id) const {
  ByteWriter w;
  w.u8('B');
  w.u8('T');
  write_instance(w, id);
  w.u32(sender);
  w.u32(round);
  w.u8(static_cast<std::uint8_t>(phase));
  w.u8(value);
  return w.take();
}

Bytes BinMsgBody::encode() const {
  ByteWriter w;
  write_instance(w, instance);
  w.u8(is_certificate ? 1 : 0);
  w.u32(tuple.sender);
  w.u32(tuple.round);
  w.u8(static_cast<std::uint8_t>(tuple.phase));
  w.u8(tuple.value);
  w.blob16(tuple.sig);
  w.u16(static_cast<std::uint16_t>(just.size()));
  for (const auto& t : just) {
    w.u32(t.sender);
    w.u32(t.round);
    w.u8(static_cast<std::uint8_t>(t.phase));
    w.u8(t.value);
    w.blob16(t.sig);
  }
  return w.take();
}

std::optional<BinMsgBody> BinMsgBody::decode(const Bytes& body) {
  try {
    ByteReader r(body);
    BinMsgBody m;
    m.instance = read_instance(r);
    m.is_certificate = r.u8() != 0;
    m.tuple.sender = r.u32();
    m.tuple.round = r.u32();
    m.tuple.phase = static_cast<BinPhase>(r.u8());
    m.tuple.value = r.u8();
    m.tuple.sig = r.blob16();
    std::uint16_t n = r.u16();
    m.just.reserve(n);
    for (std::uint16_t i = 0; i < n; ++i) {
      BinTuple t;
      t.sender = r.u32();
      t.round = r.u32();
      t.phase = static_cast<BinPhase>(r.u8());
      t.value = r.u8();
      t.sig = r.blob16();
      m.just.push_back(std::move(t));
    }
    if (!r.done()) return std::nullopt;
    return m;
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

Bytes MvValue::encode() const {
  ByteWriter w;
  w.u8(is_bot ? 0 : 1);
  if (!is_bot) w.blob32(bytes);
  return w.take();
}

MvValue MvValue::decode_prefixed(ByteReader& r) {
  MvValue v;
  v.is_bot = r.u8() == 0;
  if (!v.is_bot) v.bytes = r.blob32();
  return v;
}

Bytes MvTuple::signed_payload(const InstanceId& id) const {
  ByteWriter w;
  w.u8('M');
  w.u8('T');
  write_instance(w, id);
  w.u32(sender);
  w.u8(phase);
  w.raw(value.encode());
  return w.take();
}

Bytes MvMsgBody::encode() const {
  ByteWriter w;
  write_instance(w, instance);
  w.u32(tuple.sender);
  w.u8(tuple.phase);
  w.raw(tuple.value.encode());
  w.blob16(tuple.sig);
  w.u16(static_cast<std::uint16_t>(just.size()));
  for (const auto& t : just) {
    w.u32(t.sender);
    w.u8(t.phase);
    w.raw(t.value.encode());
    w.blob16(t.sig);
  }
  return w.take();
}

std::optional<MvMsgBody> MvMsgBody::decode(const Bytes& body) {
  try {
    ByteReader r(body);
    MvMsgBody m;
    m.instance = read_instance(r);
    m.tuple.sender = r.u32();
    m.tuple.phase = r.u8();
    m.tuple.value = MvValue::decode_prefixed(r);
    m.tuple.sig = r.blob16();
    std::uint16_t n = r.u16();
    m.just.reserve(n);
    for (std::uint16_t i = 0; i < n; ++i) {
      MvTuple t;
      t.sender = r.u32();
      t.phase = r.u8();
      t.value = MvValue::decode_prefixed(r);
      t.sig = r.blob16();
      m.just.push_back(std::move(t));
    }
    if (!r.done()) return std::nullopt;
    return m;
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

Bytes vec_entry_signed_payload(const InstanceId& vid, NodeId column, const Bytes& value) {
  ByteWriter w;
  w.u8('V');
  w.u8('E');
  write_instance(w, vid);
  w.u32(column);
  w.blob32(value);
  return w.take();
}

Bytes encode_row(const std::vector<VecEntry>& row) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(row.size()));
  for (const auto& e : row) {
    w.u8(e.present ? 1 : 0);
    if (e.present) {
      w.blob32(e.value);
      w.blob16(e.sig);
    }
  }
  return w.take();
}

std::optional<std::vector<VecEntry>> decode_row(const Bytes& data) {
  try {
    ByteReader r(data);
    std::uint16_t n = r.u16();
    std::vector<VecEntry> row(n);
    for (std::uint16_t i = 0; i < n; ++i) {
      row[i].present = r.u8() != 0;
      if (row[i].present) {
        row[i].value = r.blob32();
        row[i].sig = r.blob16();
      }
    }
    if (!r.done()) return std::nullopt;
    return row;
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

Bytes VecRowBody::encode() const {
  ByteWriter w;
  write_instance(w, instance);
  w.u32(sender);
  w.raw(encode_row(row));
  return w.take();
}

std::optional<VecRowBody> VecRowBody::decode(const Bytes& body) {
  try {
    ByteReader r(body);
    VecRowBody m;
    m.instance = read_instance(r);
    m.sender = r.u32();
    std::uint16_t n = r.u16();
    m.row.resize(n);
    for (std::uint16_t i = 0; i < n; ++i) {
      m.row[i].present = r.u8() != 0;
      if (m.row[i].present) {
        m.row[i].value = r.blob32();
        m.row[i].sig = r.blob16();
      }
    }
    if (!r.done()) return std::nullopt;
    return m;
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

Bytes decision_signed_payload(const InstanceId& id, const Bytes& value) {
  ByteWriter w;
  w.u8('D');
  w.u8('C');
  write_instance(w, id);
  w.blob32(value);
  return w.take();
}

Bytes DecisionBody::encode() const {
  ByteWriter w;
  write_instance(w, instance);
  w.u32(sender);
  w.blob32(value);
  w.blob16(sig);
  return w.take();
}

std::optional<DecisionBody> DecisionBody::decode(const Bytes& body) {
  try {
    ByteReader r(body);
    DecisionBody d;
    d.instance = read_instance(r);
    d.sender = r.u32();
    d.value = r.blob32();
    d.sig = r.blob16();
    if (!r.done()) return std::nullopt;
    return d;
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

// --------------------------------------------------------------------------
// multivalued justification rules
// --------------------------------------------------------------------------

JustVerdict validate_justification(const MvMsgBody& msg, const FaultBudget& budget, const KeyDirectory& keys) {
  const int q = budget.quorum();
  const MvTuple& t = msg.tuple;
  if (t.phase > 2) return JustVerdict::BadShape;
  if (t.phase != 2 && t.value.is_bot) return JustVerdict::BadShape;

  auto inner_ok = [&](const MvTuple& in, std::uint8_t expected_phase) {
    if (in.phase != expected_phase) return false;
    return keys.verify(in.sender, in.signed_payload(msg.instance), in.sig);
  };
  auto distinct = [&](const std::vector<MvTuple>& ts) {
    std::set<NodeId> s;
    for (const auto& x : ts) s.insert(x.sender);
    return s.size() == ts.size();
  };

  switch (t.phase) {
    case 0:
      return msg.just.empty() ? JustVerdict::Valid : JustVerdict::BadShape;
    case 1: {
      if (msg.just.size() == 1) {
        // kept own proposal: the justification is the sender's phase-0 message
        const MvTuple& own = msg.just[0];
        if (own.sender != t.sender || own.value != t.value) return JustVerdict::BadRule;
        if (!inner_ok(own, 0)) return JustVerdict::BadSignature;
        return JustVerdict::Valid;
      }
      if (static_cast<int>(msg.just.size()) < q) return JustVerdict::BadShape;
      if (!distinct(msg.just)) return JustVerdict::BadShape;
      int carrying = 0;
      for (const auto& in : msg.just) {
        if (!inner_ok(in, 0)) return JustVerdict::BadSignature;
        if (in.value == t.value) ++carrying;
      }
      return carrying > budget.f ? JustVerdict::Valid : JustVerdict::BadRule;
    }
    case 2: {
      if (t.value.is_bot) return JustVerdict::BadRule;  // bot needs no phase-2 proof and gets none
      if (static_cast<int>(msg.just.size()) < q) return JustVerdict::BadShape;
      if (!distinct(msg.just)) return JustVerdict::BadShape;
      for (const auto& in : msg.just) {
        if (in.value != t.value) return JustVerdict::BadRule;
        if (!inner_ok(in, 1)) return JustVerdict::BadSignature;
      }
      return JustVerdict::Valid;
    }
    default:
      return JustVerdict::BadShape;
  }
}

// --------------------------------------------------------------------------
// binary instance
// --------------------------------------------------------------------------

struct ConsensusService::BinInstance {
  ConsensusService& svc;
  InstanceId id;
  FaultBudget budget;
  std::vector<NodeId> group;
  bool top_level = true;

  std::uint32_t round = 1;
  BinPhase phase = BinPhase::Converge;
  std::uint8_t value = 0;
  bool proposed = false;
  std::optional<std::uint8_t> decided;
  int decided_round = -1;

  std::map<std::pair<std::uint32_t, std::uint8_t>, std::map<NodeId, BinTuple>> store;
  BinMsgBody current;
  bool have_current = false;
  std::function<void(std::uint8_t)> on_decided;  // embedded use

  static constexpr std::uint32_t kRoundWindow = 64;

  BinInstance(ConsensusService& s, InstanceId i, FaultBudget b, std::vector<NodeId> g)
      : svc(s), id(std::move(i)), budget(b), group(std::move(g)) {}

  bool in_group(NodeId n) const { return std::binary_search(group.begin(), group.end(), n); }
  int quorum() const { return budget.quorum(); }

  void propose(std::uint8_t bit) {
    proposed = true;
    value = bit;
    emit({});
  }

  void emit(std::vector<BinTuple> just) {
    BinMsgBody m;
    m.instance = id;
    m.is_certificate = false;
    m.tuple = BinTuple{svc.self_, round, phase, value, {}};
    m.tuple.sig = svc.keys_.sign(svc.self_, m.tuple.signed_payload(id));
    m.just = std::move(just);
    store[{round, static_cast<std::uint8_t>(phase)}].emplace(svc.self_, m.tuple);
    current = m;
    have_current = true;
    svc.send(MsgKind::BinMsg, m.encode());
  }

  void emit_certificate(std::uint8_t w, std::uint32_t r, std::vector<BinTuple> just) {
    BinMsgBody m;
    m.instance = id;
    m.is_certificate = true;
    m.tuple = BinTuple{svc.self_, r, BinPhase::Decide, w, {}};
    m.tuple.sig = svc.keys_.sign(svc.self_, m.tuple.signed_payload(id));
    m.just = std::move(just);
    current = m;
    have_current = true;
    svc.send(MsgKind::BinMsg, m.encode());
  }

  std::vector<BinTuple> just_from(const std::map<NodeId, BinTuple>& m) const {
    std::vector<BinTuple> out;
    out.reserve(m.size());
    for (const auto& [s, t] : m) out.push_back(t);
    return out;
  }

  /// Justification check; self-contained, so messages from any round are
  /// verifiable on arrival.
  bool validate(const BinMsgBody& m) const {
    const BinTuple& t = m.tuple;
    if (!in_group(t.sender)) return false;
    if (t.round < 1) return false;
    if (!svc.keys_.verify(t.sender, t.signed_payload(id), t.sig)) return false;

    const int q = quorum();
    auto inner_all = [&](std::uint32_t r, BinPhase ph, std::uint8_t max_value) {
      std::set<NodeId> seen;
      for (const auto& in : m.just) {
        if (in.round != r || in.phase != ph) return false;
        if (!in_group(in.sender) || !seen.insert(in.sender).second) return false;
        if (in.value > max_value) return false;
        if (!svc.keys_.verify(in.sender, in.signed_payload(id), in.sig)) return false;
      }
      return static_cast<int>(seen.size()) >= q;
    };
    auto count_value = [&](std::uint8_t v) {
      int c = 0;
      for (const auto& in : m.just)
        if (in.value == v) ++c;
      return c;
    };

    if (m.is_certificate) {
      if (t.value > 1) return false;
      if (!inner_all(t.round, BinPhase::Decide, kBot)) return false;
      return count_value(t.value) >= q;
    }

    switch (t.phase) {
      case BinPhase::Converge: {
        if (t.value > 1) return false;
        if (t.round == 1) return m.just.empty();
        if (!inner_all(t.round - 1, BinPhase::Decide, kBot)) return false;
        // a non-bot value in the previous DECIDE quorum must be adopted
        bool has0 = count_value(0) > 0, has1 = count_value(1) > 0;
        if (has0 || has1) return (t.value == 0 && has0) || (t.value == 1 && has1);
        return true;  // all bot: free (coin) choice
      }
      case BinPhase::Lock: {
        if (t.value > 1) return false;
        if (!inner_all(t.round, BinPhase::Converge, 1)) return false;
        return most_common_bit(count_value(0), count_value(1)) == t.value;
      }
      case BinPhase::Decide: {
        if (t.value > kBot) return false;
        if (!inner_all(t.round, BinPhase::Lock, 1)) return false;
        int c0 = count_value(0), c1 = count_value(1);
        if (t.value == kBot) return c0 < quorum() && c1 < quorum();
        return count_value(t.value) >= quorum();
      }
    }
    return false;
  }

  void on_message(const BinMsgBody& m) {
    if (!proposed) {
      // participation starts at propose; hold early traffic for the quorums
      auto key = std::make_pair(m.tuple.round, static_cast<std::uint8_t>(m.tuple.phase));
      if (!m.is_certificate && !store[key].count(m.tuple.sender) && validate(m))
        store[key].emplace(m.tuple.sender, m.tuple);
      return;
    }
    if (decided) return;
    if (!m.is_certificate && m.tuple.round + 1 < round) return;               // stale
    if (!m.is_certificate && m.tuple.round > round + kRoundWindow) return;    // absurd future
    if (!m.is_certificate &&
        store[{m.tuple.round, static_cast<std::uint8_t>(m.tuple.phase)}].count(m.tuple.sender))
      return;  // rebroadcast of an already-stored tuple
    if (!validate(m)) {
      ++svc.metrics_.rejected_unjustified;
      return;
    }
    if (m.is_certificate) {
      decide(m.tuple.value, m.tuple.round, m.just);
      return;
    }
    store[{m.tuple.round, static_cast<std::uint8_t>(m.tuple.phase)}].emplace(m.tuple.sender, m.tuple);

    // A decision quorum is a decision quorum in any round, including ones
    // this process already moved past.
    if (m.tuple.phase == BinPhase::Decide) {
      auto& decided_store = store[{m.tuple.round, static_cast<std::uint8_t>(BinPhase::Decide)}];
      int c0 = 0, c1 = 0;
      for (const auto& [s, t] : decided_store) {
        if (t.value == 0) ++c0;
        else if (t.value == 1) ++c1;
      }
      if (c0 >= quorum() || c1 >= quorum()) {
        decide(c0 >= quorum() ? 0 : 1, m.tuple.round, just_from(decided_store));
        return;
      }
    }

    // A valid message from a later protocol position carries its own
    // evidence; adopt it instead of waiting for phases nobody re-sends.
    auto pos = std::make_pair(m.tuple.round, static_cast<std::uint8_t>(m.tuple.phase));
    auto mine = std::make_pair(round, static_cast<std::uint8_t>(phase));
    if (pos > mine) {
      round = m.tuple.round;
      phase = m.tuple.phase;
      value = m.tuple.value;
      emit(m.just);
    }
  }

  // Phase transitions run on the consensus timer, not per message: by the
  // tick after a quorum formed, the whole broadcast burst of the phase has
  // usually arrived, so different nodes work from nearly the same sample.
  // Decisions themselves are recognized immediately in on_message.
  bool maybe_transition() {
    if (proposed && !decided) {
      auto it = store.find({round, static_cast<std::uint8_t>(phase)});
      if (it == store.end() || static_cast<int>(it->second.size()) < quorum()) return false;
      const auto tuples = it->second;  // copy: emit() mutates store
      int c0 = 0, c1 = 0, cb = 0;
      for (const auto& [s, t] : tuples) {
        if (t.value == 0) ++c0;
        else if (t.value == 1) ++c1;
        else ++cb;
      }
      switch (phase) {
        case BinPhase::Converge:
          value = most_common_bit(c0, c1);
          phase = BinPhase::Lock;
          emit(just_from(tuples));
          return true;
        case BinPhase::Lock:
          value = c0 >= quorum() ? 0 : c1 >= quorum() ? 1 : kBot;
          phase = BinPhase::Decide;
          emit(just_from(tuples));
          return true;
        case BinPhase::Decide: {
          if (c0 >= quorum() || c1 >= quorum()) {
            decide(c0 >= quorum() ? 0 : 1, round, just_from(tuples));
            return true;
          }
          // Validation pins every non-bot DECIDE value of a round to the one
          // lockable value, so adopting a single sighting is safe; adopting
          // nothing less keeps agreement across the decide boundary.
          if (c0 > 0) value = 0;
          else if (c1 > 0) value = 1;
          else value = svc.sim_.node_rng(svc.self_).coin() ? 1 : 0;
          ++round;
          phase = BinPhase::Converge;
          emit(just_from(tuples));
          return true;
        }
      }
    }
    return false;
  }

  void decide(std::uint8_t w, std::uint32_t r, std::vector<BinTuple> cert_just) {
    if (decided) return;
    decided = w;
    decided_round = static_cast<int>(r);
    emit_certificate(w, r, std::move(cert_just));
    svc.bin_rounds_[id] = decided_round;
    if (svc.trace_) svc.trace_->emit({svc.sim_.now(), svc.self_, TraceKind::BinDecideCert, id.str(), 0, decided_round, {w}});
    if (on_decided) on_decided(w);
    if (top_level) svc.record_decide(id, Bytes{w}, decided_round);
  }

  std::uint32_t ticks = 0;
  void tick() {
    ++ticks;
    if (maybe_transition()) return;  // the transition broadcast just went out
    if (decided && ticks % 8 != 0) return;  // decided state only needs keepalive pace
    if (have_current) svc.send(MsgKind::BinMsg, current.encode());
  }
};

// --------------------------------------------------------------------------
// multivalued instance
// --------------------------------------------------------------------------

struct ConsensusService::MvInstance {
  ConsensusService& svc;
  InstanceId id;
  FaultBudget budget;
  std::vector<NodeId> group;
  bool top_level = true;

  std::uint8_t phase = 0;
  MvValue value;
  MvValue own_phase0;
  bool proposed = false;
  std::optional<MvValue> decided;
  SimTime phase1_entered = -1;
  bool launched_bin = false;
  bool waiting_phase2 = false;

  std::map<std::uint8_t, std::map<NodeId, MvTuple>> store;
  std::map<NodeId, std::vector<MvTuple>> phase2_js;  // sender -> its phase-2 justification
  std::vector<MvTuple> crossing_just;
  MvMsgBody current;
  bool have_current = false;
  std::function<void(const MvValue&)> on_decided;  // embedded use

  MvInstance(ConsensusService& s, InstanceId i, FaultBudget b, std::vector<NodeId> g)
      : svc(s), id(std::move(i)), budget(b), group(std::move(g)) {}

  bool in_group(NodeId n) const { return std::binary_search(group.begin(), group.end(), n); }
  int quorum() const { return budget.quorum(); }

  void propose(Bytes v) {
    proposed = true;
    own_phase0 = MvValue::of(std::move(v));
    value = own_phase0;
    emit({});
    check_transitions();
  }

  void emit(std::vector<MvTuple> just) {
    MvMsgBody m;
    m.instance = id;
    m.tuple = MvTuple{svc.self_, phase, value, {}};
    m.tuple.sig = svc.keys_.sign(svc.self_, m.tuple.signed_payload(id));
    m.just = std::move(just);
    if (phase != 2 || !value.is_bot) {
      store[phase].emplace(svc.self_, m.tuple);
      current = m;
      have_current = true;
      svc.send(MsgKind::MvMsg, m.encode());
    }
    // a bot decision needs no phase-2 proof; peers decide bot via the
    // embedded binary consensus on their own
  }

  void on_message(const MvMsgBody& m, const Bytes& raw) {
    const MvTuple& t = m.tuple;
    if (!in_group(t.sender)) {
      ++svc.metrics_.rejected_unjustified;
      return;
    }
    if (t.phase <= 2 && store[t.phase].count(t.sender)) return;  // rebroadcast
    if (!svc.keys_.verify(t.sender, t.signed_payload(id), t.sig) ||
        t.value.bytes.size() > svc.cfg_.max_proposal_bytes ||
        validate_justification(m, budget, svc.keys_) != JustVerdict::Valid) {
      ++svc.metrics_.rejected_unjustified;
      if (svc.trace_) svc.trace_->emit({svc.sim_.now(), svc.self_, TraceKind::MvReject, id.str(), t.sender, t.phase, raw});
      return;
    }
    bool fresh = store[t.phase].emplace(t.sender, t).second;
    if (!fresh) return;
    if (svc.trace_) svc.trace_->emit({svc.sim_.now(), svc.self_, TraceKind::MvAccept, id.str(), t.sender, t.phase, raw});
    if (t.phase == 2) phase2_js[t.sender] = m.just;
    check_transitions();
  }

  void check_transitions() {
    if (!proposed || decided) return;

    if (phase == 0 && static_cast<int>(store[0].size()) >= quorum()) {
      // majority value of the phase-0 quorum; adopted when more than f
      // senders carried it (at least one of them correct)
      std::map<MvValue, int> counts;
      for (const auto& [s, t] : store[0]) ++counts[t.value];
      auto maj = counts.begin();
      for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > maj->second) maj = it;
      std::vector<MvTuple> just;
      if (maj->second > budget.f && !(maj->first == own_phase0)) {
        value = maj->first;
        for (const auto& [s, t] : store[0]) just.push_back(t);
      } else {
        if (maj->second > budget.f) value = maj->first;  // own proposal was the majority
        auto self_it = store[0].find(svc.self_);
        just.push_back(self_it->second);
      }
      phase = 1;
      phase1_entered = svc.sim_.now();
      emit(std::move(just));
    }

    if (phase == 1 && !launched_bin) {
      std::map<MvValue, int> counts;
      for (const auto& [s, t] : store[1]) ++counts[t.value];
      const MvValue* crossed = nullptr;
      int max_count = 0;
      for (const auto& [v, c] : counts) {
        max_count = std::max(max_count, c);
        if (c >= quorum()) crossed = &v;
      }
      const int present = static_cast<int>(store[1].size());
      if (crossed) {
        value = *crossed;
        crossing_just.clear();
        for (const auto& [s, t] : store[1])
          if (t.value == *crossed) crossing_just.push_back(t);
        launch_binary(1);
      } else if (present >= budget.n - budget.f) {
        // the bot branch fires once no value can still reach the quorum, or
        // after a settling window in case withheld messages never come
        bool exhausted = max_count + (budget.n - present) < quorum();
        bool timed_out = svc.sim_.now() - phase1_entered >= svc.cfg_.mv_bot_fallback_ms;
        if (exhausted || timed_out) {
          value = MvValue::bot();
          launch_binary(0);
        }
      }
    }

    if (waiting_phase2) adopt_phase2();
  }

  void launch_binary(std::uint8_t propose_bit) {
    launched_bin = true;
    InstanceId bid = id.with(ProtocolTag::Bin, id.sub_round);
    BinInstance* bin = svc.bin_instance(bid, true);
    bin->top_level = false;
    bin->on_decided = [this](std::uint8_t result) { on_binary_result(result); };
    bin->propose(propose_bit);
  }

  void on_binary_result(std::uint8_t result) {
    if (decided) return;
    if (result == 0) {
      decide(MvValue::bot(), {});
      return;
    }
    if (!value.is_bot) {
      phase = 2;
      decide(value, crossing_just);
      return;
    }
    // blocked: wait for a justified phase-2 value from a process that crossed
    waiting_phase2 = true;
    adopt_phase2();
  }

  void adopt_phase2() {
    for (const auto& [sender, t] : store[2]) {
      if (t.value.is_bot) continue;
      waiting_phase2 = false;
      phase = 2;
      decide(t.value, phase2_js[sender]);
      return;
    }
  }

  void decide(MvValue v, std::vector<MvTuple> just) {
    decided = v;
    if (phase == 2 && !v.is_bot) {
      value = v;
      emit(std::move(just));  // keep broadcasting so blocked peers terminate
    }
    phase = 2;
    if (on_decided) on_decided(v);
    if (top_level) {
      ByteWriter w;
      w.raw(v.encode());
      svc.record_decide(id, w.take(), -1);
    }
  }

  std::uint32_t ticks = 0;
  void tick() {
    // State updates broadcast immediately and the comm layer retransmits
    // unacknowledged copies, so the periodic rebroadcast is a slow safety
    // net, not the delivery mechanism.
    ++ticks;
    bool due = decided ? ticks % 16 == 0 : ticks % 8 == 0;
    if (have_current && due) svc.send(MsgKind::MvMsg, current.encode());
    check_transitions();  // phase-1 fallback is time-gated
  }
};

// --------------------------------------------------------------------------
// vector instance
// --------------------------------------------------------------------------

struct ConsensusService::VecInstance {
  ConsensusService& svc;
  InstanceId id;
  FaultBudget budget;
  std::vector<NodeId> group;

  std::vector<VecEntry> own_row;
  std::map<NodeId, std::vector<VecEntry>> rows;
  bool proposed = false;
  int col_self = -1;
  int round = 0;
  bool mv_running = false;
  std::optional<Bytes> decided_row;

  VecInstance(ConsensusService& s, InstanceId i, FaultBudget b, std::vector<NodeId> g)
      : svc(s), id(std::move(i)), budget(b), group(std::move(g)) {
    own_row.resize(group.size());
  }

  int column_of(NodeId n) const {
    auto it = std::lower_bound(group.begin(), group.end(), n);
    if (it == group.end() || *it != n) return -1;
    return static_cast<int>(it - group.begin());
  }
  int row_count(const std::vector<VecEntry>& row) const {
    int c = 0;
    for (const auto& e : row)
      if (e.present) ++c;
    return c;
  }

  void propose(Bytes v) {
    proposed = true;
    col_self = column_of(svc.self_);
    VecEntry e;
    e.present = true;
    e.value = std::move(v);
    e.sig = svc.keys_.sign(svc.self_, vec_entry_signed_payload(id, svc.self_, e.value));
    own_row[col_self] = std::move(e);
    emit_row();
    maybe_round();
  }

  void emit_row() {
    VecRowBody m;
    m.instance = id;
    m.sender = svc.self_;
    m.row = own_row;
    svc.send(MsgKind::VecRow, m.encode());
  }

  void on_message(const VecRowBody& m) {
    int col_sender = column_of(m.sender);
    if (col_sender < 0 || m.row.size() != group.size()) {
      ++svc.metrics_.rejected_malformed;
      return;
    }
    int count = 0;
    for (std::size_t k = 0; k < m.row.size(); ++k) {
      const VecEntry& e = m.row[k];
      if (!e.present) continue;
      if (e.value.size() > svc.cfg_.max_proposal_bytes ||
          !svc.keys_.verify(group[k], vec_entry_signed_payload(id, group[k], e.value), e.sig)) {
        ++svc.metrics_.rejected_bad_sig;
        return;  // one bad signature discards the whole message
      }
      ++count;
    }
    if (count == 2 * budget.f + 1) rows.emplace(m.sender, m.row);  // first row wins
    if (proposed) {
      if (row_count(own_row) < 2 * budget.f + 1) {
        const VecEntry& theirs = m.row[col_sender];
        if (theirs.present && !own_row[col_sender].present) {
          own_row[col_sender] = theirs;
          emit_row();
        }
      }
      maybe_round();
    }
  }

  void maybe_round() {
    if (!proposed || decided_row || mv_running) return;
    if (round >= svc.cfg_.vec_max_rounds) return;
    const int want = 2 * budget.f + 1;
    const int n = static_cast<int>(group.size());
    const std::vector<VecEntry>* chosen = nullptr;
    for (int idx = 0; idx < n; ++idx) {
      int j = (round + idx) % n;
      const std::vector<VecEntry>* cand = nullptr;
      if (j == col_self) {
        if (row_count(own_row) == want) cand = &own_row;
      } else if (auto it = rows.find(group[j]); it != rows.end()) {
        cand = &it->second;
      }
      if (cand && row_count(*cand) == want) {
        chosen = cand;
        break;
      }
    }
    if (!chosen) return;
    mv_running = true;
    InstanceId mid = id.with(ProtocolTag::Mv, round);
    MvInstance* mv = svc.mv_instance(mid, true);
    mv->top_level = false;
    mv->on_decided = [this](const MvValue& v) { on_mv_result(v); };
    mv->propose(encode_row(*chosen));
  }

  void on_mv_result(const MvValue& v) {
    mv_running = false;
    if (decided_row) return;
    if (!v.is_bot) {
      decided_row = v.bytes;
      if (svc.trace_) svc.trace_->emit({svc.sim_.now(), svc.self_, TraceKind::VecDecide, id.str(), 0, round, v.bytes});
      svc.record_decide(id, v.bytes, -1);
      return;
    }
    ++round;
    maybe_round();
  }

  std::uint32_t ticks = 0;
  void tick() {
    ++ticks;
    if (!proposed) return;
    bool due = decided_row ? ticks % 16 == 0 : ticks % 8 == 0;
    if (due) emit_row();  // slow keepalive; row updates broadcast immediately
    if (!decided_row) maybe_round();
  }
};

// --------------------------------------------------------------------------
// service
// --------------------------------------------------------------------------

ConsensusService::ConsensusService(NodeId self, const KeyDirectory& keys, Simulator& sim, CommLayer& comm,
                                   ConsensusConfig cfg, ResultCache& cache, InstanceRegistry& registry,
                                   NodeMetrics& metrics, TraceLog* trace)
    : self_(self),
      keys_(keys),
      sim_(sim),
      comm_(comm),
      cfg_(cfg),
      cache_(cache),
      registry_(registry),
      metrics_(metrics),
      trace_(trace) {}

ConsensusService::~ConsensusService() = default;

void ConsensusService::start() { sim_.set_timer(self_, cfg_.tick_ms, true, kTimerTag); }

void ConsensusService::configure_group(std::vector<NodeId> group, FaultBudget budget) {
  std::sort(group.begin(), group.end());
  group_ = std::move(group);
  budget_ = budget;
}

bool ConsensusService::in_group() const {
  return std::binary_search(group_.begin(), group_.end(), self_);
}

void ConsensusService::send(MsgKind kind, const Bytes& body) {
  if (send_filter_) {
    for (auto& out : send_filter_(kind, body)) {
      if (trace_) trace_->emit({sim_.now(), self_, TraceKind::AdversaryEmit, "", 0, static_cast<std::int64_t>(out.kind), out.body});
      if (out.forge_identity) {
        comm_.beb_broadcast_forged(out.kind, out.body, out.claimed_sender);
        continue;
      }
      bool rrb = out.kind != MsgKind::BinMsg;
      if (out.targets) {
        if (rrb) comm_.rrb_broadcast_to(out.kind, out.body, *out.targets);
        else comm_.beb_broadcast_to(out.kind, out.body, *out.targets);
      } else {
        if (rrb) comm_.rrb_broadcast(out.kind, out.body);
        else comm_.beb_broadcast(out.kind, out.body);
      }
    }
    return;
  }
  // binary consensus runs over one-hop broadcast inside the (fully
  // connected) group; the other layers travel reachable-reliable
  if (kind == MsgKind::BinMsg) comm_.beb_broadcast(kind, body);
  else comm_.rrb_broadcast(kind, body);
}

ConsensusService::BinInstance* ConsensusService::bin_instance(const InstanceId& id, bool create) {
  auto it = bins_.find(id);
  if (it != bins_.end()) return it->second.get();
  if (!create) return nullptr;
  if (group_.empty() || !in_group()) return nullptr;
  registry_.register_instance(id);
  auto inst = std::make_unique<BinInstance>(*this, id, budget_, group_);
  auto* p = inst.get();
  bins_.emplace(id, std::move(inst));
  return p;
}

ConsensusService::MvInstance* ConsensusService::mv_instance(const InstanceId& id, bool create) {
  auto it = mvs_.find(id);
  if (it != mvs_.end()) return it->second.get();
  if (!create) return nullptr;
  if (group_.empty() || !in_group()) return nullptr;
  registry_.register_instance(id);
  auto inst = std::make_unique<MvInstance>(*this, id, budget_, group_);
  auto* p = inst.get();
  mvs_.emplace(id, std::move(inst));
  return p;
}

ConsensusService::VecInstance* ConsensusService::vec_instance(const InstanceId& id, bool create) {
  auto it = vecs_.find(id);
  if (it != vecs_.end()) return it->second.get();
  if (!create) return nullptr;
  if (group_.empty() || !in_group()) return nullptr;
  registry_.register_instance(id);
  auto inst = std::make_unique<VecInstance>(*this, id, budget_, group_);
  auto* p = inst.get();
  vecs_.emplace(id, std::move(inst));
  return p;
}

void ConsensusService::propose_binary(const InstanceId& id, std::uint8_t bit) {
  if (bit > 1) throw std::invalid_argument("binary proposal must be 0 or 1");
  if (!in_group()) throw std::logic_error("node is not in the consensus group");
  BinInstance* b = bin_instance(id, true);
  if (!b || b->proposed) throw std::invalid_argument("instance already started: " + id.str());
  if (trace_) trace_->emit({sim_.now(), self_, TraceKind::Propose, id.str(), 0, 0, {bit}});
  b->propose(bit);
}

void ConsensusService::propose_multivalued(const InstanceId& id, Bytes value) {
  if (value.size() > cfg_.max_proposal_bytes) throw std::invalid_argument("proposal too large");
  if (!in_group()) throw std::logic_error("node is not in the consensus group");
  MvInstance* m = mv_instance(id, true);
  if (!m || m->proposed) throw std::invalid_argument("instance already started: " + id.str());
  if (trace_) trace_->emit({sim_.now(), self_, TraceKind::Propose, id.str(), 0, 0, value});
  m->propose(std::move(value));
}

void ConsensusService::propose_vector(const InstanceId& id, Bytes value) {
  if (value.size() > cfg_.max_proposal_bytes) throw std::invalid_argument("proposal too large");
  if (!in_group()) throw std::logic_error("node is not in the consensus group");
  VecInstance* v = vec_instance(id, true);
  if (!v || v->proposed) throw std::invalid_argument("instance already started: " + id.str());
  if (trace_) trace_->emit({sim_.now(), self_, TraceKind::Propose, id.str(), 0, 0, value});
  v->propose(std::move(value));
}

std::optional<Bytes> ConsensusService::decided(const InstanceId& id) const {
  return cache_.get(id);
}

std::optional<int> ConsensusService::binary_rounds(const InstanceId& id) const {
  auto it = bin_rounds_.find(id);
  if (it == bin_rounds_.end()) return std::nullopt;
  return it->second;
}

std::optional<SimTime> ConsensusService::decide_time(const InstanceId& id) const {
  auto it = decide_times_.find(id);
  if (it == decide_times_.end()) return std::nullopt;
  return it->second;
}

void ConsensusService::record_decide(const InstanceId& id, const Bytes& canonical, int rounds) {
  if (decide_times_.count(id)) return;
  decide_times_[id] = sim_.now();
  cache_.put(id, canonical, sim_.now());
  if (trace_) trace_->emit({sim_.now(), self_, TraceKind::Decide, id.str(), 0, rounds, canonical});
  if (on_decide) on_decide(id, canonical, sim_.now());
  disseminate(id, canonical);
}

void ConsensusService::disseminate(const InstanceId& id, const Bytes& canonical) {
  DecisionBody d;
  d.instance = id;
  d.sender = self_;
  d.value = canonical;
  d.sig = keys_.sign(self_, decision_signed_payload(id, canonical));
  auto& st = decisions_[id];
  if (st.sigs.empty()) st.value = canonical;
  if (st.value == canonical) st.sigs.emplace(self_, d.sig);
  send(MsgKind::Decision, d.encode());
}

void ConsensusService::handle_decision(NodeId from, const Bytes& body) {
  auto d = DecisionBody::decode(body);
  if (!d || d->sender != from) {
    ++metrics_.rejected_malformed;
    return;
  }
  if (!keys_.verify(d->sender, decision_signed_payload(d->instance, d->value), d->sig)) {
    ++metrics_.rejected_bad_sig;
    return;
  }
  auto& st = decisions_[d->instance];
  if (st.sigs.empty()) st.value = d->value;
  if (st.value != d->value) return;  // conflicting claim, ignore the minority
  st.sigs.emplace(d->sender, d->sig);
  // f+1 matching signers: at least one is correct
  if (!st.accepted && static_cast<int>(st.sigs.size()) >= budget_.f + 1 && !decide_times_.count(d->instance)) {
    st.accepted = true;
    cache_.put(d->instance, st.value, sim_.now());
    if (trace_) trace_->emit({sim_.now(), self_, TraceKind::ResultAccept, d->instance.str(), from, 0, st.value});
  }
}

void ConsensusService::query_result(const InstanceId& id) {
  ByteWriter w;
  write_instance(w, id);
  comm_.beb_broadcast(MsgKind::ResultQuery, w.take());
}

void ConsensusService::handle_result_query(NodeId from, const Bytes& body) {
  if (from == self_) return;
  InstanceId id;
  try {
    ByteReader r(body);
    id = read_instance(r);
  } catch (const std::out_of_range&) {
    return;
  }
  auto cached = cache_.get(id);
  auto it = decisions_.find(id);
  if (!cached || it == decisions_.end()) return;
  if (static_cast<int>(it->second.sigs.size()) < budget_.f + 1) return;
  ByteWriter w;
  write_instance(w, id);
  w.blob32(*cached);
  w.u16(static_cast<std::uint16_t>(it->second.sigs.size()));
  for (const auto& [signer, sig] : it->second.sigs) {
    w.u32(signer);
    w.blob16(sig);
  }
  comm_.beb_broadcast(MsgKind::ResultReply, w.take());
}

void ConsensusService::handle_result_reply(NodeId from, const Bytes& body) {
  if (from == self_) return;
  try {
    ByteReader r(body);
    InstanceId id = read_instance(r);
    Bytes value = r.blob32();
    std::uint16_t n = r.u16();
    std::set<NodeId> signers;
    Bytes payload = decision_signed_payload(id, value);
    for (std::uint16_t i = 0; i < n; ++i) {
      NodeId signer = r.u32();
      Signature sig = r.blob16();
      if (keys_.verify(signer, payload, sig)) signers.insert(signer);
    }
    if (static_cast<int>(signers.size()) >= budget_.f + 1 && !cache_.get(id)) {
      cache_.put(id, value, sim_.now());
      if (trace_) trace_->emit({sim_.now(), self_, TraceKind::ResultAccept, id.str(), from, 1, value});
    }
  } catch (const std::out_of_range&) {
    ++metrics_.rejected_malformed;
  }
}

void ConsensusService::on_message(MsgKind kind, NodeId from, const Bytes& body, bool) {
  switch (kind) {
    case MsgKind::BinMsg: {
      if (from == self_) return;
      auto m = BinMsgBody::decode(body);
      if (!m || m->tuple.sender != from) {
        ++metrics_.rejected_malformed;
        return;
      }
      if (BinInstance* b = bin_instance(m->instance, true)) b->on_message(*m);
      break;
    }
    case MsgKind::MvMsg: {
      if (from == self_) return;
      auto m = MvMsgBody::decode(body);
      if (!m || m->tuple.sender != from) {
        ++metrics_.rejected_malformed;
        return;
      }
      if (MvInstance* mv = mv_instance(m->instance, true)) mv->on_message(*m, body);
      break;
    }
    case MsgKind::VecRow: {
      if (from == self_) return;
      auto m = VecRowBody::decode(body);
      if (!m || m->sender != from) {
        ++metrics_.rejected_malformed;
        return;
      }
      if (VecInstance* v = vec_instance(m->instance, true)) v->on_message(*m);
      break;
    }
    case MsgKind::Decision:
      if (from == self_) return;
      handle_decision(from, body);
      break;
    case MsgKind::ResultQuery:
      handle_result_query(from, body);
      break;
    case MsgKind::ResultReply:
      handle_result_reply(from, body);
      break;
    default:
      break;
  }
}

void ConsensusService::on_tick() {
  for (auto& [id, b] : bins_) b->tick();
  for (auto& [id, m] : mvs_) m->tick();
  for (auto& [id, v] : vecs_) v->tick();
}

}  // namespace bftstack
