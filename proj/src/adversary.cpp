#include "bftstack/adversary.hpp"

#include <stdexcept>

namespace bftstack {

const char* name_of(AdversaryBehavior b) {
  switch (b) {
    case AdversaryBehavior::None: return "none";
    case AdversaryBehavior::Silent: return "silent";
    case AdversaryBehavior::RandomValues: return "random_values";
    case AdversaryBehavior::WrongPhase: return "wrong_phase";
    case AdversaryBehavior::Equivocate: return "equivocate";
    case AdversaryBehavior::DropForwarding: return "drop_forwarding";
    case AdversaryBehavior::Mixed: return "mixed";
  }
  return "?";
}

AdversaryBehavior adversary_from_name(const std::string& name) {
  for (int i = 0; i <= 6; ++i) {
    auto b = static_cast<AdversaryBehavior>(i);
    if (name == name_of(b)) return b;
  }
  throw std::invalid_argument("unknown adversary behavior: " + name);
}

AdversaryBehavior behavior_for(const AdversarySpec& spec, int byzantine_index) {
  if (spec.behavior != AdversaryBehavior::Mixed) return spec.behavior;
  static const AdversaryBehavior cycle[] = {
      AdversaryBehavior::Silent, AdversaryBehavior::RandomValues, AdversaryBehavior::Equivocate,
      AdversaryBehavior::WrongPhase, AdversaryBehavior::DropForwarding};
  return cycle[byzantine_index % 5];
}

AdversaryEngine::AdversaryEngine(NodeId self, AdversaryBehavior behavior, std::uint64_t seed,
                                 const KeyDirectory& keys, int node_count)
    : self_(self),
      behavior_(behavior),
      keys_(keys),
      node_count_(node_count),
      rng_(derive_seed(seed, "adversary", self)) {}

Bytes AdversaryEngine::random_bytes(std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng_.below(256));
  return out;
}

std::set<NodeId> AdversaryEngine::half_targets(bool even) const {
  std::set<NodeId> out;
  for (int i = 0; i < node_count_; ++i) {
    NodeId id = static_cast<NodeId>(i);
    if (id == self_) continue;
    if ((id % 2 == 0) == even) out.insert(id);
  }
  return out;
}

std::vector<OutboundMessage> AdversaryEngine::transform(MsgKind kind, const Bytes& body) {
  ++counter_;
  bool consensus_kind = kind == MsgKind::BinMsg || kind == MsgKind::MvMsg || kind == MsgKind::VecRow ||
                        kind == MsgKind::Decision;
  if (!consensus_kind) return {{kind, body, std::nullopt, false, 0}};

  switch (behavior_) {
    case AdversaryBehavior::Silent:
      return {};
    case AdversaryBehavior::RandomValues:
      return random_values(kind, body);
    case AdversaryBehavior::WrongPhase:
      return wrong_phase(kind, body);
    case AdversaryBehavior::Equivocate:
      return equivocate(kind, body);
    case AdversaryBehavior::None:
    case AdversaryBehavior::DropForwarding:
    case AdversaryBehavior::Mixed:
      return {{kind, body, std::nullopt, false, 0}};
  }
  return {{kind, body, std::nullopt, false, 0}};
}

std::vector<OutboundMessage> AdversaryEngine::random_values(MsgKind kind, const Bytes& body) {
  std::vector<OutboundMessage> out;
  switch (kind) {
    case MsgKind::BinMsg: {
      auto m = BinMsgBody::decode(body);
      if (!m) return {};
      m->tuple.value = static_cast<std::uint8_t>(rng_.below(3));
      m->tuple.sig = keys_.sign(self_, m->tuple.signed_payload(m->instance));
      out.push_back({kind, m->encode(), std::nullopt, false, 0});
      break;
    }
    case MsgKind::MvMsg: {
      auto m = MvMsgBody::decode(body);
      if (!m) return {};
      m->tuple.value = MvValue::of(random_bytes(8));
      m->tuple.sig = keys_.sign(self_, m->tuple.signed_payload(m->instance));
      out.push_back({kind, m->encode(), std::nullopt, false, 0});
      break;
    }
    case MsgKind::VecRow: {
      auto m = VecRowBody::decode(body);
      if (!m) return {};
      // wrong values under other processes' columns: signatures cannot be
      // produced, so receivers are expected to discard the row
      for (auto& e : m->row) {
        if (!e.present) continue;
        e.value = random_bytes(8);
        e.sig = keys_.sign(self_, vec_entry_signed_payload(m->instance, self_, e.value));
      }
      out.push_back({kind, m->encode(), std::nullopt, false, 0});
      break;
    }
    case MsgKind::Decision: {
      auto d = DecisionBody::decode(body);
      if (!d) return {};
      d->value = random_bytes(8);
      d->sig = keys_.sign(self_, decision_signed_payload(d->instance, d->value));
      out.push_back({kind, d->encode(), std::nullopt, false, 0});
      break;
    }
    default:
      out.push_back({kind, body, std::nullopt, false, 0});
  }
  // identity fakery every few messages; inert against signature checks
  if (counter_ % 4 == 0 && node_count_ > 1) {
    NodeId victim = static_cast<NodeId>(rng_.below(node_count_));
    if (victim != self_) out.push_back({kind, body, std::nullopt, true, victim});
  }
  return out;
}

std::vector<OutboundMessage> AdversaryEngine::wrong_phase(MsgKind kind, const Bytes& body) {
  switch (kind) {
    case MsgKind::BinMsg: {
      auto m = BinMsgBody::decode(body);
      if (!m) return {};
      if (rng_.coin()) m->tuple.round += static_cast<std::uint32_t>(1 + rng_.below(3));
      else m->tuple.phase = static_cast<BinPhase>(rng_.below(3));
      m->tuple.sig = keys_.sign(self_, m->tuple.signed_payload(m->instance));
      return {{kind, m->encode(), std::nullopt, false, 0}};
    }
    case MsgKind::MvMsg: {
      auto m = MvMsgBody::decode(body);
      if (!m) return {};
      m->tuple.phase = static_cast<std::uint8_t>(rng_.below(3));
      if (m->tuple.value.is_bot) m->tuple.value = MvValue::of(random_bytes(4));
      m->tuple.sig = keys_.sign(self_, m->tuple.signed_payload(m->instance));
      return {{kind, m->encode(), std::nullopt, false, 0}};
    }
    default:
      return {{kind, body, std::nullopt, false, 0}};
  }
}

std::vector<OutboundMessage> AdversaryEngine::equivocate(MsgKind kind, const Bytes& body) {
  switch (kind) {
    case MsgKind::BinMsg: {
      auto m = BinMsgBody::decode(body);
      if (!m) return {};
      // the initial proposal carries no justification, so both bits are valid
      if (!m->is_certificate && m->tuple.phase == BinPhase::Converge && m->tuple.round == 1) {
        std::vector<OutboundMessage> out;
        for (int bit = 0; bit <= 1; ++bit) {
          BinMsgBody v = *m;
          v.tuple.value = static_cast<std::uint8_t>(bit);
          v.tuple.sig = keys_.sign(self_, v.tuple.signed_payload(v.instance));
          out.push_back({kind, v.encode(), half_targets(bit == 0), false, 0});
        }
        return out;
      }
      return {{kind, body, std::nullopt, false, 0}};
    }
    case MsgKind::MvMsg: {
      auto m = MvMsgBody::decode(body);
      if (!m) return {};
      auto key = m->instance.str();
      auto it = mv_chains_.find(key);
      if (it == mv_chains_.end()) {
        it = mv_chains_.emplace(key, std::make_pair(MvValue::of(random_bytes(6)), MvValue::of(random_bytes(6)))).first;
      }
      const auto& [va, vb] = it->second;
      auto chain_msg = [&](const MvValue& v, bool even) -> OutboundMessage {
        MvMsgBody c = *m;
        c.tuple.value = v;
        if (c.tuple.phase == 0) {
          c.just.clear();
        } else if (c.tuple.phase == 1) {
          // the "kept own proposal" justification, consistent per chain
          MvTuple own;
          own.sender = self_;
          own.phase = 0;
          own.value = v;
          own.sig = keys_.sign(self_, own.signed_payload(c.instance));
          c.just = {own};
        }
        c.tuple.sig = keys_.sign(self_, c.tuple.signed_payload(c.instance));
        return {kind, c.encode(), half_targets(even), false, 0};
      };
      if (m->tuple.phase <= 1) return {chain_msg(va, true), chain_msg(vb, false)};
      return {{kind, body, std::nullopt, false, 0}};  // phase 2 needs a real quorum
    }
    case MsgKind::VecRow: {
      auto m = VecRowBody::decode(body);
      if (!m) return {};
      // two different signed values under this node's own column; the own
      // entry is the one whose signature verifies under self
      std::vector<OutboundMessage> out;
      for (int variant = 0; variant <= 1; ++variant) {
        VecRowBody v = *m;
        Bytes val = random_bytes(6);
        for (auto& e : v.row) {
          if (!e.present) continue;
          if (keys_.verify(self_, vec_entry_signed_payload(v.instance, self_, e.value), e.sig)) {
            e.value = val;
            e.sig = keys_.sign(self_, vec_entry_signed_payload(v.instance, self_, e.value));
          }
        }
        out.push_back({kind, v.encode(), half_targets(variant == 0), false, 0});
      }
      return out;
    }
    default:
      return {{kind, body, std::nullopt, false, 0}};
  }
}

}  // namespace bftstack
