#include "bftstack/audit.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "bftstack/consensus.hpp"

namespace bftstack {

namespace {

std::string describe(const char* what, const TraceEvent& e) {
  std::ostringstream os;
  os << what << " at t=" << e.time << " node=" << e.node << " instance=" << e.instance;
  return os.str();
}

bool is_correct(const AuditInput& in, NodeId id) {
  return id >= in.byzantine.size() || !in.byzantine[id];
}

/// Independent reimplementation of the justification rules; deliberately
/// not the ConsensusService code path.
bool audit_mv_valid(const AuditInput& in, const MvMsgBody& m) {
  const int q = in.group_budget.quorum();
  const int f = in.group_budget.f;
  const MvTuple& t = m.tuple;
  if (t.phase > 2) return false;
  if (t.value.is_bot) return false;  // only non-bot values are ever justified
  if (!in.keys->verify(t.sender, t.signed_payload(m.instance), t.sig)) return false;

  std::set<NodeId> senders;
  for (const auto& inr : m.just) {
    if (!senders.insert(inr.sender).second) return false;
  }
  auto all_inner = [&](std::uint8_t phase) {
    for (const auto& inr : m.just) {
      if (inr.phase != phase) return false;
      if (!in.keys->verify(inr.sender, inr.signed_payload(m.instance), inr.sig)) return false;
    }
    return true;
  };

  if (t.phase == 0) return m.just.empty();
  if (t.phase == 1) {
    if (m.just.size() == 1) {
      const MvTuple& own = m.just[0];
      return own.sender == t.sender && own.value == t.value && all_inner(0);
    }
    if (static_cast<int>(m.just.size()) < q || !all_inner(0)) return false;
    int carrying = 0;
    for (const auto& inr : m.just)
      if (inr.value == t.value) ++carrying;
    return carrying > f;
  }
  // phase 2
  if (static_cast<int>(m.just.size()) < q || !all_inner(1)) return false;
  for (const auto& inr : m.just)
    if (!(inr.value == t.value)) return false;
  return true;
}

void fail(AuditVerdicts& v, bool AuditVerdicts::*field, const std::string& why) {
  v.*field = false;
  if (v.violation.empty()) v.violation = why;
}

}  // namespace

AuditVerdicts audit_trial(const AuditInput& in) {
  AuditVerdicts v;
  const auto& events = *in.events;

  // ----- collect ---------------------------------------------------------
  std::map<std::string, std::map<NodeId, Bytes>> proposals;          // instance -> node -> value
  std::map<std::string, std::map<NodeId, Bytes>> decisions_correct;  // instance -> correct node -> value
  std::map<std::string, std::set<Bytes>> phase0_values;              // any observed phase-0 value
  std::map<std::string, std::set<Bytes>> byz_phase0_values;
  std::map<NodeId, std::pair<std::int64_t, Bytes>> latest_sink;      // node -> (epoch, members)
  std::set<NodeId> sink_unavailable_nodes;
  std::vector<const TraceEvent*> mv_accepts;
  std::vector<const TraceEvent*> adversary_mv;

  for (const auto& e : events) {
    switch (e.kind) {
      case TraceKind::Propose:
        proposals[e.instance][e.node] = e.payload;
        break;
      case TraceKind::Decide:
        if (is_correct(in, e.node)) decisions_correct[e.instance][e.node] = e.payload;
        break;
      case TraceKind::MvAccept: {
        mv_accepts.push_back(&e);
        auto m = MvMsgBody::decode(e.payload);
        if (m && m->tuple.phase == 0) phase0_values[e.instance].insert(m->tuple.value.bytes);
        break;
      }
      case TraceKind::MvReject:
        break;
      case TraceKind::AdversaryEmit:
        if (e.aux == static_cast<std::int64_t>(MsgKind::MvMsg)) {
          adversary_mv.push_back(&e);
          auto m = MvMsgBody::decode(e.payload);
          if (m && m->tuple.phase == 0 && !m->tuple.value.is_bot) {
            phase0_values[m->instance.str()].insert(m->tuple.value.bytes);
            byz_phase0_values[m->instance.str()].insert(m->tuple.value.bytes);
          }
        }
        break;
      case TraceKind::SinkView: {
        auto cur = latest_sink.find(e.node);
        if (cur == latest_sink.end() || cur->second.first < e.aux) latest_sink[e.node] = {e.aux, e.payload};
        break;
      }
      case TraceKind::SinkUnavailable:
        sink_unavailable_nodes.insert(e.node);
        break;
      default:
        break;
    }
  }

  // correct proposals per instance (for validity checks)
  auto correct_proposals = [&](const std::string& inst) {
    std::set<Bytes> out;
    auto it = proposals.find(inst);
    if (it == proposals.end()) return out;
    for (const auto& [node, val] : it->second)
      if (is_correct(in, node)) out.insert(val);
    return out;
  };

  // ----- agreement (every instance, embedded ones included) --------------
  for (const auto& [inst, by_node] : decisions_correct) {
    std::set<Bytes> distinct;
    for (const auto& [node, val] : by_node) distinct.insert(val);
    if (distinct.size() > 1)
      fail(v, &AuditVerdicts::agreement, "agreement violation in instance " + inst);
  }

  // ----- validity ---------------------------------------------------------
  for (const auto& [inst, by_node] : decisions_correct) {
    InstanceId probe;
    bool top_binary = in.protocol == ProtocolChoice::Binary;
    bool is_bin = inst.find("/bin") != std::string::npos;
    bool is_mv = inst.find("/mv") != std::string::npos;
    bool is_vec = inst.find("/vec") != std::string::npos;
    (void)probe;

    if (is_bin) {
      auto props = correct_proposals(inst);
      for (const auto& [node, val] : by_node) {
        if (val.size() != 1 || val[0] > 1) {
          fail(v, &AuditVerdicts::structure, "non-bit binary decision in " + inst);
          continue;
        }
        // BC1 over the processes that proposed: unanimity forces the value
        if (props.size() == 1 && !(val == *props.begin()))
          fail(v, &AuditVerdicts::validity, "binary validity violation in " + inst);
      }
      (void)top_binary;
    }

    if (is_mv) {
      auto props = correct_proposals(inst);
      for (const auto& [node, val] : by_node) {
        MvValue decoded;
        try {
          ByteReader r(val);
          decoded = MvValue::decode_prefixed(r);
          if (!r.done()) throw std::out_of_range("trailing bytes");
        } catch (const std::out_of_range&) {
          fail(v, &AuditVerdicts::structure, "undecodable multivalued decision in " + inst);
          continue;
        }
        if (decoded.is_bot) continue;
        const Bytes& value = decoded.bytes;
        // MVC1: unanimous correct proposals force that value
        if (props.size() == 1 && value != *props.begin())
          fail(v, &AuditVerdicts::validity, "multivalued validity (MVC1) violation in " + inst);
        // MVC2: the value was proposed by somebody (observed at phase 0)
        const auto& seen = phase0_values[inst];
        bool proposed_by_someone = props.count(value) || seen.count(value);
        if (!proposed_by_someone)
          fail(v, &AuditVerdicts::validity, "multivalued validity (MVC2) violation in " + inst);
        // MVC3: a value only Byzantine nodes proposed is never decided
        if (!props.count(value) && byz_phase0_values[inst].count(value) && !phase0_values[inst].empty()) {
          bool correct_proposed_it = props.count(value) != 0;
          if (!correct_proposed_it)
            fail(v, &AuditVerdicts::validity, "multivalued validity (MVC3) violation in " + inst);
        }
      }
    }

    if (is_vec) {
      const int fc = in.group_budget.f;
      auto props = proposals.find(inst);
      for (const auto& [node, val] : by_node) {
        auto row = decode_row(val);
        if (!row || row->size() != in.group.size()) {
          fail(v, &AuditVerdicts::structure, "undecodable vector decision in " + inst);
          continue;
        }
        int present = 0, correct_cols = 0;
        for (std::size_t k = 0; k < row->size(); ++k) {
          const VecEntry& e = (*row)[k];
          if (!e.present) continue;
          ++present;
          NodeId col = in.group[k];
          InstanceId vid{in.instance_label, ProtocolTag::Vec, -1};
          if (!in.keys->verify(col, vec_entry_signed_payload(vid, col, e.value), e.sig)) {
            fail(v, &AuditVerdicts::structure, "vector entry signature invalid in " + inst);
            continue;
          }
          if (is_correct(in, col)) {
            ++correct_cols;
            // VC1: a correct column holds that process's proposal
            if (props != proposals.end()) {
              auto p = props->second.find(col);
              if (p != props->second.end() && p->second != e.value)
                fail(v, &AuditVerdicts::validity, "vector validity (VC1) violation in " + inst);
            }
          }
        }
        if (present != 2 * fc + 1)
          fail(v, &AuditVerdicts::structure, "vector decision without exactly 2f+1 entries in " + inst);
        if (correct_cols < fc + 1)
          fail(v, &AuditVerdicts::validity, "vector validity (fewer than f+1 correct entries) in " + inst);
      }
    }
  }

  // ----- justification audit ----------------------------------------------
  for (const TraceEvent* e : mv_accepts) {
    if (!is_correct(in, e->node)) continue;
    auto m = MvMsgBody::decode(e->payload);
    if (!m || !audit_mv_valid(in, *m))
      fail(v, &AuditVerdicts::justification, describe("accepted unjustified message", *e));
  }
  // every unjustifiable adversarial message must have been rejected everywhere
  std::set<Bytes> accepted_payloads;
  for (const TraceEvent* e : mv_accepts)
    if (is_correct(in, e->node)) accepted_payloads.insert(e->payload);
  for (const TraceEvent* e : adversary_mv) {
    auto m = MvMsgBody::decode(e->payload);
    bool valid = m && audit_mv_valid(in, *m);
    if (!valid && accepted_payloads.count(e->payload))
      fail(v, &AuditVerdicts::justification, describe("unjustifiable adversarial message accepted", *e));
  }

  // ----- sink -------------------------------------------------------------
  if (in.sink_expected) {
    std::optional<std::set<NodeId>> reference;
    for (const auto& [node, rec] : latest_sink) {
      if (!is_correct(in, node)) continue;
      std::set<NodeId> members;
      try {
        ByteReader r(rec.second);
        std::uint16_t c = r.u16();
        for (std::uint16_t i = 0; i < c; ++i) members.insert(r.u32());
      } catch (const std::out_of_range&) {
        fail(v, &AuditVerdicts::sink, "undecodable sink view");
        continue;
      }
      if (static_cast<int>(members.size()) < in.min_sink_size)
        fail(v, &AuditVerdicts::sink, "sink smaller than 3f+1");
      if (!in.adjacency.empty()) {
        for (NodeId a : members)
          for (NodeId b : members)
            if (a < b && !in.adjacency[a][b])
              fail(v, &AuditVerdicts::sink, "sink members not mutually reachable");
      }
      if (!reference) reference = members;
      else if (*reference != members) fail(v, &AuditVerdicts::sink, "sink views differ across correct nodes");
    }
    // a node reporting unavailability while others computed a view is a split
    for (NodeId node : sink_unavailable_nodes) {
      if (!is_correct(in, node)) continue;
      if (reference && latest_sink.find(node) == latest_sink.end())
        fail(v, &AuditVerdicts::sink, "sink availability split across correct nodes");
    }
  }

  return v;
}

}  // namespace bftstack
