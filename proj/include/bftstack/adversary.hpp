#pragma once

#include <map>
#include <set>
#include <string>

#include "bftstack/consensus.hpp"
#include "bftstack/crypto.hpp"
#include "bftstack/rng.hpp"

namespace bftstack {

enum class AdversaryBehavior : std::uint8_t {
  None = 0,
  Silent,          // consensus messages suppressed; membership keeps running
  RandomValues,    // value/status fields randomized, re-signed with own key
  WrongPhase,      // round/phase fields perturbed
  Equivocate,      // coherent conflicting variants to different receivers
  DropForwarding,  // reachable-broadcast relaying suppressed
  Mixed,           // behaviors assigned per Byzantine node, round-robin
};

const char* name_of(AdversaryBehavior b);
AdversaryBehavior adversary_from_name(const std::string& name);

struct AdversarySpec {
  AdversaryBehavior behavior = AdversaryBehavior::None;
  std::set<NodeId> byzantine;  // filled by the harness when empty: top f ids
  // network misbehavior is configured through the scenario's link model
  double loss_override = -1;
  double duplication_override = -1;
};

/// Outgoing-message corruption for one Byzantine node. Deterministic given
/// the run seed. Install with ConsensusService::set_send_filter.
class AdversaryEngine {
 public:
  AdversaryEngine(NodeId self, AdversaryBehavior behavior, std::uint64_t seed, const KeyDirectory& keys,
                  int node_count);

  std::vector<OutboundMessage> transform(MsgKind kind, const Bytes& body);
  bool drops_forwarding() const { return behavior_ == AdversaryBehavior::DropForwarding; }
  AdversaryBehavior behavior() const { return behavior_; }

 private:
  std::vector<OutboundMessage> random_values(MsgKind kind, const Bytes& body);
  std::vector<OutboundMessage> wrong_phase(MsgKind kind, const Bytes& body);
  std::vector<OutboundMessage> equivocate(MsgKind kind, const Bytes& body);

  std::set<NodeId> half_targets(bool even) const;
  Bytes random_bytes(std::size_t n);

  NodeId self_;
  AdversaryBehavior behavior_;
  const KeyDirectory& keys_;
  int node_count_;
  Rng rng_;
  std::uint64_t counter_ = 0;
  // per-instance equivocation chains (two phase-0 proposals per instance)
  std::map<std::string, std::pair<MvValue, MvValue>> mv_chains_;
};

/// Behavior of the i-th Byzantine node under a spec (Mixed cycles).
AdversaryBehavior behavior_for(const AdversarySpec& spec, int byzantine_index);

}  // namespace bftstack
