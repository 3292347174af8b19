#pragma once

#include <string>
#include <vector>

#include "bftstack/crypto.hpp"
#include "bftstack/scenario.hpp"
#include "bftstack/trace.hpp"

namespace bftstack {

/// Everything the auditor may look at. Verdicts are computed from the event
/// log and the key directory only, never from protocol state.
struct AuditInput {
  const std::vector<TraceEvent>* events = nullptr;
  const KeyDirectory* keys = nullptr;
  std::vector<bool> byzantine;                 // indexed by node id
  std::vector<NodeId> group;                   // consensus group (sorted)
  FaultBudget group_budget{1, 0};
  int min_sink_size = 1;                       // 3f+1 with the global f
  ProtocolChoice protocol = ProtocolChoice::Binary;
  std::string instance_label = "run";
  std::vector<std::vector<bool>> adjacency;    // ground truth near sink time
  bool sink_expected = true;                   // SinkOnly mode with membership
};

struct AuditVerdicts {
  bool agreement = true;
  bool validity = true;
  bool structure = true;
  bool justification = true;
  bool sink = true;
  std::string violation;  // first failure, empty when clean

  bool all_ok() const { return agreement && validity && structure && justification && sink; }
};

/// Recomputes every safety verdict from the logged trace. This is a separate
/// code path from the protocol state machines on purpose: it shares only the
/// wire codecs and the signature directory with them.
AuditVerdicts audit_trial(const AuditInput& in);

}  // namespace bftstack
