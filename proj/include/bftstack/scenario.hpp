#pragma once

#include <optional>
#include <string>

#include "bftstack/adversary.hpp"
#include "bftstack/netsim.hpp"
#include "bftstack/stack.hpp"

namespace bftstack {

enum class ProtocolChoice : std::uint8_t { Binary, Multivalued, Vector, Bootstrap };
enum class ProposalMode : std::uint8_t { Unanimous, Divergent };
enum class SinkMode : std::uint8_t { SinkOnly, AllNodes };

const char* name_of(ProtocolChoice p);
const char* name_of(ProposalMode p);
const char* name_of(SinkMode m);

/// One experiment description: who runs, where, over what medium, against
/// which adversary, how many seeded trials.
struct ScenarioConfig {
  std::string label = "run";
  int n = 4;
  int f = 1;
  ProtocolChoice protocol = ProtocolChoice::Binary;
  ProposalMode proposals = ProposalMode::Unanimous;
  SinkMode sink_mode = SinkMode::SinkOnly;
  TopologyConfig topology;
  LinkModel link;
  AdversarySpec adversary;
  int trials = 1;
  std::uint64_t seed = 1;
  SimTime time_budget_ms = 10000;
  SimTime bootstrap_ms = 800;
  int sink_cap = 0;
  std::optional<std::pair<NodeId, SimTime>> crash;
  StackConfig stack;

  /// Throws std::invalid_argument on inconsistent configuration
  /// (n < 3f+1, no trials, byzantine set larger than f, ...).
  void validate() const;

  std::vector<NodeId> byzantine_nodes() const;
  bool is_byzantine(NodeId id) const;

  static ScenarioConfig from_json_text(const std::string& text);
};

}  // namespace bftstack
