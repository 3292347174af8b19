#include "bftstack/scenario.hpp"

#include <stdexcept>

#include "json.hpp"

namespace bftstack {

const char* name_of(ProtocolChoice p) {
  switch (p) {
    case ProtocolChoice::Binary: return "binary";
    case ProtocolChoice::Multivalued: return "multivalued";
    case ProtocolChoice::Vector: return "vector";
    case ProtocolChoice::Bootstrap: return "bootstrap";
  }
  return "?";
}

const char* name_of(ProposalMode p) {
  return p == ProposalMode::Unanimous ? "unanimous" : "divergent";
}

const char* name_of(SinkMode m) { return m == SinkMode::SinkOnly ? "sink_only" : "all_nodes"; }

void ScenarioConfig::validate() const {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (f < 0) throw std::invalid_argument("f must be nonnegative");
  if (n < 3 * f + 1) throw std::invalid_argument("invalid configuration: n < 3f+1");
  if (trials < 1) throw std::invalid_argument("trials must be at least 1");
  if (static_cast<int>(adversary.byzantine.size()) > f)
    throw std::invalid_argument("more byzantine nodes than the fault budget allows");
  for (NodeId b : adversary.byzantine)
    if (static_cast<int>(b) >= n) throw std::invalid_argument("byzantine node id out of range");
  if (time_budget_ms <= 0) throw std::invalid_argument("time budget must be positive");
  if (bootstrap_ms < stack.membership.discovery_start_ms + 2 * stack.membership.heartbeat_interval_ms)
    throw std::invalid_argument("bootstrap window too short for discovery");
  if (link.loss_probability < 0 || link.loss_probability > 1)
    throw std::invalid_argument("loss probability out of range");
  if (crash && static_cast<int>(crash->first) >= n) throw std::invalid_argument("crash node out of range");
}

std::vector<NodeId> ScenarioConfig::byzantine_nodes() const {
  if (adversary.behavior == AdversaryBehavior::None) return {};
  if (!adversary.byzantine.empty())
    return std::vector<NodeId>(adversary.byzantine.begin(), adversary.byzantine.end());
  std::vector<NodeId> out;  // default: the top f identifiers
  for (int i = n - f; i < n; ++i) out.push_back(static_cast<NodeId>(i));
  return out;
}

bool ScenarioConfig::is_byzantine(NodeId id) const {
  for (NodeId b : byzantine_nodes())
    if (b == id) return true;
  return false;
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ScenarioConfig c;
  c.label = j.value("label", c.label);
  c.n = j.value("n", c.n);
  c.f = j.value("f", c.f);
  if (j.contains("protocol")) {
    std::string p = j["protocol"];
    if (p == "binary") c.protocol = ProtocolChoice::Binary;
    else if (p == "multivalued") c.protocol = ProtocolChoice::Multivalued;
    else if (p == "vector") c.protocol = ProtocolChoice::Vector;
    else if (p == "bootstrap") c.protocol = ProtocolChoice::Bootstrap;
    else throw std::invalid_argument("unknown protocol: " + p);
  }
  if (j.contains("proposals")) {
    std::string p = j["proposals"];
    if (p == "unanimous") c.proposals = ProposalMode::Unanimous;
    else if (p == "divergent") c.proposals = ProposalMode::Divergent;
    else throw std::invalid_argument("unknown proposal mode: " + p);
  }
  if (j.contains("sink_mode")) {
    std::string m = j["sink_mode"];
    if (m == "sink_only") c.sink_mode = SinkMode::SinkOnly;
    else if (m == "all_nodes") c.sink_mode = SinkMode::AllNodes;
    else throw std::invalid_argument("unknown sink mode: " + m);
  }
  if (j.contains("topology")) {
    const auto& t = j["topology"];
    std::string kind = t.value("kind", "grid");
    if (kind == "grid") c.topology.kind = TopologyKind::Grid;
    else if (kind == "random_waypoint") c.topology.kind = TopologyKind::RandomWaypoint;
    else if (kind == "explicit") c.topology.kind = TopologyKind::ExplicitGraph;
    else throw std::invalid_argument("unknown topology kind: " + kind);
    if (t.contains("room")) {
      c.topology.room_width = t["room"][0];
      c.topology.room_height = t["room"][1];
    }
    c.topology.radio_range = t.value("radio_range", c.topology.radio_range);
    c.topology.speed = t.value("speed", c.topology.speed);
    if (t.contains("adjacency")) {
      for (const auto& row : t["adjacency"]) {
        std::vector<NodeId> r;
        for (const auto& v : row) r.push_back(v.get<NodeId>());
        c.topology.adjacency.push_back(std::move(r));
      }
    }
  }
  if (j.contains("link")) {
    const auto& l = j["link"];
    c.link.loss_probability = l.value("loss", 0.0);
    if (l.contains("delay")) {
      c.link.delay_min = l["delay"][0];
      c.link.delay_max = l["delay"][1];
    }
    c.link.duplication_probability = l.value("duplication", 0.0);
    c.link.corruption_probability = l.value("corruption", 0.0);
  }
  if (j.contains("adversary")) {
    const auto& a = j["adversary"];
    c.adversary.behavior = adversary_from_name(a.value("behavior", "none"));
    if (a.contains("nodes"))
      for (const auto& v : a["nodes"]) c.adversary.byzantine.insert(v.get<NodeId>());
  }
  c.trials = j.value("trials", c.trials);
  c.seed = j.value("seed", c.seed);
  c.time_budget_ms = j.value("time_budget_ms", c.time_budget_ms);
  c.bootstrap_ms = j.value("bootstrap_ms", c.bootstrap_ms);
  c.sink_cap = j.value("sink_cap", c.sink_cap);
  if (j.contains("crash")) c.crash = {{j["crash"]["node"].get<NodeId>(), j["crash"]["at_ms"].get<SimTime>()}};
  return c;
}

}  // namespace bftstack
