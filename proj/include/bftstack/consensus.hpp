#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "bftstack/comm.hpp"
#include "bftstack/core.hpp"
#include "bftstack/crypto.hpp"
#include "bftstack/metrics.hpp"
#include "bftstack/trace.hpp"

namespace bftstack {

// ---------------------------------------------------------------------------
// Binary consensus: randomized rounds of CONVERGE / LOCK / DECIDE.
//
// Every phase message carries a justification: the set of signed prior-phase
// tuples its value was computed from. Receivers re-check the computation, so
// a Byzantine sender can only emit values some protocol-compliant execution
// could have produced. A decided process broadcasts a self-contained decision
// certificate (a quorum of signed DECIDE tuples), which lets every lagging
// process decide immediately.
// ---------------------------------------------------------------------------

enum class BinPhase : std::uint8_t { Converge = 0, Lock = 1, Decide = 2 };
constexpr std::uint8_t kBot = 2;  // bottom marker for binary values

struct BinTuple {
  NodeId sender = 0;
  std::uint32_t round = 1;
  BinPhase phase = BinPhase::Converge;
  std::uint8_t value = 0;  // 0, 1 or kBot
  Signature sig;

  Bytes signed_payload(const InstanceId& id) const;
};

struct BinMsgBody {
  InstanceId instance;
  bool is_certificate = false;  // certificate: value decided, just = DECIDE quorum
  BinTuple tuple;
  std::vector<BinTuple> just;

  Bytes encode() const;
  static std::optional<BinMsgBody> decode(const Bytes& body);
};

// ---------------------------------------------------------------------------
// Multivalued consensus over arbitrary byte strings (phases 0 / 1 / 2 with an
// embedded binary consensus deciding whether a justified common value exists).
// ---------------------------------------------------------------------------

struct MvValue {
  bool is_bot = true;
  Bytes bytes;

  bool operator==(const MvValue&) const = default;
  bool operator<(const MvValue& o) const {
    if (is_bot != o.is_bot) return is_bot;  // bot sorts first
    return bytes < o.bytes;
  }
  static MvValue bot() { return MvValue{}; }
  static MvValue of(Bytes b) { return MvValue{false, std::move(b)}; }
  Bytes encode() const;
  static MvValue decode_prefixed(ByteReader& r);
};

struct MvTuple {
  NodeId sender = 0;
  std::uint8_t phase = 0;
  MvValue value;
  Signature sig;

  Bytes signed_payload(const InstanceId& id) const;
};

struct MvMsgBody {
  InstanceId instance;
  MvTuple tuple;
  std::vector<MvTuple> just;

  Bytes encode() const;
  static std::optional<MvMsgBody> decode(const Bytes& body);
};

/// The per-phase justification rules. Used online by every receiver and
/// offline by the trace auditor (through its own reimplementation).
enum class JustVerdict { Valid, BadShape, BadSignature, BadRule };
JustVerdict validate_justification(const MvMsgBody& msg, const FaultBudget& budget, const KeyDirectory& keys);

// ---------------------------------------------------------------------------
// Vector consensus: agree on a vector holding 2f+1 signed proposals.
// ---------------------------------------------------------------------------

struct VecEntry {
  bool present = false;
  Bytes value;
  Signature sig;
};

Bytes vec_entry_signed_payload(const InstanceId& vid, NodeId column, const Bytes& value);

/// Canonical column-ordered encoding; byte equality is vector equality,
/// which is what the embedded multivalued consensus compares.
Bytes encode_row(const std::vector<VecEntry>& row);
std::optional<std::vector<VecEntry>> decode_row(const Bytes& data);

struct VecRowBody {
  InstanceId instance;
  NodeId sender = 0;
  std::vector<VecEntry> row;

  Bytes encode() const;
  static std::optional<VecRowBody> decode(const Bytes& body);
};

// ---------------------------------------------------------------------------

struct DecisionBody {
  InstanceId instance;
  NodeId sender = 0;
  Bytes value;
  Signature sig;  // over (instance, value)

  Bytes encode() const;
  static std::optional<DecisionBody> decode(const Bytes& body);
};

Bytes decision_signed_payload(const InstanceId& id, const Bytes& value);

struct ConsensusConfig {
  SimTime tick_ms = 10;            // periodic state rebroadcast
  SimTime mv_bot_fallback_ms = 300;  // silence window before the bot branch
                                     // of phase 1 may fire without a crossing
  int vec_max_rounds = 64;
  std::size_t max_proposal_bytes = 64 * 1024;
};

class ConsensusService;

/// Hooks a Byzantine implementation uses to replace outgoing consensus
/// traffic. Returning an empty list silences the message.
struct OutboundMessage {
  MsgKind kind;
  Bytes body;
  std::optional<std::set<NodeId>> targets;  // nullopt = everyone
  bool forge_identity = false;              // claim another sender, sign with own key
  NodeId claimed_sender = 0;
};
using SendFilter = std::function<std::vector<OutboundMessage>(MsgKind, const Bytes&)>;

/// Per-node consensus endpoint: owns all live instances, drives their
/// periodic rebroadcast, validates and routes incoming messages, and
/// disseminates / accepts decided results.
class ConsensusService {
 public:
  static constexpr std::uint32_t kTimerTag = 0x30;

  ConsensusService(NodeId self, const KeyDirectory& keys, Simulator& sim, CommLayer& comm,
                   ConsensusConfig cfg, ResultCache& cache, InstanceRegistry& registry,
                   NodeMetrics& metrics, TraceLog* trace);
  ~ConsensusService();

  void start();

  /// The group every subsequent instance runs in (sorted ids) and its budget.
  void configure_group(std::vector<NodeId> group, FaultBudget budget);
  const std::vector<NodeId>& group() const { return group_; }
  bool in_group() const;

  void propose_binary(const InstanceId& id, std::uint8_t bit);
  void propose_multivalued(const InstanceId& id, Bytes value);
  void propose_vector(const InstanceId& id, Bytes value);

  /// Decided value in canonical encoding, if any. Binary: one byte. Mv: a
  /// present marker then bytes. Vector: the canonical row encoding.
  std::optional<Bytes> decided(const InstanceId& id) const;
  std::optional<int> binary_rounds(const InstanceId& id) const;
  std::optional<SimTime> decide_time(const InstanceId& id) const;

  /// Non-blocking completion callback (decided value in canonical encoding).
  std::function<void(const InstanceId&, const Bytes&, SimTime)> on_decide;

  void on_message(MsgKind kind, NodeId from, const Bytes& body, bool via_rrb);
  void on_tick();

  /// Queries peers for a cached result (recovery path).
  void query_result(const InstanceId& id);

  void set_send_filter(SendFilter f) { send_filter_ = std::move(f); }

 private:
  struct BinInstance;
  struct MvInstance;
  struct VecInstance;

  friend struct BinInstance;
  friend struct MvInstance;
  friend struct VecInstance;

  void send(MsgKind kind, const Bytes& body);
  void record_decide(const InstanceId& id, const Bytes& canonical, int rounds);
  void disseminate(const InstanceId& id, const Bytes& canonical);
  void handle_decision(NodeId from, const Bytes& body);
  void handle_result_query(NodeId from, const Bytes& body);
  void handle_result_reply(NodeId from, const Bytes& body);

  BinInstance* bin_instance(const InstanceId& id, bool create);
  MvInstance* mv_instance(const InstanceId& id, bool create);
  VecInstance* vec_instance(const InstanceId& id, bool create);

  NodeId self_;
  const KeyDirectory& keys_;
  Simulator& sim_;
  CommLayer& comm_;
  ConsensusConfig cfg_;
  ResultCache& cache_;
  InstanceRegistry& registry_;
  NodeMetrics& metrics_;
  TraceLog* trace_;

  std::vector<NodeId> group_;
  FaultBudget budget_{1, 0};
  SendFilter send_filter_;

  std::map<InstanceId, std::unique_ptr<BinInstance>> bins_;
  std::map<InstanceId, std::unique_ptr<MvInstance>> mvs_;
  std::map<InstanceId, std::unique_ptr<VecInstance>> vecs_;

  struct DecisionState {
    std::map<NodeId, Signature> sigs;  // matching-value signers
    Bytes value;
    bool accepted = false;
  };
  std::map<InstanceId, DecisionState> decisions_;
  std::map<InstanceId, SimTime> decide_times_;
  std::map<InstanceId, int> bin_rounds_;
};

}  // namespace bftstack
