#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bftstack/bytes.hpp"
#include "bftstack/core.hpp"

namespace bftstack {

/// Everything the offline auditor needs is recorded here, in the order it
/// happened. Verdicts are recomputed from these records, never taken from
/// the protocol state machines.
enum class TraceKind : std::uint8_t {
  Propose = 1,      // node proposed `payload` to `instance`
  Decide = 2,       // node decided `payload` for `instance`
  MvAccept = 3,     // multivalued message accepted into M (payload: full message)
  MvReject = 4,     // multivalued message rejected (payload: full message)
  BinDecideCert = 5,// binary decision with round in `aux`
  VecDecide = 6,    // decided vector (payload: canonical row encoding)
  SinkView = 7,     // payload: encoded member list, aux: epoch
  SinkUnavailable = 8,
  NeighborDrop = 9, // `peer` removed after heartbeat silence
  RrbDeliver = 10,  // reachable broadcast delivery from origin `peer`
  ResultAccept = 11,// non-member accepted a disseminated result
  AdversaryEmit = 12,// a Byzantine node emitted `payload` (kind in detail)
};

struct TraceEvent {
  SimTime time = 0;
  NodeId node = 0;
  TraceKind kind = TraceKind::Propose;
  std::string instance;  // InstanceId::str(), empty when not applicable
  NodeId peer = 0;
  std::int64_t aux = 0;
  Bytes payload;
};

class TraceLog {
 public:
  void emit(TraceEvent e) { events_.push_back(std::move(e)); }
  const std::vector<TraceEvent>& events() const { return events_; }
  void clear() { events_.clear(); }

  /// One line per event: time node kind instance peer aux digest payload-hex.
  /// The format is stable; `audit` re-reads it.
  std::string serialize() const;
  static std::vector<TraceEvent> parse(const std::string& text);

 private:
  std::vector<TraceEvent> events_;
};

}  // namespace bftstack
