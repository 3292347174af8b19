#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "bftstack/bytes.hpp"
#include "bftstack/core.hpp"
#include "bftstack/crypto.hpp"

namespace bftstack {

/// Upper-layer message kinds, carried as the first payload byte.
enum class MsgKind : std::uint8_t {
  Heartbeat = 1,
  GetNeighbors = 2,
  SetNeighbors = 3,
  KnownSet = 4,
  BinMsg = 5,
  MvMsg = 6,
  VecRow = 7,
  Decision = 8,
  RrbAck = 9,
  ResultQuery = 10,
  ResultReply = 11,
};

inline const char* name_of(MsgKind k) {
  switch (k) {
    case MsgKind::Heartbeat: return "HEARTBEAT";
    case MsgKind::GetNeighbors: return "GET_NEIGHBORS";
    case MsgKind::SetNeighbors: return "SET_NEIGHBORS";
    case MsgKind::KnownSet: return "KNOWN_SET";
    case MsgKind::BinMsg: return "BIN_PHASE";
    case MsgKind::MvMsg: return "MV_MSG";
    case MsgKind::VecRow: return "VEC_ROW";
    case MsgKind::Decision: return "DECISION";
    case MsgKind::RrbAck: return "RRB_ACK";
    case MsgKind::ResultQuery: return "RESULT_QUERY";
    case MsgKind::ResultReply: return "RESULT_REPLY";
  }
  return "?";
}

/// Authenticated per-hop transmission unit.
///
/// Wire layout, version 1, all integers little endian:
///   u8   version
///   u8   protocol_tag        (0 = best effort, 1 = reachable reliable)
///   u32  sender              (transmitter id, the signer of this envelope)
///   u64  seq                 (transmitter's monotonically increasing counter)
///   u16  visited_count, then visited_count x u32
///                            (path for reachable broadcast, origin first;
///                             empty for best effort)
///   u32  payload_len, then payload bytes
///   u16  sig_len, then signature over every preceding byte
struct Envelope {
  std::uint8_t version = 1;
  ProtocolTag tag = ProtocolTag::Beb;
  NodeId sender = 0;
  std::uint64_t seq = 0;
  std::vector<NodeId> visited;
  Bytes payload;
  Signature signature;

  Bytes wire;  // cached encoding, filled by seal()/decode()

  Bytes signed_prefix() const {
    ByteWriter w;
    w.u8(version);
    w.u8(static_cast<std::uint8_t>(tag));
    w.u32(sender);
    w.u64(seq);
    w.u16(static_cast<std::uint16_t>(visited.size()));
    for (NodeId v : visited) w.u32(v);
    w.blob32(payload);
    return w.take();
  }

  MsgKind kind() const { return static_cast<MsgKind>(payload.empty() ? 0 : payload[0]); }

  std::size_t wire_size() const { return wire.size(); }
};

using EnvelopePtr = std::shared_ptr<const Envelope>;

/// Signs and encodes in one step; the result is immutable from then on.
inline EnvelopePtr seal_envelope(Envelope e, const KeyDirectory& keys) {
  Bytes prefix = e.signed_prefix();
  e.signature = keys.sign(e.sender, prefix);
  ByteWriter w;
  w.raw(prefix);
  w.blob16(e.signature);
  e.wire = w.take();
  return std::make_shared<const Envelope>(std::move(e));
}

inline std::optional<Envelope> decode_envelope(std::span<const std::uint8_t> wire) {
  try {
    ByteReader r(wire);
    Envelope e;
    e.version = r.u8();
    if (e.version != 1) return std::nullopt;
    e.tag = static_cast<ProtocolTag>(r.u8());
    e.sender = r.u32();
    e.seq = r.u64();
    std::uint16_t n = r.u16();
    e.visited.reserve(n);
    for (std::uint16_t i = 0; i < n; ++i) e.visited.push_back(r.u32());
    e.payload = r.blob32();
    e.signature = r.blob16();
    if (!r.done()) return std::nullopt;
    e.wire.assign(wire.begin(), wire.end());
    return e;
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

inline bool verify_envelope(const Envelope& e, const KeyDirectory& keys) {
  // the wire encoding is prefix + u16 length + signature, so the signed
  // prefix can be sliced instead of re-encoded
  std::size_t tail = 2 + e.signature.size();
  if (e.wire.size() > tail) {
    std::span<const std::uint8_t> prefix(e.wire.data(), e.wire.size() - tail);
    return keys.verify(e.sender, prefix, e.signature);
  }
  return keys.verify(e.sender, e.signed_prefix(), e.signature);
}

/// Origin-signed content relayed inside reachable-broadcast envelopes.
/// The origin signature covers (origin, origin_seq, payload) and stays
/// valid under forwarding; forwarders extend only the envelope's visited
/// list and re-sign the outer envelope themselves.
struct RrbMessage {
  NodeId origin = 0;
  std::uint64_t origin_seq = 0;
  Bytes payload;
  Signature origin_sig;

  Bytes signed_part() const {
    ByteWriter w;
    w.u32(origin);
    w.u64(origin_seq);
    w.blob32(payload);
    return w.take();
  }

  Bytes encode() const {
    ByteWriter w;
    w.raw(signed_part());
    w.blob16(origin_sig);
    return w.take();
  }

  static std::optional<RrbMessage> decode(std::span<const std::uint8_t> data) {
    try {
      ByteReader r(data);
      RrbMessage m;
      m.origin = r.u32();
      m.origin_seq = r.u64();
      m.payload = r.blob32();
      m.origin_sig = r.blob16();
      if (!r.done()) return std::nullopt;
      return m;
    } catch (const std::out_of_range&) {
      return std::nullopt;
    }
  }

  MsgKind kind() const { return static_cast<MsgKind>(payload.empty() ? 0 : payload[0]); }
};

}  // namespace bftstack
