#include "bftstack/trace.hpp"

#include <sstream>
#include <stdexcept>

namespace bftstack {

namespace {

const char* kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::Propose: return "PROPOSE";
    case TraceKind::Decide: return "DECIDE";
    case TraceKind::MvAccept: return "MV_ACCEPT";
    case TraceKind::MvReject: return "MV_REJECT";
    case TraceKind::BinDecideCert: return "BIN_DECIDE";
    case TraceKind::VecDecide: return "VEC_DECIDE";
    case TraceKind::SinkView: return "SINK_VIEW";
    case TraceKind::SinkUnavailable: return "SINK_UNAVAILABLE";
    case TraceKind::NeighborDrop: return "NEIGHBOR_DROP";
    case TraceKind::RrbDeliver: return "RRB_DELIVER";
    case TraceKind::ResultAccept: return "RESULT_ACCEPT";
    case TraceKind::AdversaryEmit: return "ADV_EMIT";
  }
  return "?";
}

TraceKind kind_from(const std::string& s) {
  for (int k = 1; k <= 12; ++k) {
    if (s == kind_name(static_cast<TraceKind>(k))) return static_cast<TraceKind>(k);
  }
  throw std::invalid_argument("unknown trace kind: " + s);
}

std::string hex_encode(const Bytes& b) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (std::uint8_t c : b) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xf]);
  }
  return out.empty() ? "-" : out;
}

Bytes hex_decode(const std::string& s) {
  if (s == "-") return {};
  auto val = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw std::invalid_argument("bad hex");
  };
  Bytes out;
  out.reserve(s.size() / 2);
  for (std::size_t i = 0; i + 1 < s.size(); i += 2)
    out.push_back(static_cast<std::uint8_t>(val(s[i]) * 16 + val(s[i + 1])));
  return out;
}

}  // namespace

std::string TraceLog::serialize() const {
  std::ostringstream out;
  for (const auto& e : events_) {
    out << e.time << ' ' << e.node << ' ' << kind_name(e.kind) << ' '
        << (e.instance.empty() ? "-" : e.instance) << ' ' << e.peer << ' ' << e.aux << ' '
        << hex_digest(e.payload) << ' ' << hex_encode(e.payload) << '\n';
  }
  return out.str();
}

std::vector<TraceEvent> TraceLog::parse(const std::string& text) {
  std::vector<TraceEvent> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TraceEvent e;
    std::string kind, instance, digest, payload;
    ls >> e.time >> e.node >> kind >> instance >> e.peer >> e.aux >> digest >> payload;
    if (ls.fail()) throw std::invalid_argument("malformed trace line: " + line);
    e.kind = kind_from(kind);
    e.instance = instance == "-" ? "" : instance;
    e.payload = hex_decode(payload);
    if (hex_digest(e.payload) != digest) throw std::invalid_argument("trace digest mismatch: " + line);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace bftstack
