#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "bftstack/bytes.hpp"

namespace bftstack {

using NodeId = std::uint32_t;
using SimTime = std::int64_t;  // simulated milliseconds

/// Which protocol a wire message or instance belongs to.
enum class ProtocolTag : std::uint8_t { Beb = 0, Rrb = 1, Bin = 2, Mv = 3, Vec = 4 };

inline const char* name_of(ProtocolTag t) {
  switch (t) {
    case ProtocolTag::Beb: return "beb";
    case ProtocolTag::Rrb: return "rrb";
    case ProtocolTag::Bin: return "bin";
    case ProtocolTag::Mv: return "mv";
    case ProtocolTag::Vec: return "vec";
  }
  return "?";
}

/// Identifies one protocol instance. Vector consensus round r runs its
/// embedded multivalued instance under (label, Mv, r), and that instance
/// runs its embedded binary consensus under (label, Bin, r).
struct InstanceId {
  std::string label;
  ProtocolTag protocol = ProtocolTag::Bin;
  std::int32_t sub_round = -1;  // -1: no sub round

  auto operator<=>(const InstanceId&) const = default;

  InstanceId with(ProtocolTag t, std::int32_t round) const { return InstanceId{label, t, round}; }

  std::string str() const {
    std::string s = label;
    s += '/';
    s += name_of(protocol);
    if (sub_round >= 0) {
      s += '/';
      s += std::to_string(sub_round);
    }
    return s;
  }
};

/// Smallest integer strictly greater than (n+f)/2.
/// Any two such quorums intersect in at least f+1 processes.
inline int quorum_size(int n, int f) {
  if (n < 3 * f + 1) throw std::invalid_argument("fault budget requires n >= 3f+1");
  return (n + f) / 2 + 1;
}

/// Process count and Byzantine bound for one consensus group.
struct FaultBudget {
  int n = 0;
  int f = 0;

  FaultBudget() = default;
  FaultBudget(int n_, int f_) : n(n_), f(f_) {
    if (n < 1 || f < 0 || n < 3 * f + 1) throw std::invalid_argument("fault budget requires n >= 3f+1");
  }

  int quorum() const { return (n + f) / 2 + 1; }
  int k_min() const { return quorum(); }
  int k_max() const { return n - f; }
};

/// Write-once store of decided values, kept so recovering or late nodes can
/// learn past decisions. Entries may be garbage collected after a horizon of
/// simulated time; the default horizon never evicts within a run.
class ResultCache {
 public:
  struct Entry {
    Bytes value;
    SimTime decided_at = 0;
  };

  explicit ResultCache(SimTime horizon = -1) : horizon_(horizon) {}

  /// Returns false if the instance already has a (different or equal) result.
  bool put(const InstanceId& id, Bytes value, SimTime now) {
    auto [it, fresh] = entries_.try_emplace(id, Entry{std::move(value), now});
    (void)it;
    return fresh;
  }

  std::optional<Bytes> get(const InstanceId& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
  }

  void collect_garbage(SimTime now) {
    if (horizon_ < 0) return;
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (now - it->second.decided_at > horizon_) it = entries_.erase(it);
      else ++it;
    }
  }

  std::size_t size() const { return entries_.size(); }

 private:
  SimTime horizon_;
  std::map<InstanceId, Entry> entries_;
};

/// Tracks which instance ids are active so concurrent instances stay
/// isolated and an id cannot be reused while it is live.
class InstanceRegistry {
 public:
  /// Throws if the id is already registered.
  void register_instance(const InstanceId& id) {
    if (!active_.insert(id).second) throw std::invalid_argument("instance id already active: " + id.str());
  }

  bool is_active(const InstanceId& id) const { return active_.count(id) != 0; }
  std::size_t active_count() const { return active_.size(); }

  void release(const InstanceId& id) { active_.erase(id); }

 private:
  std::set<InstanceId> active_;
};

}  // namespace bftstack
