#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bftstack/core.hpp"
#include "bftstack/envelope.hpp"

namespace bftstack {

/// Counters kept per node inside one trial. The protocol layers update them;
/// verdicts about protocol correctness never read them (those come from the
/// trace auditor).
struct NodeMetrics {
  std::uint64_t envelopes_sent = 0;
  std::map<MsgKind, std::uint64_t> sends_by_kind;
  std::uint64_t rrb_forwards = 0;
  std::uint64_t rejected_bad_sig = 0;
  std::uint64_t rejected_duplicate = 0;
  std::uint64_t rejected_malformed = 0;
  std::uint64_t rejected_unjustified = 0;
  std::uint64_t beb_delivered = 0;
  std::uint64_t rrb_delivered = 0;

  void count_send(MsgKind k) {
    ++envelopes_sent;
    ++sends_by_kind[k];
  }

  std::uint64_t consensus_sends() const {
    std::uint64_t total = 0;
    for (auto k : {MsgKind::BinMsg, MsgKind::MvMsg, MsgKind::VecRow, MsgKind::Decision}) {
      auto it = sends_by_kind.find(k);
      if (it != sends_by_kind.end()) total += it->second;
    }
    return total;
  }
};

/// Outcome of one trial, one row per node in the detail table.
struct TrialMetrics {
  std::uint64_t seed = 0;
  int trial_index = 0;
  int n = 0;
  int f = 0;
  bool sink_formed = false;
  bool sink_unavailable_reported = false;
  SimTime discovery_done_ms = -1;
  SimTime sink_done_ms = -1;
  // Indexed by node id.
  std::vector<SimTime> decide_latency_ms;  // -1: did not decide
  std::vector<int> rounds_used;            // binary rounds at decision, -1 otherwise
  std::vector<NodeMetrics> node;
  // Filled by the trace auditor.
  bool agreement_ok = true;
  bool validity_ok = true;
  bool structure_ok = true;
  bool justification_ok = true;
  bool sink_ok = true;
  std::string violation;  // first violation description, empty when clean

  bool all_verdicts_ok() const {
    return agreement_ok && validity_ok && structure_ok && justification_ok && sink_ok;
  }

  std::uint64_t total_sends() const {
    std::uint64_t s = 0;
    for (const auto& m : node) s += m.envelopes_sent;
    return s;
  }

  std::uint64_t total_consensus_sends() const {
    std::uint64_t s = 0;
    for (const auto& m : node) s += m.consensus_sends();
    return s;
  }

  /// Every correct group member decided within the run.
  bool decided(const std::vector<NodeId>& group, const std::vector<bool>& byzantine) const {
    for (NodeId id : group) {
      if (byzantine.size() > id && byzantine[id]) continue;
      if (decide_latency_ms.size() <= id || decide_latency_ms[id] < 0) return false;
    }
    return !group.empty();
  }
};

/// Two-sided 97.5% Student-t quantile (95% confidence interval half-width
/// multiplier). Exact table for small df, Cornish-Fisher expansion beyond.
inline double student_t_975(int df) {
  static constexpr std::array<double, 30> table = {
      12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060, 2.2622, 2.2281,
      2.2010,  2.1788, 2.1604, 2.1448, 2.1314, 2.1199, 2.1098, 2.1009, 2.0930, 2.0860,
      2.0796,  2.0739, 2.0687, 2.0639, 2.0595, 2.0555, 2.0518, 2.0484, 2.0452, 2.0423};
  if (df < 1) return 0.0;
  if (df <= 30) return table[df - 1];
  const double z = 1.959963984540054;
  const double d = df;
  return z + (z * z * z + z) / (4 * d) + (5 * z * z * z * z * z + 16 * z * z * z + 3 * z) / (96 * d * d);
}

struct Summary {
  double mean = 0;
  double ci_half = 0;  // 95% CI half width
  double min = 0;
  double max = 0;
  int count = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.count = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  double sum = 0;
  s.min = xs[0];
  s.max = xs[0];
  for (double x : xs) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / s.count;
  if (s.count > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    double stddev = std::sqrt(ss / (s.count - 1));
    s.ci_half = student_t_975(s.count - 1) * stddev / std::sqrt(static_cast<double>(s.count));
  }
  return s;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : (xs[m - 1] + xs[m]) / 2.0;
}

/// Least-squares slope of log(y) against log(x); the growth exponent when
/// y follows a power law in x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0) continue;
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return 0;
  double denom = n * sxx - sx * sx;
  if (denom == 0) return 0;
  return (n * sxy - sx * sy) / denom;
}

}  // namespace bftstack
