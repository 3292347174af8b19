#pragma once

// Test-only oracles, implemented independently of the library code paths
// they check.

#include <optional>
#include <set>
#include <vector>

#include "bftstack/core.hpp"

namespace oracles {

using bftstack::NodeId;

/// Maximum pairwise-disjoint subfamily by full subset enumeration.
int max_disjoint_bruteforce(const std::vector<std::set<NodeId>>& paths);

/// Number of node-disjoint s->t paths in an undirected graph, intermediate
/// nodes from `banned` excluded. Unit-capacity max flow on the node-split
/// graph (Menger).
int menger_node_disjoint(const std::vector<std::vector<bool>>& adj, NodeId s, NodeId t,
                         const std::set<NodeId>& banned);

/// Reference greedy clique, written separately from the membership layer.
std::optional<std::set<NodeId>> reference_greedy_clique(const std::vector<std::vector<bool>>& adj,
                                                        const std::set<NodeId>& vertices, int minimum,
                                                        int cap);

/// Reference binary DECIDE-phase outcome for a validated value multiset.
/// Returns: 'D' decide, 'A' adopt, 'C' coin; decided/adopted bit in *bit.
char reference_decide_outcome(int zeros, int ones, int bots, int quorum, int* bit);

/// Plain-formula mean and 95% t-interval half-width for cross-checking.
void reference_mean_ci(const std::vector<double>& xs, double* mean, double* ci_half);

/// Enumerates all labeled connected graphs on n vertices (adjacency
/// matrices); n <= 6 keeps this tractable.
std::vector<std::vector<std::vector<bool>>> connected_graphs(int n);

}  // namespace oracles
