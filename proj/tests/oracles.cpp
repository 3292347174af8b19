#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace oracles {

int max_disjoint_bruteforce(const std::vector<std::set<NodeId>>& paths) {
  const int n = static_cast<int>(paths.size());
  int best = 0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    std::set<NodeId> used;
    bool ok = true;
    int count = 0;
    bool direct_taken = false;
    for (int i = 0; i < n && ok; ++i) {
      if (!(mask & (1 << i))) continue;
      if (paths[i].empty()) {
        if (direct_taken) ok = false;  // the direct link is a single path
        direct_taken = true;
        ++count;
        continue;
      }
      for (NodeId v : paths[i]) {
        if (!used.insert(v).second) {
          ok = false;
          break;
        }
      }
      if (ok) ++count;
    }
    if (ok) best = std::max(best, count);
  }
  return best;
}

int menger_node_disjoint(const std::vector<std::vector<bool>>& adj, NodeId s, NodeId t,
                         const std::set<NodeId>& banned) {
  const int n = static_cast<int>(adj.size());
  if (s == t) return 0;
  // node splitting: in(v) = 2v, out(v) = 2v+1; cap 1 on v_in->v_out except s,t
  const int N = 2 * n;
  std::vector<std::vector<int>> cap(N, std::vector<int>(N, 0));
  for (int v = 0; v < n; ++v) {
    if (banned.count(static_cast<NodeId>(v)) && v != static_cast<int>(s) && v != static_cast<int>(t))
      continue;  // banned relays have no capacity at all
    cap[2 * v][2 * v + 1] = (v == static_cast<int>(s) || v == static_cast<int>(t)) ? n : 1;
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (!adj[a][b]) continue;
      cap[2 * a + 1][2 * b] = n;  // edges unconstrained, nodes constrained
    }
  }
  int flow = 0;
  const int src = 2 * static_cast<int>(s), dst = 2 * static_cast<int>(t) + 1;
  for (;;) {
    std::vector<int> parent(N, -1);
    parent[src] = src;
    std::queue<int> q;
    q.push(src);
    while (!q.empty() && parent[dst] < 0) {
      int u = q.front();
      q.pop();
      for (int v = 0; v < N; ++v) {
        if (parent[v] < 0 && cap[u][v] > 0) {
          parent[v] = u;
          q.push(v);
        }
      }
    }
    if (parent[dst] < 0) break;
    for (int v = dst; v != src; v = parent[v]) {
      cap[parent[v]][v] -= 1;
      cap[v][parent[v]] += 1;
    }
    ++flow;
  }
  return flow;
}

std::optional<std::set<NodeId>> reference_greedy_clique(const std::vector<std::vector<bool>>& adj,
                                                        const std::set<NodeId>& vertices, int minimum,
                                                        int cap) {
  for (NodeId seed : vertices) {
    std::set<NodeId> clique{seed};
    bool grew = true;
    while (grew && (cap <= 0 || static_cast<int>(clique.size()) < cap)) {
      grew = false;
      for (NodeId v : vertices) {
        if (clique.count(v)) continue;
        bool all = true;
        for (NodeId c : clique) {
          if (!adj[v][c] || !adj[c][v]) {
            all = false;
            break;
          }
        }
        if (all) {
          clique.insert(v);
          grew = true;
          break;
        }
      }
    }
    if (static_cast<int>(clique.size()) >= minimum) return clique;
  }
  return std::nullopt;
}

char reference_decide_outcome(int zeros, int ones, int bots, int quorum, int* bit) {
  (void)bots;
  if (zeros >= quorum) {
    *bit = 0;
    return 'D';
  }
  if (ones >= quorum) {
    *bit = 1;
    return 'D';
  }
  if (zeros > 0) {
    *bit = 0;
    return 'A';
  }
  if (ones > 0) {
    *bit = 1;
    return 'A';
  }
  return 'C';
}

void reference_mean_ci(const std::vector<double>& xs, double* mean, double* ci_half) {
  double sum = 0;
  for (double x : xs) sum += x;
  *mean = sum / xs.size();
  double ss = 0;
  for (double x : xs) ss += (x - *mean) * (x - *mean);
  double sd = std::sqrt(ss / (xs.size() - 1));
  // hand-checked quantiles for the sizes the tests use
  double t = 0;
  switch (xs.size() - 1) {
    case 4: t = 2.7764; break;
    case 9: t = 2.2622; break;
    case 29: t = 2.0452; break;
    default: t = 1.96; break;
  }
  *ci_half = t * sd / std::sqrt(static_cast<double>(xs.size()));
}

std::vector<std::vector<std::vector<bool>>> connected_graphs(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) edges.push_back({a, b});
  const int m = static_cast<int>(edges.size());
  std::vector<std::vector<std::vector<bool>>> out;
  for (long mask = 0; mask < (1L << m); ++mask) {
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    for (int e = 0; e < m; ++e) {
      if (mask & (1L << e)) {
        adj[edges[e].first][edges[e].second] = true;
        adj[edges[e].second][edges[e].first] = true;
      }
    }
    // connectivity
    std::vector<bool> seen(n, false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    int visited = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v = 0; v < n; ++v) {
        if (adj[u][v] && !seen[v]) {
          seen[v] = true;
          ++visited;
          q.push(v);
        }
      }
    }
    if (visited == n) out.push_back(std::move(adj));
  }
  return out;
}

}  // namespace oracles
