#pragma once

#include <vector>

#include "idlink/graph.hpp"
#include "idlink/rng.hpp"

namespace idlink::testing {

inline Graph complete_graph(NodeId n) {
  std::vector<Edge> e;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v) e.push_back({u, v});
  return Graph(n, e);
}

inline Graph path_graph(NodeId n) {
  std::vector<Edge> e;
  for (NodeId u = 0; u + 1 < n; ++u) e.push_back({u, u + 1});
  return Graph(n, e);
}

inline Graph two_triangles() { return Graph(6, {{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}}); }

/// Two m-cliques on [0, m) and [m, 2m), joined by a path with `inner` intermediate nodes
/// (inner = 0 is a single bridge edge between node m-1 and node m).
inline Graph barbell(NodeId m, NodeId inner = 0) {
  const NodeId n = 2 * m + inner;
  std::vector<Edge> e;
  for (NodeId u = 0; u < m; ++u)
    for (NodeId v = u + 1; v < m; ++v) {
      e.push_back({u, v});
      e.push_back({u + m + inner, v + m + inner});
    }
  NodeId prev = m - 1;
  for (NodeId k = 0; k < inner; ++k) {
    e.push_back(make_edge(prev, m + k));
    prev = m + k;
  }
  e.push_back(make_edge(prev, m + inner));
  return Graph(n, e);
}

inline Graph random_graph(NodeId n, double p, Seed seed) {
  Rng rng = make_rng(seed);
  std::vector<Edge> e;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (uniform01(rng) < p) e.push_back({u, v});
  return Graph(n, e);
}

}  // namespace idlink::testing
