#pragma once

// Shortest-delay reference routes on a frozen snapshot (empty queues).

#include <span>
#include <vector>

#include "trustroute/geometry.hpp"

namespace trustroute {

struct RoutePlan {
  std::vector<NodeId> path;  // source first, destination last
  double delay = 0.0;
};

// Dijkstra with edge weight bits / rate(i, j). Nodes marked in `excluded`
// (flagged or known-malicious) are never used as relays or endpoints.
// Throws Unreachable.
RoutePlan oracle_shortest_delay(const TopologySnapshot& snap, NodeId source, NodeId destination,
                                double bits, std::span<const bool> excluded = {});

}  // namespace trustroute
