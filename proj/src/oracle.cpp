#include "trustroute/oracle.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include "trustroute/core.hpp"

namespace trustroute {

RoutePlan oracle_shortest_delay(const TopologySnapshot& snap, NodeId source, NodeId destination,
                                double bits, std::span<const bool> excluded) {
  const std::size_t n = snap.size();
  auto banned = [&](NodeId v) {
    return snap.state(v).is_isolated || (v < excluded.size() && excluded[v]);
  };
  if (source >= n || destination >= n || banned(source) || banned(destination)) {
    throw Unreachable("endpoint excluded or isolated");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<NodeId> parent(n, source);
  std::vector<bool> done(n, false);
  using Entry = std::pair<double, NodeId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
  dist[source] = 0.0;
  frontier.push({0.0, source});
  while (!frontier.empty()) {
    const auto [d, u] = frontier.top();
    frontier.pop();
    if (done[u]) continue;
    done[u] = true;
    if (u == destination) break;
    for (NodeId v : snap.gamma(u)) {
      if (banned(v) || done[v]) continue;
      const double w = bits / snap.rate(u, v);
      const double nd = d + w;
      if (nd < dist[v] || (nd == dist[v] && u < parent[v])) {
        dist[v] = nd;
        parent[v] = u;
        frontier.push({nd, v});
      }
    }
  }
  if (dist[destination] == kInf) {
    throw Unreachable("no honest path from " + std::to_string(source) + " to " +
                      std::to_string(destination));
  }
  RoutePlan plan;
  plan.delay = dist[destination];
  for (NodeId v = destination; v != source; v = parent[v]) plan.path.push_back(v);
  plan.path.push_back(source);
  std::reverse(plan.path.begin(), plan.path.end());
  return plan;
}

}  // namespace trustroute
