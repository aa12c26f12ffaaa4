#include "trustroute/adversary.hpp"

#include <algorithm>

namespace trustroute {

void AttackConfig::validate() const {
  if (!(p1 >= 0.0 && p1 <= 1.0)) throw ValidationError("attack.p1 must lie in [0, 1]");
  if (!(p2 >= 0.0 && p2 <= 1.0)) throw ValidationError("attack.p2 must lie in [0, 1]");
}

Adjacency adjacency_of(const TopologySnapshot& snap) {
  Adjacency g(snap.size());
  for (NodeId i = 0; i < snap.size(); ++i) g[i] = snap.gamma(i);
  return g;
}

namespace {

bool has_edge(const Adjacency& g, NodeId a, NodeId b) {
  const auto& n = g[a];
  return std::find(n.begin(), n.end(), b) != n.end();
}

}  // namespace

std::size_t common_neighbors(const Adjacency& g, NodeId i, NodeId j) {
  std::size_t m = 0;
  for (NodeId k : g[i]) {
    if (k != j && has_edge(g, j, k)) ++m;
  }
  return m;
}

double link_weight(const Adjacency& g, NodeId i, NodeId j) {
  const double m = static_cast<double>(common_neighbors(g, i, j));
  const double zi = static_cast<double>(g[i].size());
  const double zj = static_cast<double>(g[j].size());
  const double z = (zi - m - 1.0) * (zj - m - 1.0);
  return z * 2.0 / (m + 2.0);
}

double link_weight(NodeId i, NodeId j, const TopologySnapshot& snap) {
  return link_weight(adjacency_of(snap), i, j);
}

double node_importance(const Adjacency& g, NodeId i) {
  const double zi = static_cast<double>(g[i].size());
  if (g[i].empty()) return 0.0;
  double lambda = zi;
  for (NodeId j : g[i]) {
    const double zj = static_cast<double>(g[j].size());
    const double denom = zi + zj - 2.0;
    const double correction = denom > 0.0 ? (zj - 1.0) / denom : 0.0;
    lambda += link_weight(g, i, j) * (1.0 - correction);
  }
  return lambda;
}

ImportanceScore node_importance(NodeId i, const TopologySnapshot& snap) {
  if (snap.state(i).is_isolated) return {i, 0.0};
  return {i, node_importance(adjacency_of(snap), i)};
}

std::vector<ImportanceScore> importance_scores(const TopologySnapshot& snap) {
  const auto g = adjacency_of(snap);
  std::vector<ImportanceScore> out;
  out.reserve(snap.size());
  for (NodeId i = 0; i < snap.size(); ++i) {
    out.push_back({i, snap.state(i).is_isolated ? 0.0 : node_importance(g, i)});
  }
  return out;
}

std::vector<NodeId> select_attack_targets(std::span<const ImportanceScore> scores, std::size_t f,
                                          std::span<const NodeId> already_compromised) {
  std::vector<ImportanceScore> ranked;
  for (const auto& s : scores) {
    if (std::find(already_compromised.begin(), already_compromised.end(), s.node) ==
        already_compromised.end()) {
      ranked.push_back(s);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const ImportanceScore& a, const ImportanceScore& b) {
    return a.lambda != b.lambda ? a.lambda > b.lambda : a.node < b.node;
  });
  std::vector<NodeId> out;
  for (std::size_t k = 0; k < ranked.size() && k < f; ++k) out.push_back(ranked[k].node);
  return out;
}

ForwardDecision malicious_forward_decision(const AttackConfig& cfg, Rng& rng) {
  // Always two draws, so runs that differ only in (p1, p2) see the same stream.
  const double u_deliver = rng.uniform();
  const double u_path = rng.uniform();
  if (u_deliver >= cfg.p1) return ForwardDecision::Drop;
  if (u_path >= cfg.p2) return ForwardDecision::WrongPath;
  return ForwardDecision::Correct;
}

}  // namespace trustroute
