#pragma once

// Importance-ranked target selection and probabilistic misbehaviour of
// compromised relays.

#include <span>
#include <vector>

#include "trustroute/core.hpp"
#include "trustroute/geometry.hpp"

namespace trustroute {

struct AttackConfig {
  std::size_t f = 2;
  double p1 = 0.5;  // probability a compromised relay delivers
  double p2 = 0.5;  // probability it follows the specified next hop
  Slot trigger_slot = 0;

  void validate() const;
};

using Adjacency = std::vector<std::vector<NodeId>>;

Adjacency adjacency_of(const TopologySnapshot& snap);

// Number of triangles through edge (i, j).
std::size_t common_neighbors(const Adjacency& g, NodeId i, NodeId j);

double link_weight(const Adjacency& g, NodeId i, NodeId j);
double link_weight(NodeId i, NodeId j, const TopologySnapshot& snap);

struct ImportanceScore {
  NodeId node = 0;
  double lambda = 0.0;
};

double node_importance(const Adjacency& g, NodeId i);
ImportanceScore node_importance(NodeId i, const TopologySnapshot& snap);

std::vector<ImportanceScore> importance_scores(const TopologySnapshot& snap);

// The f highest-importance nodes not already compromised; ties by lower id.
std::vector<NodeId> select_attack_targets(std::span<const ImportanceScore> scores, std::size_t f,
                                          std::span<const NodeId> already_compromised = {});

enum class ForwardDecision { Correct, Drop, WrongPath };

ForwardDecision malicious_forward_decision(const AttackConfig& cfg, Rng& rng);

}  // namespace trustroute
