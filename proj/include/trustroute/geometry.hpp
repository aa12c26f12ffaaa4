#pragma once

// Geometry, mobility and per-slot topology construction.

#include <span>
#include <vector>

#include "trustroute/channel.hpp"
#include "trustroute/core.hpp"

namespace trustroute {

struct Arena {
  double x_max = 1500.0;
  double y_max = 1500.0;
  double z_min = 120.0;
  double z_max = 140.0;

  bool contains(const Vec3& p) const {
    return p.x >= 0.0 && p.x <= x_max && p.y >= 0.0 && p.y <= y_max && p.z >= z_min &&
           p.z <= z_max;
  }
};

struct SlotConfig {
  double tau = 1.0;          // s
  Slot horizon = 20;         // slots per episode
  double d_max = 450.0;      // m
  double d_min = 10.0;       // m
  std::size_t q = 4;         // max links per node
  double speed = 3.0;        // m/s
  Arena arena;

  void validate() const;
};

struct NodeState {
  NodeId id = 0;
  Vec3 position;
  Vec3 velocity;
  std::size_t queue_length = 0;
  double energy_used_slot = 0.0;
  bool is_malicious = false;
  bool is_isolated = false;
};

class TopologySnapshot {
 public:
  TopologySnapshot() = default;
  TopologySnapshot(Slot slot, std::vector<NodeState> states);

  Slot slot() const { return slot_; }
  std::size_t size() const { return states_.size(); }
  const std::vector<NodeState>& states() const { return states_; }
  const NodeState& state(NodeId i) const { return states_.at(i); }

  // Active neighbours of i, nearest first.
  const std::vector<NodeId>& gamma(NodeId i) const { return gamma_.at(i); }
  bool linked(NodeId i, NodeId j) const;
  // 0 when no link.
  double rate(NodeId i, NodeId j) const { return rates_[i * states_.size() + j]; }
  double distance(NodeId i, NodeId j) const;
  std::size_t degree(NodeId i) const { return gamma_.at(i).size(); }

  void set_links(std::vector<std::vector<NodeId>> gamma, std::vector<double> rates);

 private:
  Slot slot_ = 0;
  std::vector<NodeState> states_;
  std::vector<std::vector<NodeId>> gamma_;
  std::vector<double> rates_;
};

double distance(const Vec3& a, const Vec3& b);

// Throws SafetyViolation when any pair is closer than d_min.
void check_separation(std::span<const NodeState> states, double d_min);

// K_i: every other node within d_max (inclusive). Throws SafetyViolation if a
// pair involving i is closer than d_min.
std::vector<NodeId> candidate_neighbors(NodeId i, std::span<const NodeState> states,
                                        const SlotConfig& cfg);

// Drops candidates below the trust threshold or already isolated, then keeps the
// q nearest (ties: lower id).
std::vector<NodeId> select_links(NodeId i, std::span<const NodeId> candidates,
                                 std::span<const NodeState> states, std::span<const double> trust,
                                 std::size_t q, double threshold);

// Moves one node along its current velocity for one slot, reflecting at the
// arena walls.
NodeState advance_position(const NodeState& s, const SlotConfig& cfg);

// Fresh random heading per node at constant speed, then advance. Retries the
// whole step until the separation constraint holds.
std::vector<NodeState> step_mobility(std::span<const NodeState> states, const SlotConfig& cfg,
                                     Rng& rng, int max_attempts = 100);

std::vector<NodeState> place_nodes(std::size_t n, const SlotConfig& cfg, Rng& rng,
                                   int max_attempts = 100);

TopologySnapshot build_topology(Slot slot, std::vector<NodeState> states,
                                std::span<const double> trust, double threshold,
                                const SlotConfig& cfg, const channel::ChannelParams& ch);

// In-range graph (distance only, isolated nodes excluded): component label per node.
std::vector<std::size_t> range_components(std::span<const NodeState> states, double d_max);

}  // namespace trustroute
