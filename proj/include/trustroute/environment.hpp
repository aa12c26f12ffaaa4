#pragma once

// Slot engine: topology, demand generation, hop-by-hop forwarding with
// in-slot relaying, compromised-node misbehaviour, and the report -> ledger ->
// trust -> isolation loop.

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "trustroute/adversary.hpp"
#include "trustroute/channel.hpp"
#include "trustroute/geometry.hpp"
#include "trustroute/tpbft.hpp"
#include "trustroute/traffic.hpp"
#include "trustroute/trust.hpp"

namespace trustroute {

enum class DemandMode { Batch, Stream };

// Metric charge for a dropped demand on top of its accumulated delay.
enum class DropCharge {
  RemainingHops,  // T_one_max per estimated unfinished hop
  Horizon,        // plus tau for every slot left until the horizon
};

struct TrafficParams {
  double size_min_bits = 4e5;
  double size_max_bits = 6e5;
  std::size_t c_max = 50;
  double t_one_max = 0.5;
  bool reinject_on_isolation = true;
  std::size_t max_hops_per_slot = 0;  // per demand; 0 means 2N
  DropCharge drop_charge = DropCharge::RemainingHops;

  void validate() const;
};

struct DemandSpec {
  NodeId source = 0;
  NodeId destination = 0;
  double bits = 5e5;
};

struct WorldConfig {
  std::size_t nodes = 20;
  std::size_t demands = 10;  // per episode in batch mode
  DemandMode demand_mode = DemandMode::Batch;
  double demands_per_slot = 1.0;  // stream mode
  SlotConfig slot;
  channel::ChannelParams channel;
  channel::EnergyParams energy;
  TrafficParams traffic;
  AttackConfig attack;
  TrustParams trust;
  ConsensusParams consensus;
  bool btmm = true;
  std::vector<Vec3> fixed_positions;      // static layout when non-empty
  std::vector<DemandSpec> fixed_demands;  // replaces the generated batch when non-empty
  bool record_traces = true;

  void validate() const;
};

// One routing choice: the holder picks a neighbour slot (0..q-1) or hold (q).
struct Decision {
  NodeId node = 0;
  const Demand* demand = nullptr;
  const TopologySnapshot* snap = nullptr;
  std::span<const double> trust;
  std::span<const bool> flagged;
  std::size_t q = 0;
};

struct SlotView {
  Slot slot = 0;         // within the episode
  Slot global_slot = 0;  // since the run started
  const TopologySnapshot* snap = nullptr;
  std::span<const double> trust;
  const std::vector<Demand>* demands = nullptr;
};

struct SlotOutcome {
  Slot slot = 0;
  double reward = 0.0;
  std::span<const HopRecord> hops;
  const std::vector<Demand>* demands = nullptr;
  bool episode_over = false;
};

class RoutingPolicy {
 public:
  virtual ~RoutingPolicy() = default;
  virtual void begin_episode(std::size_t /*episode*/) {}
  virtual void begin_slot(const SlotView& /*view*/) {}
  virtual std::size_t decide(const Decision& d) = 0;
  virtual void end_slot(const SlotOutcome& /*outcome*/) {}
};

// Shortest-delay next hop on the current snapshot avoiding flagged nodes;
// holds when the destination is unreachable.
class OraclePolicy : public RoutingPolicy {
 public:
  std::size_t decide(const Decision& d) override;
};

// Uniform over valid actions.
class RandomPolicy : public RoutingPolicy {
 public:
  explicit RandomPolicy(Rng rng) : rng_(std::move(rng)) {}
  std::size_t decide(const Decision& d) override;

 private:
  Rng rng_;
};

struct EpisodeResult {
  std::size_t episode = 0;
  double reward = 0.0;  // -10 * sum of clipped delays over `hops`, in order
  std::vector<double> slot_rewards;
  std::vector<HopRecord> hops;  // execution order
  std::vector<Demand> demands;
  FlowTrace flow;
  std::vector<QueueSample> queue_samples;
  Slot slots = 0;

  double energy_j = 0.0;
  double mean_queue = 0.0;
  double delivered_bits = 0.0;
  std::size_t delivered = 0;
  std::size_t dropped = 0;
  std::size_t undelivered = 0;
  double mean_delay = 0.0;      // metric delay over all demands of the episode
  double mean_e2e_delay = 0.0;  // end-to-end delay over delivered demands only
  double throughput_bps = 0.0;
  std::size_t commits = 0;
  std::size_t consensus_messages = 0;
  std::size_t rotations = 0;
  std::size_t flagged_total = 0;
};

struct RotationRecord {
  Slot global_slot = 0;
  RotationEvent event;
};

class Simulator {
 public:
  Simulator(WorldConfig cfg, std::uint64_t seed);

  EpisodeResult run_episode(RoutingPolicy& policy);

  const WorldConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t episodes_run() const { return episode_; }
  Slot global_slot() const { return global_slot_; }

  const TrustTable& trust() const { return trust_; }
  const TpbftLedger* ledger() const { return ledger_.get(); }
  const std::vector<bool>& compromised() const { return compromised_; }
  std::vector<NodeId> compromised_ids() const;
  const std::vector<bool>& isolated() const { return isolated_; }
  const std::vector<RotationRecord>& rotations() const { return rotations_; }
  // Topology of the most recent slot.
  const TopologySnapshot& snapshot() const { return snap_; }

  // Global slot (1-based) at which a node was first flagged.
  std::optional<Slot> detection_slot(NodeId i) const;
  // Max over compromised nodes; nullopt if any is still unflagged.
  std::optional<Slot> all_detected_slot() const;

  std::size_t max_hops_per_slot() const;
  double remaining_hop_penalty(NodeId holder, NodeId destination) const;

 private:
  struct SlotScratch;

  void reset_episode();
  void build_snapshot();
  void maybe_trigger_attack();
  std::optional<DemandId> spawn_demand(Slot t, std::optional<DemandSpec> spec, EpisodeResult& out,
                                       SlotScratch& s);
  void route_slot(Slot t, RoutingPolicy& policy, EpisodeResult& out, SlotScratch& s);
  void drop_demand(Demand& d, NodeId at, Slot t, EpisodeResult& out);
  void trust_tick(Slot t, EpisodeResult& out, SlotScratch& s);
  std::vector<double> link_trust() const;

  WorldConfig cfg_;
  std::uint64_t seed_;
  std::size_t episode_ = 0;
  Slot global_slot_ = 0;

  // persists across episodes
  TrustTable trust_;
  std::unique_ptr<TpbftLedger> ledger_;
  std::vector<bool> compromised_;
  std::vector<bool> isolated_;
  bool attack_chosen_ = false;
  std::vector<Rng> attack_rngs_;
  std::vector<Rng> detour_rngs_;  // wrong-path neighbour choice
  Rng trust_rng_;
  std::vector<BehaviorReport> outbox_;
  std::vector<RotationRecord> rotations_;

  // per episode
  Rng mobility_rng_;
  Rng demand_rng_;
  std::vector<NodeState> states_;
  std::vector<FifoQueue> queues_;
  std::vector<Demand> demands_;
  TopologySnapshot snap_;
  std::vector<double> prev_energy_;
};

}  // namespace trustroute
