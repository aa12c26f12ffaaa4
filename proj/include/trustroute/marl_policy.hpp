#pragma once

// Learning routing policy: one value-network agent per node choosing the next
// hop for each demand it holds, trained from shared slot rewards.

#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "trustroute/environment.hpp"
#include "trustroute/marl.hpp"

namespace trustroute {

struct MarlConfig {
  AgentHyper hyper;
  TargetRule rule = TargetRule::DoubleDqn;
  bool obs_destination = true;
  bool share_parameters = false;
  std::size_t total_episodes = 1000;  // drives the epsilon schedule
};

class MarlPolicy : public RoutingPolicy {
 public:
  MarlPolicy(const WorldConfig& world, MarlConfig cfg, std::uint64_t seed);

  void begin_episode(std::size_t episode) override;
  void begin_slot(const SlotView& view) override;
  std::size_t decide(const Decision& d) override;
  void end_slot(const SlotOutcome& outcome) override;

  // Greedy, no exploration and no learning.
  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  double epsilon() const;
  std::size_t episode() const { return episode_; }
  const std::vector<Agent>& agents() const { return agents_; }
  std::vector<Agent>& agents() { return agents_; }
  std::size_t agent_index(NodeId node) const { return cfg_.share_parameters ? 0 : node; }
  std::size_t observation_size() const { return obs_cfg_.dimension(); }
  std::size_t train_steps() const;
  double last_loss() const { return last_loss_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  struct Pending {
    std::size_t agent = 0;
    Observation obs;
    std::size_t action = 0;
    Slot slot = 0;
    std::optional<double> reward;
    std::optional<Observation> next_obs;
    std::vector<bool> next_mask;
    bool terminal = false;
  };

  void flush_ready();

  MarlConfig cfg_;
  ObservationConfig obs_cfg_;
  std::size_t q_;
  std::vector<Agent> agents_;
  std::vector<Rng> explore_rngs_;
  std::vector<Rng> replay_rngs_;
  bool training_ = true;
  std::size_t episode_ = 0;
  Slot slot_ = 0;
  std::map<DemandId, Pending> open_;  // latest decision per demand, not yet superseded
  std::vector<Pending> closed_;       // superseded or terminal, awaiting reward
  std::vector<std::size_t> decisions_this_slot_;
  double last_loss_ = 0.0;
};

}  // namespace trustroute
