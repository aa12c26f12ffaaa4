#pragma once

// Observations, masked epsilon-greedy action selection, delay-based reward,
// replay buffers and DQN / Double-DQN learners.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustroute/core.hpp"
#include "trustroute/geometry.hpp"
#include "trustroute/nn.hpp"
#include "trustroute/traffic.hpp"

namespace trustroute {

struct ObservationConfig {
  std::size_t q = 4;
  bool include_destination = true;
  Arena arena;
  double queue_scale = 50.0;     // C_max
  double energy_scale = 3500.0;  // beta * E_max

  std::size_t dimension() const { return 4 + 6 * q + (include_destination ? 3 : 0); }
};

using Observation = std::vector<double>;

// Own position and queue, then one 6-wide block per neighbour slot (zeros when
// absent), then optionally the destination position of the demand in hand.
Observation build_observation(NodeId i, const TopologySnapshot& snap, std::span<const double> trust,
                              const ObservationConfig& cfg,
                              std::optional<Vec3> destination = std::nullopt);

// q neighbour slots then the hold action (always valid).
std::vector<bool> action_mask(NodeId i, const TopologySnapshot& snap, std::size_t q);

std::size_t masked_argmax(std::span<const double> values, const std::vector<bool>& mask);

std::size_t select_action(const Mlp& net, std::span<const double> obs, const std::vector<bool>& mask,
                          double epsilon, Rng& rng);

// -10 * sum of per-hop delays clipped at t_one_max, in record order.
double reward(std::span<const HopRecord> hops, double t_one_max);
double clipped_delay_sum(std::span<const HopRecord> hops, double t_one_max);

double dqn_target(double r, double gamma, const Mlp& target_net, std::span<const double> next_obs,
                  const std::vector<bool>& next_mask, bool terminal);
double ddqn_target(double r, double gamma, const Mlp& online_net, const Mlp& target_net,
                   std::span<const double> next_obs, const std::vector<bool>& next_mask,
                   bool terminal);

struct Transition {
  Observation obs;
  std::size_t action = 0;
  double reward = 0.0;
  Observation next_obs;
  std::vector<bool> next_mask;
  bool terminal = true;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {}

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t k) const { return items_.at(k); }

  // B indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> items_;
};

enum class TargetRule { Dqn, DoubleDqn };

struct AgentHyper {
  double alpha = 1e-4;
  double gamma = 0.9;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.5;
  std::size_t target_sync = 200;
  std::size_t batch = 64;
  std::size_t buffer_capacity = 100000;
  std::vector<std::size_t> hidden{64, 64};

  void validate() const;
};

// Exponential decay from eps_start to eps_end over the first
// eps_decay_fraction of the episodes, then flat.
double epsilon_at(std::size_t episode, std::size_t total_episodes, const AgentHyper& h);

struct Agent {
  Mlp online;
  Mlp target;
  ReplayBuffer buffer;
  std::size_t train_steps = 0;

  Agent() = default;
  Agent(std::size_t obs_dim, std::size_t actions, const AgentHyper& h, Rng& init_rng);
};

// One gradient step on a uniform minibatch; syncs the target every W steps.
double train_step(Agent& agent, const AgentHyper& h, TargetRule rule, Rng& rng);

// Checkpoints: versioned text with a layout header and exact parameter values.
void save_checkpoint(std::ostream& os, std::span<const Agent> agents);
std::vector<Agent> load_checkpoint(std::istream& is, const AgentHyper& h);

}  // namespace trustroute
