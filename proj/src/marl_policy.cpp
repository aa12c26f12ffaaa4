#include "trustroute/marl_policy.hpp"

#include <string>

namespace trustroute {

MarlPolicy::MarlPolicy(const WorldConfig& world, MarlConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), q_(world.slot.q) {
  cfg_.hyper.validate();
  obs_cfg_.q = world.slot.q;
  obs_cfg_.include_destination = cfg_.obs_destination;
  obs_cfg_.arena = world.slot.arena;
  obs_cfg_.queue_scale = static_cast<double>(world.traffic.c_max);
  obs_cfg_.energy_scale = world.energy.beta * world.energy.e_max;

  const std::size_t count = cfg_.share_parameters ? 1 : world.nodes;
  for (std::size_t k = 0; k < count; ++k) {
    Rng init = Rng::stream(seed, "agent-init", k);
    agents_.emplace_back(obs_cfg_.dimension(), q_ + 1, cfg_.hyper, init);
    replay_rngs_.push_back(Rng::stream(seed, "replay", k));
  }
  for (std::size_t i = 0; i < world.nodes; ++i) explore_rngs_.push_back(Rng::stream(seed, "epsilon", i));
  decisions_this_slot_.assign(count, 0);
}

double MarlPolicy::epsilon() const {
  return training_ ? epsilon_at(episode_, cfg_.total_episodes, cfg_.hyper) : 0.0;
}

std::size_t MarlPolicy::train_steps() const {
  std::size_t total = 0;
  for (const auto& a : agents_) total += a.train_steps;
  return total;
}

void MarlPolicy::begin_episode(std::size_t episode) {
  episode_ = episode;
  open_.clear();
  closed_.clear();
}

void MarlPolicy::begin_slot(const SlotView& view) { slot_ = view.slot; }

std::size_t MarlPolicy::decide(const Decision& d) {
  const std::size_t k = agent_index(d.node);
  const Vec3 dest = d.snap->state(d.demand->destination).position;
  Observation obs = build_observation(d.node, *d.snap, d.trust, obs_cfg_, dest);
  auto mask = action_mask(d.node, *d.snap, q_);
  const std::size_t action =
      select_action(agents_[k].online, obs, mask, epsilon(), explore_rngs_[d.node]);
  if (!training_) return action;

  auto it = open_.find(d.demand->id);
  if (it != open_.end()) {
    Pending prev = std::move(it->second);
    prev.next_obs = obs;
    prev.next_mask = mask;
    prev.terminal = false;
    closed_.push_back(std::move(prev));
    open_.erase(it);
  }
  Pending p;
  p.agent = k;
  p.obs = std::move(obs);
  p.action = action;
  p.slot = slot_;
  open_.emplace(d.demand->id, std::move(p));
  ++decisions_this_slot_[k];
  return action;
}

void MarlPolicy::end_slot(const SlotOutcome& outcome) {
  if (!training_) return;
  for (auto& p : closed_) {
    if (!p.reward && p.slot == outcome.slot) p.reward = outcome.reward;
  }
  for (auto it = open_.begin(); it != open_.end();) {
    Pending& p = it->second;
    if (!p.reward && p.slot == outcome.slot) p.reward = outcome.reward;
    const bool resolved = (*outcome.demands)[it->first].status != DemandStatus::InFlight;
    if (resolved || outcome.episode_over) {
      p.next_obs = Observation(obs_cfg_.dimension(), 0.0);
      p.next_mask.assign(q_ + 1, false);
      p.next_mask[q_] = true;
      p.terminal = true;
      closed_.push_back(std::move(p));
      it = open_.erase(it);
    } else {
      ++it;
    }
  }
  flush_ready();

  for (std::size_t k = 0; k < agents_.size(); ++k) {
    for (std::size_t s = 0; s < decisions_this_slot_[k]; ++s) {
      if (agents_[k].buffer.size() <= cfg_.hyper.batch) break;
      last_loss_ = train_step(agents_[k], cfg_.hyper, cfg_.rule, replay_rngs_[k]);
    }
    decisions_this_slot_[k] = 0;
  }
}

void MarlPolicy::flush_ready() {
  std::vector<Pending> waiting;
  for (auto& p : closed_) {
    if (!p.reward) {
      waiting.push_back(std::move(p));
      continue;
    }
    Transition t;
    t.obs = std::move(p.obs);
    t.action = p.action;
    t.reward = *p.reward;
    t.next_obs = std::move(*p.next_obs);
    t.next_mask = std::move(p.next_mask);
    t.terminal = p.terminal;
    agents_[p.agent].buffer.push(std::move(t));
  }
  closed_ = std::move(waiting);
}

void MarlPolicy::save(std::ostream& os) const { save_checkpoint(os, agents_); }

void MarlPolicy::load(std::istream& is) {
  auto loaded = load_checkpoint(is, cfg_.hyper);
  if (loaded.size() != agents_.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(loaded.size()) + " agents, run needs " +
                          std::to_string(agents_.size()));
  }
  for (std::size_t k = 0; k < loaded.size(); ++k) {
    if (loaded[k].online.sizes() != agents_[k].online.sizes()) {
      throw ValidationError("checkpoint layout of agent " + std::to_string(k) +
                            " does not match the configured network");
    }
  }
  agents_ = std::move(loaded);
}

}  // namespace trustroute
