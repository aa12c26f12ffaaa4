#include "trustroute/marl.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "trustroute/format.hpp"

namespace trustroute {

namespace {

double unit(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

void push_position(Observation& o, const Vec3& p, const Arena& a) {
  o.push_back(unit(p.x, 0.0, a.x_max));
  o.push_back(unit(p.y, 0.0, a.y_max));
  o.push_back(unit(p.z, a.z_min, a.z_max));
}

}  // namespace

Observation build_observation(NodeId i, const TopologySnapshot& snap, std::span<const double> trust,
                              const ObservationConfig& cfg, std::optional<Vec3> destination) {
  const NodeState& self = snap.state(i);
  if (self.is_isolated) throw Isolated("node " + std::to_string(i) + " is isolated");
  Observation o;
  o.reserve(cfg.dimension());
  push_position(o, self.position, cfg.arena);
  o.push_back(std::clamp(static_cast<double>(self.queue_length) / cfg.queue_scale, 0.0, 1.0));
  const auto& gamma = snap.gamma(i);
  for (std::size_t k = 0; k < cfg.q; ++k) {
    if (k < gamma.size()) {
      const NodeState& nb = snap.state(gamma[k]);
      push_position(o, nb.position, cfg.arena);
      o.push_back(std::clamp(static_cast<double>(nb.queue_length) / cfg.queue_scale, 0.0, 1.0));
      o.push_back(std::clamp(nb.energy_used_slot / cfg.energy_scale, 0.0, 1.0));
      o.push_back(std::clamp(trust[gamma[k]], 0.0, 1.0));
    } else {
      o.insert(o.end(), 6, 0.0);
    }
  }
  if (cfg.include_destination) {
    if (destination) {
      push_position(o, *destination, cfg.arena);
    } else {
      o.insert(o.end(), 3, 0.0);
    }
  }
  return o;
}

std::vector<bool> action_mask(NodeId i, const TopologySnapshot& snap, std::size_t q) {
  std::vector<bool> mask(q + 1, false);
  const std::size_t live = std::min(snap.degree(i), q);
  for (std::size_t k = 0; k < live; ++k) mask[k] = true;
  mask[q] = true;
  return mask;
}

std::size_t masked_argmax(std::span<const double> values, const std::vector<bool>& mask) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < values.size() && k < mask.size(); ++k) {
    if (!mask[k]) continue;
    if (!best || values[k] > values[*best]) best = k;
  }
  if (!best) throw DomainError("no valid action");
  return *best;
}

std::size_t select_action(const Mlp& net, std::span<const double> obs, const std::vector<bool>& mask,
                          double epsilon, Rng& rng) {
  const double coin = rng.uniform();
  if (coin < epsilon) {
    std::vector<std::size_t> valid;
    for (std::size_t k = 0; k < mask.size(); ++k) {
      if (mask[k]) valid.push_back(k);
    }
    if (valid.empty()) throw DomainError("no valid action");
    return valid[rng.below(valid.size())];
  }
  const auto q = net.forward(obs);
  return masked_argmax(q, mask);
}

double clipped_delay_sum(std::span<const HopRecord> hops, double t_one_max) {
  double s = 0.0;
  for (const auto& h : hops) s += std::min(h.delay(), t_one_max);
  return s;
}

double reward(std::span<const HopRecord> hops, double t_one_max) {
  return -10.0 * clipped_delay_sum(hops, t_one_max);
}

double dqn_target(double r, double gamma, const Mlp& target_net, std::span<const double> next_obs,
                  const std::vector<bool>& next_mask, bool terminal) {
  if (terminal) return r;
  const auto q = target_net.forward(next_obs);
  return r + gamma * q[masked_argmax(q, next_mask)];
}

double ddqn_target(double r, double gamma, const Mlp& online_net, const Mlp& target_net,
                   std::span<const double> next_obs, const std::vector<bool>& next_mask,
                   bool terminal) {
  if (terminal) return r;
  const auto a_star = masked_argmax(online_net.forward(next_obs), next_mask);
  return r + gamma * target_net.forward(next_obs)[a_star];
}

void ReplayBuffer::push(Transition t) {
  if (capacity_ == 0) return;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  std::vector<std::size_t> idx(batch);
  for (auto& k : idx) k = static_cast<std::size_t>(rng.below(items_.size()));
  return idx;
}

void AgentHyper::validate() const {
  if (!(alpha > 0.0)) throw ValidationError("rl.alpha must be > 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("rl.gamma must lie in (0, 1)");
  if (!(eps_start >= 0.0 && eps_start <= 1.0)) throw ValidationError("rl.eps_start must lie in [0, 1]");
  if (!(eps_end >= 0.0 && eps_end <= 1.0)) throw ValidationError("rl.eps_end must lie in [0, 1]");
  if (!(eps_decay_fraction > 0.0 && eps_decay_fraction <= 1.0)) {
    throw ValidationError("rl.eps_decay_fraction must lie in (0, 1]");
  }
  if (target_sync < 1) throw ValidationError("rl.target_sync must be >= 1");
  if (batch < 1) throw ValidationError("rl.batch must be >= 1");
  if (buffer_capacity <= batch) throw ValidationError("rl.buffer_capacity must exceed rl.batch");
  for (auto h : hidden) {
    if (h < 1) throw ValidationError("rl.hidden widths must be >= 1");
  }
}

double epsilon_at(std::size_t episode, std::size_t total_episodes, const AgentHyper& h) {
  const double span = std::max(1.0, h.eps_decay_fraction * static_cast<double>(total_episodes));
  const double progress = static_cast<double>(episode) / span;
  if (progress >= 1.0) return h.eps_end;
  if (h.eps_start <= 0.0) return h.eps_end;
  // A zero end value decays towards a small floor and snaps to zero once the
  // decay window closes.
  const double end = h.eps_end > 0.0 ? h.eps_end : 1e-3 * h.eps_start;
  return h.eps_start * std::pow(end / h.eps_start, progress);
}

Agent::Agent(std::size_t obs_dim, std::size_t actions, const AgentHyper& h, Rng& init_rng)
    : buffer(h.buffer_capacity) {
  std::vector<std::size_t> sizes{obs_dim};
  sizes.insert(sizes.end(), h.hidden.begin(), h.hidden.end());
  sizes.push_back(actions);
  online = Mlp(sizes);
  online.init(init_rng);
  target = online;
}

double train_step(Agent& agent, const AgentHyper& h, TargetRule rule, Rng& rng) {
  if (agent.buffer.size() <= h.batch) {
    throw BufferTooSmall("replay holds " + std::to_string(agent.buffer.size()) +
                         " transitions, need more than " + std::to_string(h.batch));
  }
  const auto idx = agent.buffer.sample_indices(h.batch, rng);
  std::vector<BatchItem> batch;
  batch.reserve(idx.size());
  for (std::size_t k : idx) {
    const Transition& t = agent.buffer.at(k);
    const double y = rule == TargetRule::DoubleDqn
                         ? ddqn_target(t.reward, h.gamma, agent.online, agent.target, t.next_obs,
                                       t.next_mask, t.terminal)
                         : dqn_target(t.reward, h.gamma, agent.target, t.next_obs, t.next_mask,
                                      t.terminal);
    batch.push_back({t.obs, t.action, y});
  }
  std::vector<double> grad;
  const double loss = agent.online.loss_and_gradient(batch, grad);
  agent.online.sgd_step(grad, h.alpha);
  ++agent.train_steps;
  if (agent.train_steps % h.target_sync == 0) agent.target = agent.online;
  return loss;
}

namespace {

constexpr const char* kCheckpointMagic = "trustroute-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_params(std::ostream& os, const char* tag, const Mlp& net) {
  os << tag << ' ' << net.num_params();
  for (double v : net.params()) os << ' ' << format_exact(v);
  os << '\n';
}

void read_params(std::istream& is, const char* tag, Mlp& net) {
  std::string word;
  std::size_t count = 0;
  if (!(is >> word >> count) || word != tag || count != net.num_params()) {
    throw ParseError(std::string("checkpoint: expected '") + tag + "' with " +
                     std::to_string(net.num_params()) + " values");
  }
  for (auto& v : net.params()) {
    std::string tok;
    if (!(is >> tok)) throw ParseError("checkpoint: truncated parameter list");
    v = parse_double(tok);
  }
}

}  // namespace

void save_checkpoint(std::ostream& os, std::span<const Agent> agents) {
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "agents " << agents.size() << '\n';
  for (std::size_t k = 0; k < agents.size(); ++k) {
    const auto& sizes = agents[k].online.sizes();
    os << "agent " << k << " steps " << agents[k].train_steps << " layout " << sizes.size();
    for (auto s : sizes) os << ' ' << s;
    os << '\n';
    write_params(os, "online", agents[k].online);
    write_params(os, "target", agents[k].target);
  }
}

std::vector<Agent> load_checkpoint(std::istream& is, const AgentHyper& h) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kCheckpointMagic) throw ParseError("not a checkpoint file");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  std::string word;
  std::size_t count = 0;
  if (!(is >> word >> count) || word != "agents") throw ParseError("checkpoint: missing agent count");
  std::vector<Agent> agents;
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t id = 0;
    std::size_t steps = 0;
    std::size_t layers = 0;
    std::string w_steps;
    std::string w_layout;
    if (!(is >> word >> id >> w_steps >> steps >> w_layout >> layers) || word != "agent" ||
        w_steps != "steps" || w_layout != "layout" || id != k) {
      throw ParseError("checkpoint: bad agent header " + std::to_string(k));
    }
    std::vector<std::size_t> sizes(layers);
    for (auto& s : sizes) {
      if (!(is >> s)) throw ParseError("checkpoint: bad layout");
    }
    Agent a;
    a.buffer = ReplayBuffer(h.buffer_capacity);
    a.online = Mlp(sizes);
    a.target = Mlp(sizes);
    a.train_steps = steps;
    read_params(is, "online", a.online);
    read_params(is, "target", a.target);
    agents.push_back(std::move(a));
  }
  return agents;
}

}  // namespace trustroute
