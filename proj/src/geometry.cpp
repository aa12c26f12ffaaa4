#include "trustroute/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace trustroute {

void SlotConfig::validate() const {
  if (!(tau > 0.0)) throw ValidationError("slot.tau must be > 0");
  if (!(d_min > 0.0 && d_min < d_max)) throw ValidationError("slot requires 0 < d_min < d_max");
  if (q < 1) throw ValidationError("slot.q must be >= 1");
  if (horizon < 1) throw ValidationError("slot.horizon must be >= 1");
  if (speed < 0.0) throw ValidationError("slot.speed must be >= 0");
  if (!(arena.x_max > 0.0 && arena.y_max > 0.0 && arena.z_max >= arena.z_min)) {
    throw ValidationError("slot.arena bounds are inconsistent");
  }
}

TopologySnapshot::TopologySnapshot(Slot slot, std::vector<NodeState> states)
    : slot_(slot),
      states_(std::move(states)),
      gamma_(states_.size()),
      rates_(states_.size() * states_.size(), 0.0) {}

bool TopologySnapshot::linked(NodeId i, NodeId j) const { return rate(i, j) > 0.0; }

double TopologySnapshot::distance(NodeId i, NodeId j) const {
  return trustroute::distance(states_.at(i).position, states_.at(j).position);
}

void TopologySnapshot::set_links(std::vector<std::vector<NodeId>> gamma, std::vector<double> rates) {
  gamma_ = std::move(gamma);
  rates_ = std::move(rates);
}

double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

void check_separation(std::span<const NodeState> states, double d_min) {
  for (std::size_t a = 0; a < states.size(); ++a) {
    for (std::size_t b = a + 1; b < states.size(); ++b) {
      const double d = distance(states[a].position, states[b].position);
      if (d < d_min) {
        throw SafetyViolation("nodes " + std::to_string(states[a].id) + " and " +
                              std::to_string(states[b].id) + " are " + std::to_string(d) +
                              " m apart");
      }
    }
  }
}

std::vector<NodeId> candidate_neighbors(NodeId i, std::span<const NodeState> states,
                                        const SlotConfig& cfg) {
  std::vector<NodeId> out;
  const Vec3& p = states[i].position;
  for (const auto& s : states) {
    if (s.id == i) continue;
    const double d = distance(p, s.position);
    if (d < cfg.d_min) {
      throw SafetyViolation("nodes " + std::to_string(i) + " and " + std::to_string(s.id) +
                            " are " + std::to_string(d) + " m apart");
    }
    if (d <= cfg.d_max) out.push_back(s.id);
  }
  return out;
}

std::vector<NodeId> select_links(NodeId i, std::span<const NodeId> candidates,
                                 std::span<const NodeState> states, std::span<const double> trust,
                                 std::size_t q, double threshold) {
  struct Scored {
    double d;
    NodeId id;
  };
  std::vector<Scored> eligible;
  for (NodeId k : candidates) {
    if (states[k].is_isolated || trust[k] < threshold) continue;
    eligible.push_back({distance(states[i].position, states[k].position), k});
  }
  std::sort(eligible.begin(), eligible.end(), [](const Scored& a, const Scored& b) {
    return a.d != b.d ? a.d < b.d : a.id < b.id;
  });
  std::vector<NodeId> out;
  for (std::size_t n = 0; n < eligible.size() && n < q; ++n) out.push_back(eligible[n].id);
  return out;
}

namespace {

void reflect(double& p, double& v, double lo, double hi) {
  if (hi <= lo) {
    p = lo;
    v = 0.0;
    return;
  }
  for (int guard = 0; guard < 8 && (p < lo || p > hi); ++guard) {
    if (p < lo) {
      p = 2.0 * lo - p;
      v = -v;
    } else if (p > hi) {
      p = 2.0 * hi - p;
      v = -v;
    }
  }
  p = std::clamp(p, lo, hi);
}

}  // namespace

NodeState advance_position(const NodeState& s, const SlotConfig& cfg) {
  NodeState out = s;
  Vec3 p = s.position + s.velocity * cfg.tau;
  Vec3 v = s.velocity;
  reflect(p.x, v.x, 0.0, cfg.arena.x_max);
  reflect(p.y, v.y, 0.0, cfg.arena.y_max);
  reflect(p.z, v.z, cfg.arena.z_min, cfg.arena.z_max);
  out.position = p;
  out.velocity = v;
  return out;
}

namespace {

Vec3 random_heading(Rng& rng) {
  // Uniform on the unit sphere.
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

bool separated(std::span<const NodeState> states, double d_min) {
  for (std::size_t a = 0; a < states.size(); ++a) {
    for (std::size_t b = a + 1; b < states.size(); ++b) {
      if (distance(states[a].position, states[b].position) < d_min) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<NodeState> step_mobility(std::span<const NodeState> states, const SlotConfig& cfg,
                                     Rng& rng, int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<NodeState> next(states.begin(), states.end());
    for (auto& s : next) {
      s.velocity = random_heading(rng) * cfg.speed;
      s = advance_position(s, cfg);
    }
    if (separated(next, cfg.d_min)) return next;
  }
  throw ResampleExhausted("could not keep every pair " + std::to_string(cfg.d_min) +
                          " m apart after " + std::to_string(max_attempts) + " attempts");
}

std::vector<NodeState> place_nodes(std::size_t n, const SlotConfig& cfg, Rng& rng,
                                   int max_attempts) {
  std::vector<NodeState> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    NodeState s;
    s.id = static_cast<NodeId>(i);
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      s.position = {rng.uniform(0.0, cfg.arena.x_max), rng.uniform(0.0, cfg.arena.y_max),
                    rng.uniform(cfg.arena.z_min, cfg.arena.z_max)};
      placed = std::all_of(out.begin(), out.end(), [&](const NodeState& o) {
        return distance(o.position, s.position) >= cfg.d_min;
      });
    }
    if (!placed) throw ResampleExhausted("could not place node " + std::to_string(i));
    out.push_back(s);
  }
  return out;
}

TopologySnapshot build_topology(Slot slot, std::vector<NodeState> states,
                                std::span<const double> trust, double threshold,
                                const SlotConfig& cfg, const channel::ChannelParams& ch) {
  check_separation(states, cfg.d_min);
  const std::size_t n = states.size();
  std::vector<std::vector<NodeId>> wanted(n);
  for (NodeId i = 0; i < n; ++i) {
    if (states[i].is_isolated) continue;
    const auto k = candidate_neighbors(i, states, cfg);
    wanted[i] = select_links(i, k, states, trust, cfg.q, threshold);
  }
  std::vector<std::vector<NodeId>> gamma(n);
  std::vector<double> rates(n * n, 0.0);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j : wanted[i]) {
      const auto& back = wanted[j];
      if (std::find(back.begin(), back.end(), i) == back.end()) continue;
      gamma[i].push_back(j);
      rates[i * n + j] = channel::link_rate(distance(states[i].position, states[j].position), ch);
    }
  }
  TopologySnapshot snap(slot, std::move(states));
  snap.set_links(std::move(gamma), std::move(rates));
  return snap;
}

std::vector<std::size_t> range_components(std::span<const NodeState> states, double d_max) {
  const std::size_t n = states.size();
  std::vector<std::size_t> label(n);
  std::iota(label.begin(), label.end(), 0);
  auto find = [&](std::size_t x) {
    while (label[x] != x) x = label[x] = label[label[x]];
    return x;
  };
  for (std::size_t a = 0; a < n; ++a) {
    if (states[a].is_isolated) continue;
    for (std::size_t b = a + 1; b < n; ++b) {
      if (states[b].is_isolated) continue;
      if (distance(states[a].position, states[b].position) <= d_max) {
        const auto ra = find(a);
        const auto rb = find(b);
        if (ra != rb) label[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }
  for (std::size_t x = 0; x < n; ++x) label[x] = find(x);
  return label;
}

}  // namespace trustroute
