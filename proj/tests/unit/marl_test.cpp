#include <cmath>
#include <sstream>

#include "doctest.h"
#include "trustroute/channel.hpp"
#include "trustroute/marl.hpp"

using namespace trustroute;

namespace {

// Three nodes on a line; with q=3 node 0 links to 1 and 2 and has one empty slot.
struct Line {
  std::vector<NodeState> states;
  std::vector<double> trust{1.0, 0.9, 0.85};
  SlotConfig cfg;
  TopologySnapshot snap;

  Line() {
    cfg.q = 3;
    for (NodeId i = 0; i < 3; ++i) {
      NodeState s;
      s.id = i;
      states.push_back(s);
    }
    states[0].position = {0, 0, 130};
    states[1].position = {150, 300, 120};
    states[2].position = {300, 0, 140};
    states[0].queue_length = 25;
    states[1].queue_length = 100;
    states[1].energy_used_slot = 700;
    rebuild();
  }
  void rebuild() { snap = build_topology(0, states, trust, 0.8, cfg, channel::ChannelParams{}); }
};

// 1 input, 3 outputs, all weights zero: Q equals the biases.
Mlp constant_net(std::vector<double> q) {
  Mlp net({1, q.size()});
  for (std::size_t k = 0; k < q.size(); ++k) net.params()[q.size() + k] = q[k];
  return net;
}

HopRecord hop(double q, double tx, bool hold = false) {
  HopRecord h;
  h.from = 0;
  h.to = hold ? 0 : 1;
  h.queue_delay = q;
  h.tx_delay = tx;
  return h;
}

}  // namespace

TEST_SUITE("marl") {

TEST_CASE("observation layout") {
  Line w;
  ObservationConfig oc;
  oc.q = 3;
  oc.include_destination = false;
  CHECK(oc.dimension() == 22);
  oc.include_destination = true;
  CHECK(oc.dimension() == 25);
  oc.include_destination = false;

  const auto o = build_observation(0, w.snap, w.trust, oc);
  REQUIRE(o.size() == 22);
  CHECK(o[0] == 0.0);
  CHECK(o[1] == 0.0);
  CHECK(o[2] == doctest::Approx(0.5));
  CHECK(o[3] == doctest::Approx(0.5));
  // Nearest neighbour first: node 2 at 300 m, then node 1 at ~335 m.
  CHECK(o[4] == doctest::Approx(0.2));
  CHECK(o[6] == doctest::Approx(1.0));
  CHECK(o[9] == doctest::Approx(0.85));
  CHECK(o[10] == doctest::Approx(0.1));
  CHECK(o[11] == doctest::Approx(0.2));
  CHECK(o[12] == 0.0);
  CHECK(o[13] == 1.0);  // queue clipped at C_max
  CHECK(o[14] == doctest::Approx(0.2));
  CHECK(o[15] == doctest::Approx(0.9));
  for (std::size_t k = 16; k < 22; ++k) CHECK(o[k] == 0.0);
  for (double v : o) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  oc.include_destination = true;
  const auto d = build_observation(0, w.snap, w.trust, oc, Vec3{750, 1500, 130});
  REQUIRE(d.size() == 25);
  CHECK(d[22] == doctest::Approx(0.5));
  CHECK(d[23] == doctest::Approx(1.0));
  CHECK(d[24] == doctest::Approx(0.5));

  w.states[0].is_isolated = true;
  w.rebuild();
  CHECK_THROWS_AS(build_observation(0, w.snap, w.trust, oc), Isolated);
}

TEST_CASE("action mask covers live links and hold") {
  Line w;
  CHECK(action_mask(0, w.snap, 3) == std::vector<bool>{true, true, false, true});
  CHECK(action_mask(0, w.snap, 1) == std::vector<bool>{true, true});
  w.trust = {1.0, 0.5, 0.5};
  w.rebuild();
  CHECK(action_mask(0, w.snap, 3) == std::vector<bool>{false, false, false, true});
}

TEST_CASE("epsilon one explores uniformly over valid actions") {
  const auto net = constant_net({0.0, 0.0, 9.0, 0.0});
  const std::vector<bool> mask{true, true, false, true};
  const std::vector<double> obs{0.0};
  Rng rng(5);
  std::vector<int> counts(4, 0);
  const int draws = 30000;
  for (int k = 0; k < draws; ++k) ++counts[select_action(net, obs, mask, 1.0, rng)];
  CHECK(counts[2] == 0);
  for (int a : {0, 1, 3}) CHECK(counts[a] / double(draws) == doctest::Approx(1.0 / 3).epsilon(0.06));
}

TEST_CASE("epsilon zero is the masked argmax") {
  const auto net = constant_net({0.1, 0.7, 9.0, 0.3});
  const std::vector<bool> mask{true, true, false, true};
  Rng rng(6);
  for (int k = 0; k < 100; ++k) CHECK(select_action(net, std::vector<double>{0.0}, mask, 0.0, rng) == 1);
  CHECK_THROWS_AS(masked_argmax(std::vector<double>{1, 2}, std::vector<bool>{false, false}),
                  DomainError);
}

TEST_CASE("masked argmax ignores a constant shift") {
  Rng rng(7);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> v(5);
    std::vector<bool> mask(5);
    for (auto& x : v) x = rng.uniform(-3.0, 3.0);
    for (std::size_t j = 0; j < 5; ++j) mask[j] = rng.bernoulli(0.6);
    mask[4] = true;
    const double c = rng.uniform(-100.0, 100.0);
    auto shifted = v;
    for (auto& x : shifted) x += c;
    CHECK(masked_argmax(v, mask) == masked_argmax(shifted, mask));
  }
}

TEST_CASE("reward examples") {
  const std::vector<HopRecord> quick{hop(0.0, 0.05)};
  CHECK(reward(quick, 0.5) == doctest::Approx(-0.5));
  const std::vector<HopRecord> held{hop(1.0, 0.0, true)};
  CHECK(reward(held, 0.5) == doctest::Approx(-5.0));
  CHECK(reward(std::vector<HopRecord>{}, 0.5) == 0.0);
  const std::vector<HopRecord> mixed{hop(0.1, 0.1), hop(0.3, 0.4), hop(1.0, 0.0, true)};
  CHECK(clipped_delay_sum(mixed, 0.5) == doctest::Approx(1.2));
  CHECK(reward(mixed, 0.5) == doctest::Approx(-12.0));
}

TEST_CASE("DQN and Double-DQN targets") {
  const auto target = constant_net({0.5, 0.8, 2.0});
  const auto online = constant_net({1.0, 0.0, 5.0});
  const std::vector<bool> mask{true, true, false};
  const std::vector<double> obs{0.0};
  CHECK(dqn_target(1.0, 0.9, target, obs, mask, false) == doctest::Approx(1.72));
  CHECK(dqn_target(1.0, 0.9, target, obs, mask, true) == 1.0);
  CHECK(ddqn_target(1.0, 0.9, online, target, obs, mask, false) == doctest::Approx(1.45));
  CHECK(ddqn_target(1.0, 0.9, target, target, obs, mask, false) ==
        dqn_target(1.0, 0.9, target, obs, mask, false));

  // Double-DQN never exceeds DQN for the same target net.
  Rng rng(8);
  for (int k = 0; k < 300; ++k) {
    std::vector<double> a(4), b(4);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : b) x = rng.uniform(-1, 1);
    const std::vector<bool> m{true, rng.bernoulli(0.5), true, rng.bernoulli(0.5)};
    const auto t = constant_net(a), o = constant_net(b);
    CHECK(ddqn_target(0.0, 0.9, o, t, obs, m, false) <= dqn_target(0.0, 0.9, t, obs, m, false));
  }
}

TEST_CASE("epsilon schedule") {
  AgentHyper h;
  CHECK(epsilon_at(0, 100, h) == 1.0);
  CHECK(epsilon_at(25, 100, h) == doctest::Approx(std::sqrt(0.05)));
  CHECK(epsilon_at(50, 100, h) == 0.05);
  CHECK(epsilon_at(99, 100, h) == 0.05);
  double prev = 2.0;
  for (std::size_t e = 0; e < 100; ++e) {
    CHECK(epsilon_at(e, 100, h) <= prev);
    prev = epsilon_at(e, 100, h);
  }
  h.eps_end = 0.0;
  CHECK(epsilon_at(50, 100, h) == 0.0);
}

TEST_CASE("replay buffer overwrites the oldest and samples uniformly") {
  ReplayBuffer small(3);
  for (int k = 0; k < 5; ++k) {
    Transition t;
    t.reward = k;
    small.push(t);
  }
  CHECK(small.size() == 3);
  CHECK(small.at(0).reward == 3);
  CHECK(small.at(1).reward == 4);
  CHECK(small.at(2).reward == 2);

  ReplayBuffer buf(10);
  for (int k = 0; k < 10; ++k) buf.push(Transition{});
  Rng rng(9);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (std::size_t k : buf.sample_indices(n, rng)) ++counts[k];
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  for (int c : counts) CHECK(std::abs(c - n * 0.1) < 3 * sigma);
}

TEST_CASE("train step on a constant batch") {
  AgentHyper h;
  h.batch = 4;
  h.buffer_capacity = 100;
  h.target_sync = 3;
  h.alpha = 0.01;
  h.hidden = {8};
  Rng rng(10);
  Agent a(2, 3, h, rng);
  for (auto& p : a.online.params()) p = 0.0;
  a.target = a.online;

  for (int k = 0; k < 4; ++k) {
    Transition t;
    t.obs = {1.0, 0.0};
    t.action = 1;
    t.reward = 0.5;
    t.terminal = true;
    a.buffer.push(t);
  }
  CHECK_THROWS_AS(train_step(a, h, TargetRule::Dqn, rng), BufferTooSmall);
  Transition t = a.buffer.at(0);
  a.buffer.push(t);

  // Zero network, terminal targets of 0.5: loss 0.25.
  CHECK(train_step(a, h, TargetRule::Dqn, rng) == doctest::Approx(0.25));
  CHECK(a.online.params() != a.target.params());
  train_step(a, h, TargetRule::DoubleDqn, rng);
  CHECK(a.online.params() != a.target.params());
  train_step(a, h, TargetRule::Dqn, rng);
  CHECK(a.train_steps == 3);
  CHECK(a.online.params() == a.target.params());
}

TEST_CASE("checkpoints round-trip exactly") {
  AgentHyper h;
  h.hidden = {7, 5};
  Rng rng(11);
  std::vector<Agent> agents;
  for (int k = 0; k < 2; ++k) agents.emplace_back(9, 4, h, rng);
  agents[1].train_steps = 42;
  for (auto& p : agents[1].online.params()) p += rng.uniform(-1e-3, 1e-3);

  std::stringstream ss;
  save_checkpoint(ss, agents);
  const auto back = load_checkpoint(ss, h);
  REQUIRE(back.size() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(back[k].online.sizes() == agents[k].online.sizes());
    CHECK(back[k].online.params() == agents[k].online.params());
    CHECK(back[k].target.params() == agents[k].target.params());
    CHECK(back[k].train_steps == agents[k].train_steps);
  }

  std::stringstream bad("not-a-checkpoint 1\n");
  CHECK_THROWS_AS(load_checkpoint(bad, h), ParseError);
  std::string text = ss.str();
  std::stringstream cut(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(cut, h), ParseError);
}

}  // TEST_SUITE
