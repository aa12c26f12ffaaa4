#include <algorithm>
#include <set>

#include "doctest.h"
#include "trustroute/geometry.hpp"

using namespace trustroute;

namespace {

std::vector<NodeState> nodes_at(std::initializer_list<Vec3> ps) {
  std::vector<NodeState> out;
  NodeId id = 0;
  for (const auto& p : ps) {
    NodeState s;
    s.id = id++;
    s.position = p;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("distance examples") {
  CHECK(distance({0, 0, 0}, {3, 4, 0}) == 5.0);
  CHECK(distance({0, 0, 120}, {0, 0, 140}) == 20.0);
  const Vec3 a{12.5, -3.0, 7.25};
  CHECK(distance(a, a) == 0.0);
}

TEST_CASE("distance is a metric on random triples") {
  Rng rng(11);
  for (int k = 0; k < 2000; ++k) {
    auto pt = [&] { return Vec3{rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3), rng.uniform(0, 200)}; };
    const Vec3 a = pt(), b = pt(), c = pt();
    CHECK(distance(a, b) >= 0.0);
    CHECK(distance(a, b) == distance(b, a));
    CHECK(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9);
  }
}

TEST_CASE("candidate neighbours use an inclusive range and enforce separation") {
  SlotConfig cfg;
  cfg.d_max = 300.0;
  auto s = nodes_at({{0, 0, 130}, {100, 0, 130}, {400, 0, 130}});
  CHECK(candidate_neighbors(0, s, cfg) == std::vector<NodeId>{1});

  auto edge = nodes_at({{0, 0, 130}, {300, 0, 130}});
  CHECK(candidate_neighbors(0, edge, cfg) == std::vector<NodeId>{1});

  auto close = nodes_at({{0, 0, 130}, {5, 0, 130}});
  CHECK_THROWS_AS(candidate_neighbors(0, close, cfg), SafetyViolation);
}

TEST_CASE("select_links filters by trust then keeps the nearest") {
  auto s = nodes_at({{0, 0, 130}, {50, 0, 130}, {60, 0, 130}, {70, 0, 130}});
  const std::vector<double> trust{1.0, 0.9, 0.7, 0.85};
  const std::vector<NodeId> cand{1, 2, 3};
  CHECK(select_links(0, cand, s, trust, 2, 0.8) == std::vector<NodeId>{1, 3});

  const std::vector<NodeId> one{2};
  const std::vector<double> all_ok{1, 1, 1, 1};
  CHECK(select_links(0, one, s, all_ok, 3, 0.8) == std::vector<NodeId>{2});

  // Equal distance: lower id wins.
  auto tie = nodes_at({{0, 0, 130}, {0, 80, 130}, {80, 0, 130}});
  const std::vector<NodeId> both{2, 1};
  CHECK(select_links(0, both, tie, all_ok, 1, 0.8) == std::vector<NodeId>{1});

  s[1].is_isolated = true;
  CHECK(select_links(0, cand, s, trust, 2, 0.8) == std::vector<NodeId>{3});
}

TEST_CASE("advance_position moves and reflects") {
  SlotConfig cfg;
  NodeState s;
  s.position = {0, 0, 130};
  s.velocity = {3, 0, 0};
  CHECK(advance_position(s, cfg).position == Vec3{3, 0, 130});

  s.velocity = {0, 0, 0};
  CHECK(advance_position(s, cfg).position == s.position);

  s.position = {cfg.arena.x_max - 1.0, 10, 130};
  s.velocity = {3, 0, 0};
  const auto r = advance_position(s, cfg);
  CHECK(r.position.x == doctest::Approx(cfg.arena.x_max - 2.0));
  CHECK(r.velocity.x == -3.0);
  CHECK(cfg.arena.contains(r.position));
}

TEST_CASE("mobility keeps speed, arena and separation, and is seed deterministic") {
  SlotConfig cfg;
  Rng place(5);
  auto states = place_nodes(20, cfg, place);
  Rng a(9), b(9);
  auto sa = states, sb = states;
  for (int t = 0; t < 200; ++t) {
    sa = step_mobility(sa, cfg, a);
    sb = step_mobility(sb, cfg, b);
    for (const auto& s : sa) {
      CHECK(cfg.arena.contains(s.position));
      CHECK(s.velocity.norm() == doctest::Approx(cfg.speed));
    }
    CHECK_NOTHROW(check_separation(sa, cfg.d_min));
  }
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i].position == sb[i].position);
}

TEST_CASE("crowded placement exhausts resampling") {
  SlotConfig cfg;
  cfg.arena = {20.0, 20.0, 120.0, 120.0};
  Rng rng(3);
  CHECK_THROWS_AS(place_nodes(50, cfg, rng, 20), ResampleExhausted);
}

TEST_CASE("build_topology examples") {
  SlotConfig cfg;
  channel::ChannelParams ch;
  const std::vector<double> ok{1, 1, 1, 1};

  auto pair = nodes_at({{0, 0, 130}, {100, 0, 130}});
  auto snap = build_topology(0, pair, ok, 0.8, cfg, ch);
  CHECK(snap.gamma(0) == std::vector<NodeId>{1});
  CHECK(snap.gamma(1) == std::vector<NodeId>{0});
  CHECK(snap.rate(0, 1) == snap.rate(1, 0));
  CHECK(snap.rate(0, 1) > 0.0);

  const std::vector<double> bad{1, 0.5};
  auto cut = build_topology(0, pair, bad, 0.8, cfg, ch);
  CHECK(cut.degree(0) == 0);
  CHECK(cut.degree(1) == 0);

  // Square with diagonal 141 m and sides 100 m: with q=2 each node keeps its
  // two side neighbours, giving the ring 0-1-2-3-0.
  cfg.q = 2;
  auto sq = nodes_at({{0, 0, 130}, {100, 0, 130}, {100, 100, 130}, {0, 100, 130}});
  auto ring = build_topology(0, sq, ok, 0.8, cfg, ch);
  for (NodeId i = 0; i < 4; ++i) {
    const std::set<NodeId> got(ring.gamma(i).begin(), ring.gamma(i).end());
    CHECK(got == std::set<NodeId>{static_cast<NodeId>((i + 1) % 4), static_cast<NodeId>((i + 3) % 4)});
  }
}

TEST_CASE("random topologies respect degree, range and isolation") {
  SlotConfig cfg;
  channel::ChannelParams ch;
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    auto states = place_nodes(20, cfg, rng);
    std::vector<double> trust(20);
    for (auto& t : trust) t = rng.uniform(0.6, 1.0);
    states[trial % 20].is_isolated = true;
    auto snap = build_topology(0, states, trust, 0.8, cfg, ch);
    for (NodeId i = 0; i < 20; ++i) {
      CHECK(snap.degree(i) <= cfg.q);
      if (states[i].is_isolated || trust[i] < 0.8) CHECK(snap.degree(i) == 0);
      for (NodeId j : snap.gamma(i)) {
        CHECK(snap.distance(i, j) <= cfg.d_max);
        CHECK(snap.linked(j, i));
        CHECK_FALSE(states[j].is_isolated);
        CHECK(trust[j] >= 0.8);
      }
    }
  }
}

}  // TEST_SUITE
