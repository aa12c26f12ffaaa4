#include <algorithm>

#include "doctest.h"
#include "trustroute/adversary.hpp"

using namespace trustroute;

namespace {

using Matrix = std::vector<std::vector<bool>>;

TopologySnapshot graph_snapshot(const Matrix& m) {
  const std::size_t n = m.size();
  std::vector<NodeState> states(n);
  for (NodeId i = 0; i < n; ++i) {
    states[i].id = i;
    states[i].position = {10.0 * i, 0.0, 130.0};
  }
  TopologySnapshot snap(0, states);
  std::vector<std::vector<NodeId>> gamma(n);
  std::vector<double> rates(n * n, 0.0);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = 0; j < n; ++j) {
      if (m[i][j]) {
        gamma[i].push_back(j);
        rates[i * n + j] = 1e6;
      }
    }
  }
  snap.set_links(std::move(gamma), std::move(rates));
  return snap;
}

Matrix cycle(std::size_t n) {
  Matrix m(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) m[i][(i + 1) % n] = m[(i + 1) % n][i] = true;
  return m;
}

// Importance straight from the adjacency matrix, counting triangles by
// enumerating every third vertex.
double importance_oracle(const Matrix& m, std::size_t i) {
  const std::size_t n = m.size();
  auto deg = [&](std::size_t v) {
    double d = 0;
    for (std::size_t k = 0; k < n; ++k) d += m[v][k] ? 1 : 0;
    return d;
  };
  const double zi = deg(i);
  if (zi == 0) return 0.0;
  double lambda = zi;
  for (std::size_t j = 0; j < n; ++j) {
    if (!m[i][j]) continue;
    double tri = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i && k != j && m[i][k] && m[j][k]) tri += 1;
    }
    const double zj = deg(j);
    const double weight = (zi - tri - 1) * (zj - tri - 1) * 2.0 / (tri + 2.0);
    const double frac = (zi + zj == 2.0) ? 0.0 : (zj - 1) / (zi + zj - 2);
    lambda += weight * (1 - frac);
  }
  return lambda;
}

}  // namespace

TEST_SUITE("adversary") {

TEST_CASE("link weight on small graphs") {
  const auto c4 = graph_snapshot(cycle(4));
  CHECK(link_weight(0, 1, c4) == 1.0);

  const auto tri = graph_snapshot(cycle(3));
  CHECK(link_weight(0, 1, tri) == 0.0);
  CHECK(common_neighbors(adjacency_of(tri), 0, 1) == 1);

  Matrix star(4, std::vector<bool>(4, false));
  for (std::size_t k = 1; k < 4; ++k) star[0][k] = star[k][0] = true;
  CHECK(link_weight(0, 2, graph_snapshot(star)) == 0.0);
}

TEST_CASE("node importance on small graphs") {
  CHECK(node_importance(0, graph_snapshot(cycle(4))).lambda == 3.0);
  CHECK(node_importance(1, graph_snapshot(cycle(3))).lambda == 2.0);

  Matrix lonely(3, std::vector<bool>(3, false));
  lonely[1][2] = lonely[2][1] = true;
  CHECK(node_importance(0, graph_snapshot(lonely)).lambda == 0.0);

  // Two degree-1 endpoints: the correction term's 0/0 is taken as 0.
  CHECK(node_importance(1, graph_snapshot(lonely)).lambda == 1.0);
}

TEST_CASE("importance matches brute force on random graphs") {
  Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 3 + rng.below(28);
    const double p = rng.uniform(0.05, 0.6);
    Matrix m(n, std::vector<bool>(n, false));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) m[a][b] = m[b][a] = rng.bernoulli(p);
    }
    const auto snap = graph_snapshot(m);
    const auto scores = importance_scores(snap);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(scores[i].lambda == doctest::Approx(importance_oracle(m, i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("isolated nodes score zero") {
  auto m = cycle(4);
  auto snap = graph_snapshot(m);
  std::vector<NodeState> states = snap.states();
  states[2].is_isolated = true;
  TopologySnapshot iso(0, states);
  std::vector<std::vector<NodeId>> gamma{{1, 3}, {0}, {}, {0}};
  std::vector<double> rates(16, 0.0);
  iso.set_links(gamma, rates);
  CHECK(node_importance(2, iso).lambda == 0.0);
}

TEST_CASE("attack target selection") {
  const std::vector<ImportanceScore> s{{0, 1.0}, {1, 5.0}, {2, 3.0}, {3, 3.0}, {4, 0.5}};
  CHECK(select_attack_targets(s, 0).empty());
  CHECK(select_attack_targets(s, 1) == std::vector<NodeId>{1});
  CHECK(select_attack_targets(s, 2) == std::vector<NodeId>{1, 2});
  const std::vector<NodeId> taken{1};
  CHECK(select_attack_targets(s, 2, taken) == std::vector<NodeId>{2, 3});
}

TEST_CASE("selection is invariant to relabelling up to ties") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ImportanceScore> s;
    for (NodeId i = 0; i < 12; ++i) s.push_back({i, rng.uniform(0.0, 10.0)});
    const auto base = select_attack_targets(s, 3);
    auto shuffled = s;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(select_attack_targets(shuffled, 3) == base);
  }
}

TEST_CASE("malicious forwarding probabilities") {
  Rng rng(42);
  AttackConfig honest{2, 1.0, 1.0, 0};
  for (int k = 0; k < 1000; ++k) CHECK(malicious_forward_decision(honest, rng) == ForwardDecision::Correct);
  AttackConfig dropper{2, 0.0, 1.0, 0};
  for (int k = 0; k < 1000; ++k) CHECK(malicious_forward_decision(dropper, rng) == ForwardDecision::Drop);

  AttackConfig half{2, 0.5, 0.5, 0};
  int drops = 0, wrong = 0, correct = 0;
  const int trials = 10000;
  for (int k = 0; k < trials; ++k) {
    switch (malicious_forward_decision(half, rng)) {
      case ForwardDecision::Drop: ++drops; break;
      case ForwardDecision::WrongPath: ++wrong; break;
      case ForwardDecision::Correct: ++correct; break;
    }
  }
  CHECK(std::abs(drops / double(trials) - 0.5) < 0.02);
  CHECK(std::abs(wrong / double(trials) - 0.25) < 0.02);
  CHECK(std::abs(correct / double(trials) - 0.25) < 0.02);
}

TEST_CASE("attack probabilities are validated") {
  AttackConfig bad{2, 1.3, 0.5, 0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.p1 = 0.5;
  bad.p2 = -0.1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

}  // TEST_SUITE
