#include "trustroute/experiment.hpp"

#include <algorithm>

namespace trustroute {

namespace {

bool is_learning(Algorithm a) {
  return a == Algorithm::Maddqn || a == Algorithm::Madqn || a == Algorithm::MaddqnNoBtmm;
}

// Oracle routing that also keeps the first slot's topology.
class CapturingOracle : public OraclePolicy {
 public:
  void begin_slot(const SlotView& view) override {
    if (view.slot == 0) first = *view.snap;
  }
  TopologySnapshot first;
};

}  // namespace

MetricsRow metrics_row(const ExperimentConfig& cfg, std::uint64_t seed, const Simulator& sim,
                       const EpisodeResult& ep, double epsilon) {
  MetricsRow r;
  r.run_id = cfg.run_id;
  r.algorithm = to_string(cfg.algorithm);
  r.seed = seed;
  r.episode = ep.episode;
  r.reward = ep.reward;
  r.mean_delay_s = ep.mean_delay;
  r.mean_e2e_delay_s = ep.mean_e2e_delay;
  r.throughput_bps = ep.throughput_bps;
  r.mean_queue = ep.mean_queue;
  r.energy_j = ep.energy_j;
  r.delivered = ep.delivered;
  r.dropped = ep.dropped;
  r.undelivered = ep.undelivered;
  const auto all = sim.all_detected_slot();
  r.detection_steps = all ? static_cast<std::int64_t>(*all) : -1;
  for (NodeId i : sim.compromised_ids()) r.malicious_detected += sim.trust().flagged(i) ? 1 : 0;
  r.commits = ep.commits;
  r.consensus_messages = ep.consensus_messages;
  r.flagged = ep.flagged_total;
  r.epsilon = epsilon;
  return r;
}

std::unique_ptr<RoutingPolicy> make_policy(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.algorithm) {
    case Algorithm::Oracle:
      return std::make_unique<OraclePolicy>();
    case Algorithm::Random:
      return std::make_unique<RandomPolicy>(Rng::stream(seed, "random-policy"));
    default:
      return std::make_unique<MarlPolicy>(world_for(cfg), marl_for(cfg), seed);
  }
}

std::vector<MetricsRow> run_experiment(const ExperimentConfig& cfg) {
  std::vector<MetricsRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    Simulator sim(world_for(cfg), seed);
    auto policy = make_policy(cfg, seed);
    auto* learner = dynamic_cast<MarlPolicy*>(policy.get());
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
      auto ep = sim.run_episode(*policy);
      rows.push_back(metrics_row(cfg, seed, sim, ep, learner ? learner->epsilon() : 0.0));
    }
  }
  return rows;
}

TrainingRun train(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!is_learning(cfg.algorithm)) {
    throw ValidationError(std::string("algorithm ") + to_string(cfg.algorithm) +
                          " has nothing to train");
  }
  TrainingRun run;
  run.policy = std::make_unique<MarlPolicy>(world_for(cfg), marl_for(cfg), seed);
  Simulator sim(world_for(cfg), seed);
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    auto ep = sim.run_episode(*run.policy);
    run.rows.push_back(metrics_row(cfg, seed, sim, ep, run.policy->epsilon()));
  }
  return run;
}

std::vector<MetricsRow> evaluate(const ExperimentConfig& cfg, std::uint64_t seed,
                                 MarlPolicy& policy) {
  policy.set_training(false);
  Simulator sim(world_for(cfg), seed);
  std::vector<MetricsRow> rows;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    auto ep = sim.run_episode(policy);
    rows.push_back(metrics_row(cfg, seed, sim, ep, 0.0));
  }
  return rows;
}

std::optional<Slot> detection_steps(const ExperimentConfig& cfg, double p1, double p2,
                                    WeightScheme scheme, std::uint64_t seed) {
  WorldConfig w = cfg.world;
  w.btmm = true;
  w.attack.p1 = p1;
  w.attack.p2 = p2;
  w.trust.scheme = scheme;
  w.demand_mode = DemandMode::Stream;
  w.demands_per_slot = cfg.trust_bench.demands_per_slot;
  w.record_traces = false;
  Simulator sim(w, seed);
  OraclePolicy oracle;
  while (sim.global_slot() < cfg.trust_bench.horizon) {
    sim.run_episode(oracle);
    if (sim.compromised_ids().empty()) return std::nullopt;
    if (const auto s = sim.all_detected_slot()) {
      if (*s <= cfg.trust_bench.horizon) return s;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::optional<double> median_steps(std::vector<std::optional<Slot>> steps) {
  if (steps.empty()) return std::nullopt;
  std::sort(steps.begin(), steps.end(), [](const auto& a, const auto& b) {
    if (!a) return false;
    if (!b) return true;
    return *a < *b;
  });
  const std::size_t n = steps.size();
  const auto& hi = steps[n / 2];
  if (n % 2 == 1) return hi ? std::optional<double>(*hi) : std::nullopt;
  const auto& lo = steps[n / 2 - 1];
  if (!lo || !hi) return std::nullopt;
  return 0.5 * (static_cast<double>(*lo) + static_cast<double>(*hi));
}

std::vector<TrustBenchCell> run_trust_bench(const ExperimentConfig& cfg) {
  std::vector<TrustBenchCell> cells;
  const std::uint64_t base = cfg.seeds.front();
  for (double p1 : cfg.trust_bench.p1_values) {
    for (double p2 : cfg.trust_bench.p2_values) {
      for (WeightScheme scheme : cfg.trust_bench.schemes) {
        TrustBenchCell cell{p1, p2, scheme, {}, std::nullopt};
        for (std::size_t s = 0; s < cfg.trust_bench.seeds; ++s) {
          cell.steps.push_back(detection_steps(cfg, p1, p2, scheme, base + s));
        }
        cell.median = median_steps(cell.steps);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::vector<ConsensusBenchRow> run_consensus_bench(const ExperimentConfig& cfg) {
  std::vector<ConsensusBenchRow> out;
  const auto& b = cfg.consensus_bench;
  for (std::size_t n : b.n_values) {
    ConsensusBenchRow row;
    row.n = n;
    row.trials = b.trials;
    std::size_t messages = 0;
    for (std::size_t k = 0; k < b.trials; ++k) {
      const std::uint64_t seed = mix64(cfg.seeds.front() ^ mix64(n * 1'000'003ULL + k));
      ConsensusTrialConfig faulty;
      faulty.n = n;
      faulty.rounds = b.rounds;
      faulty.drop_probability = b.drop_probability;
      faulty.equivocating_leader = true;
      faulty.byzantine_backups = n - 1;
      const auto r = run_consensus_trial(faulty, seed);
      if (!r.safe || !r.chains_linked) ++row.safety_violations;
      messages += r.messages;

      ConsensusTrialConfig crashed;
      crashed.n = n;
      crashed.rounds = b.rounds;
      crashed.crashed_backups = n;
      const auto c = run_consensus_trial(crashed, mix64(seed + 1));
      if (c.rounds_committed < b.rounds || !c.safe) ++row.liveness_failures;
    }
    row.mean_messages = b.trials ? static_cast<double>(messages) / static_cast<double>(b.trials) : 0.0;
    out.push_back(row);
  }
  return out;
}

std::vector<OracleAuditRow> run_oracle_audit(const ExperimentConfig& cfg, std::uint64_t seed) {
  Simulator sim(world_for(cfg), seed);
  CapturingOracle policy;
  const auto ep = sim.run_episode(policy);
  std::unique_ptr<bool[]> excluded(new bool[cfg.world.nodes]());
  std::vector<OracleAuditRow> rows;
  for (const auto& d : ep.demands) {
    OracleAuditRow row;
    row.demand = d.id;
    row.source = d.source;
    row.destination = d.destination;
    row.bits = d.size_bits;
    row.status = d.status;
    row.realized_delay = metric_delay(d);
    if (d.birth_slot == 0) {
      try {
        row.oracle = oracle_shortest_delay(policy.first, d.source, d.destination, d.size_bits,
                                           std::span<const bool>(excluded.get(), cfg.world.nodes));
      } catch (const Unreachable&) {
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace trustroute
