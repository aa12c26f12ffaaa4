#pragma once

// Orchestration: seeded runs producing metrics rows, the detection-time grid,
// consensus fault benches and the shortest-delay audit.

#include <memory>
#include <optional>
#include <vector>

#include "trustroute/config.hpp"
#include "trustroute/metrics.hpp"
#include "trustroute/oracle.hpp"

namespace trustroute {

MetricsRow metrics_row(const ExperimentConfig& cfg, std::uint64_t seed, const Simulator& sim,
                       const EpisodeResult& ep, double epsilon);

std::unique_ptr<RoutingPolicy> make_policy(const ExperimentConfig& cfg, std::uint64_t seed);

// All seeds x episodes, one row per episode. Learning policies train online.
std::vector<MetricsRow> run_experiment(const ExperimentConfig& cfg);

// One seed of a learning algorithm; the trained policy is kept for checkpoints.
struct TrainingRun {
  std::vector<MetricsRow> rows;
  std::unique_ptr<MarlPolicy> policy;
};
TrainingRun train(const ExperimentConfig& cfg, std::uint64_t seed);

// Greedy episodes with a frozen policy.
std::vector<MetricsRow> evaluate(const ExperimentConfig& cfg, std::uint64_t seed,
                                 MarlPolicy& policy);

// --- detection-time grid -----------------------------------------------------

// Slots until every compromised node is flagged (nullopt = not within the horizon).
std::optional<Slot> detection_steps(const ExperimentConfig& cfg, double p1, double p2,
                                    WeightScheme scheme, std::uint64_t seed);

// Median with undetected runs ranked above every finite value; nullopt when the
// median falls on them.
std::optional<double> median_steps(std::vector<std::optional<Slot>> steps);

struct TrustBenchCell {
  double p1 = 0.0;
  double p2 = 0.0;
  WeightScheme scheme = WeightScheme::Adaptive;
  std::vector<std::optional<Slot>> steps;  // one per seed
  std::optional<double> median;
};

// Seeds are 1..trust_bench.seeds offset by the first configured seed; each
// seed is shared by all schemes and cells.
std::vector<TrustBenchCell> run_trust_bench(const ExperimentConfig& cfg);

// --- consensus faults --------------------------------------------------------

struct ConsensusBenchRow {
  std::size_t n = 1;
  std::size_t trials = 0;
  std::size_t safety_violations = 0;   // equivocating leader + n-1 byzantine backups, lossy links
  std::size_t liveness_failures = 0;   // n crashed backups, reliable links
  double mean_messages = 0.0;
};

std::vector<ConsensusBenchRow> run_consensus_bench(const ExperimentConfig& cfg);

// --- shortest-delay audit ----------------------------------------------------

struct OracleAuditRow {
  DemandId demand = 0;
  NodeId source = 0;
  NodeId destination = 0;
  double bits = 0.0;
  std::optional<RoutePlan> oracle;  // on the first-slot snapshot
  double realized_delay = 0.0;      // metric delay when routed by the oracle policy
  DemandStatus status = DemandStatus::InFlight;
};

std::vector<OracleAuditRow> run_oracle_audit(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace trustroute
