#pragma once

// Experiment configuration: JSON schema with defaults, strict key checking and
// a resolved echo. docs/config.md lists every field.

#include <cstdint>
#include <string>
#include <vector>

#include "trustroute/environment.hpp"
#include "trustroute/marl_policy.hpp"

namespace trustroute {

enum class Algorithm { Maddqn, Madqn, MaddqnNoBtmm, Oracle, Random };

const char* to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

struct TrustBenchConfig {
  std::vector<double> p1_values{0.5, 0.7, 0.9};
  std::vector<double> p2_values{0.5, 0.7, 0.9};
  std::vector<WeightScheme> schemes{WeightScheme::Adaptive, WeightScheme::Average,
                                    WeightScheme::Random};
  std::size_t seeds = 30;
  Slot horizon = 200;
  double demands_per_slot = 2.0;
};

struct ConsensusBenchConfig {
  std::vector<std::size_t> n_values{1, 2, 3};
  std::size_t trials = 1000;
  std::size_t rounds = 3;
  double drop_probability = 0.1;
};

struct ExperimentConfig {
  std::string run_id = "run";
  Algorithm algorithm = Algorithm::Maddqn;
  std::vector<std::uint64_t> seeds{1};
  std::size_t episodes = 10;
  std::string output_dir = "out";
  WorldConfig world;  // btmm follows the algorithm
  MarlConfig marl;    // total_episodes follows `episodes`
  TrustBenchConfig trust_bench;
  ConsensusBenchConfig consensus_bench;

  void validate() const;
};

// Throws ParseError (syntax with line/column, unknown keys, wrong types) or
// ValidationError (field and constraint).
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

// Every field with its resolved value, as JSON text.
std::string resolved_config_json(const ExperimentConfig& cfg);

// World settings implied by the algorithm (btmm off for the ablation).
WorldConfig world_for(const ExperimentConfig& cfg);
MarlConfig marl_for(const ExperimentConfig& cfg);

}  // namespace trustroute
