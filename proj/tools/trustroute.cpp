// Command-line front end.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "trustroute/experiment.hpp"
#include "trustroute/format.hpp"

namespace fs = std::filesystem;
using namespace trustroute;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Config: return 3;
    case ErrorCategory::Io: return 4;
    case ErrorCategory::Domain: return 5;
    case ErrorCategory::Safety: return 6;
    case ErrorCategory::Invariant: return 7;
    case ErrorCategory::Routing: return 8;
    case ErrorCategory::Consensus: return 9;
    case ErrorCategory::Learning: return 10;
  }
  return 1;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
};

ExperimentConfig load(const Options& o) {
  if (o.config.empty()) throw UsageError("--config PATH is required");
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) {
    cfg.output_dir = o.out;
  } else if (const char* env = std::getenv("TRUSTROUTE_OUT_DIR"); env && *env) {
    cfg.output_dir = env;
  }
  return cfg;
}

fs::path prepare_output(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  std::ofstream echo(dir / "config.resolved.json", std::ios::binary);
  if (!echo) throw IoError("cannot write '" + (dir / "config.resolved.json").string() + "'");
  echo << resolved_config_json(cfg);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

std::string steps_text(const std::optional<double>& m) { return m ? format_double(*m) : "inf"; }

int cmd_simulate(const Options& o) {
  const auto cfg = load(o);
  const auto dir = prepare_output(cfg);
  const auto rows = run_experiment(cfg);
  write_metrics_file((dir / "metrics.csv").string(), rows);
  std::cout << rows.size() << " episodes -> " << (dir / "metrics.csv").string() << '\n';
  return 0;
}

int cmd_trust_bench(const Options& o) {
  const auto cfg = load(o);
  const auto dir = prepare_output(cfg);
  const auto cells = run_trust_bench(cfg);
  std::ostringstream csv;
  csv << "p1,p2,scheme,median_steps,seeds,detected\n";
  for (const auto& c : cells) {
    std::size_t detected = 0;
    for (const auto& s : c.steps) detected += s ? 1 : 0;
    csv << format_double(c.p1) << ',' << format_double(c.p2) << ',' << to_string(c.scheme) << ','
        << steps_text(c.median) << ',' << c.steps.size() << ',' << detected << '\n';
  }
  write_text(dir / "trust_bench.csv", csv.str());

  // Grid view: one block per scheme, rows p1, columns p2.
  for (WeightScheme scheme : cfg.trust_bench.schemes) {
    std::cout << "median detection steps, " << to_string(scheme) << " (rows p1, columns p2)\n      ";
    for (double p2 : cfg.trust_bench.p2_values) std::cout << std::setw(8) << format_double(p2);
    std::cout << '\n';
    for (double p1 : cfg.trust_bench.p1_values) {
      std::cout << std::setw(6) << format_double(p1);
      for (double p2 : cfg.trust_bench.p2_values) {
        for (const auto& c : cells) {
          if (c.p1 == p1 && c.p2 == p2 && c.scheme == scheme) std::cout << std::setw(8) << steps_text(c.median);
        }
      }
      std::cout << '\n';
    }
  }
  return 0;
}

int cmd_consensus_bench(const Options& o) {
  const auto cfg = load(o);
  const auto dir = prepare_output(cfg);
  const auto rows = run_consensus_bench(cfg);
  std::ostringstream csv;
  csv << "n,trials,safety_violations,liveness_failures,mean_messages\n";
  for (const auto& r : rows) {
    csv << r.n << ',' << r.trials << ',' << r.safety_violations << ',' << r.liveness_failures << ','
        << format_double(r.mean_messages) << '\n';
    std::cout << "n=" << r.n << " members=" << consensus_size(r.n) << " trials=" << r.trials
              << " safety_violations=" << r.safety_violations
              << " liveness_failures=" << r.liveness_failures << '\n';
  }
  write_text(dir / "consensus_bench.csv", csv.str());
  bool ok = true;
  for (const auto& r : rows) ok = ok && r.safety_violations == 0 && r.liveness_failures == 0;
  return ok ? 0 : 1;
}

int cmd_train(const Options& o) {
  const auto cfg = load(o);
  const auto dir = prepare_output(cfg);
  std::vector<MetricsRow> all;
  for (std::uint64_t seed : cfg.seeds) {
    auto run = train(cfg, seed);
    all.insert(all.end(), run.rows.begin(), run.rows.end());
    fs::path ck = o.checkpoint.empty() ? dir / ("checkpoint-" + std::to_string(seed) + ".txt")
                                       : fs::path(o.checkpoint);
    if (!o.checkpoint.empty() && cfg.seeds.size() > 1) {
      ck += "." + std::to_string(seed);
    }
    std::ofstream out(ck, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + ck.string() + "'");
    run.policy->save(out);
    std::cout << "seed " << seed << ": " << run.rows.size() << " episodes, checkpoint "
              << ck.string() << '\n';
  }
  write_metrics_file((dir / "metrics.csv").string(), all);
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto cfg = load(o);
  if (o.checkpoint.empty()) throw UsageError("evaluate needs --checkpoint PATH");
  const auto dir = prepare_output(cfg);
  std::ifstream in(o.checkpoint, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + o.checkpoint + "'");
  std::vector<MetricsRow> all;
  for (std::uint64_t seed : cfg.seeds) {
    MarlPolicy policy(world_for(cfg), marl_for(cfg), seed);
    in.clear();
    in.seekg(0);
    policy.load(in);
    auto rows = evaluate(cfg, seed, policy);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  write_metrics_file((dir / "metrics.csv").string(), all);
  double delay = 0.0;
  for (const auto& r : all) delay += r.mean_delay_s;
  std::cout << all.size() << " greedy episodes, mean delay "
            << format_double(all.empty() ? 0.0 : delay / static_cast<double>(all.size())) << " s\n";
  return 0;
}

int cmd_oracle(const Options& o) {
  const auto cfg = load(o);
  const auto dir = prepare_output(cfg);
  std::ostringstream csv;
  csv << "seed,demand,source,destination,bits,oracle_delay_s,oracle_path,realized_delay_s,status\n";
  for (std::uint64_t seed : cfg.seeds) {
    for (const auto& r : run_oracle_audit(cfg, seed)) {
      std::string path;
      if (r.oracle) {
        for (std::size_t k = 0; k < r.oracle->path.size(); ++k) {
          path += (k ? "-" : "") + std::to_string(r.oracle->path[k]);
        }
      }
      const char* status = r.status == DemandStatus::Delivered ? "delivered"
                           : r.status == DemandStatus::Dropped ? "dropped"
                                                               : "in_flight";
      csv << seed << ',' << r.demand << ',' << r.source << ',' << r.destination << ','
          << format_double(r.bits) << ',' << (r.oracle ? format_double(r.oracle->delay) : "unreachable")
          << ',' << path << ',' << format_double(r.realized_delay) << ',' << status << '\n';
    }
  }
  write_text(dir / "oracle.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-aware multi-hop routing simulator"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opt.config, "experiment config (JSON)");
    sub->add_option("--seed", seed, "run a single seed instead of the configured list");
    sub->add_option("-o,--out", opt.out, "output directory (overrides config and TRUSTROUTE_OUT_DIR)");
  };
  auto* simulate = app.add_subcommand("simulate", "run every configured seed and episode");
  auto* tbench = app.add_subcommand("trust-bench", "median detection steps over the (p1, p2) grid");
  auto* cbench = app.add_subcommand("consensus-bench", "consensus safety and liveness under faults");
  auto* trainc = app.add_subcommand("train", "train routing agents and save checkpoints");
  auto* evalc = app.add_subcommand("evaluate", "greedy episodes from a checkpoint");
  auto* oraclec = app.add_subcommand("oracle", "shortest-delay audit of the first slot's demands");
  for (auto* s : {simulate, tbench, cbench, trainc, evalc, oraclec}) add_common(s);
  trainc->add_option("--checkpoint", opt.checkpoint, "checkpoint output path");
  evalc->add_option("--checkpoint", opt.checkpoint, "checkpoint to load");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::Usage);
  }

  try {
    for (auto* s : app.get_subcommands()) {
      if (s->count("--seed")) opt.seed = seed;
    }
    if (simulate->parsed()) return cmd_simulate(opt);
    if (tbench->parsed()) return cmd_trust_bench(opt);
    if (cbench->parsed()) return cmd_consensus_bench(opt);
    if (trainc->parsed()) return cmd_train(opt);
    if (evalc->parsed()) return cmd_evaluate(opt);
    if (oraclec->parsed()) return cmd_oracle(opt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.category() == ErrorCategory::Usage) std::cerr << app.help();
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
