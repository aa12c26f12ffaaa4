#pragma once

// Behaviour bookkeeping and trust evolution with adaptive, average and random
// weight schemes.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustroute/core.hpp"

namespace trustroute {

struct TrustRecord {
  NodeId node = 0;
  double T = 1.0;
  double T_dr = 1.0;
  double T_tp = 1.0;
  std::uint64_t cum_rx = 0;
  std::uint64_t cum_tx = 0;
  std::uint64_t cum_paths = 0;
  std::uint64_t cum_bad_paths = 0;
  bool flagged = false;
  std::optional<Slot> flag_slot;
};

enum class ReportKind { Delivery, PathCheck };

struct BehaviorReport {
  NodeId reporter = 0;
  NodeId subject = 0;
  Slot slot = 0;
  ReportKind kind = ReportKind::Delivery;
  // Delivery: (rx, tx). PathCheck: (total, bad).
  std::uint32_t first = 0;
  std::uint32_t second = 0;

  static BehaviorReport delivery(NodeId reporter, NodeId subject, Slot slot, std::uint32_t rx,
                                 std::uint32_t tx) {
    return {reporter, subject, slot, ReportKind::Delivery, rx, tx};
  }
  static BehaviorReport path_check(NodeId reporter, NodeId subject, Slot slot, std::uint32_t total,
                                   std::uint32_t bad) {
    return {reporter, subject, slot, ReportKind::PathCheck, total, bad};
  }
  friend bool operator==(const BehaviorReport&, const BehaviorReport&) = default;
};

enum class WeightScheme { Adaptive, Average, Random };
enum class WeightDenominator { Corrected, Printed };

std::string to_string(WeightScheme s);
WeightScheme parse_weight_scheme(const std::string& s);

struct TrustParams {
  WeightScheme scheme = WeightScheme::Adaptive;
  double threshold = 0.8;
  double initial = 1.0;
  double psi0_cap = 0.9;
  WeightDenominator denominator = WeightDenominator::Corrected;

  void validate() const;
};

struct Weights {
  double psi0 = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
  // psi0 = 1 - psi1 - psi2 by construction (false only for the printed
  // denominator variant).
  bool normalized = true;

  double sum() const { return psi0 + psi1 + psi2; }
};

double delivery_rate_eval(const TrustRecord& rec);
double path_eval(const TrustRecord& rec);

Weights compute_weights(WeightScheme scheme, double T, double T_dr, double T_tp,
                        const TrustParams& params, Rng& rng);

// One application of T' = psi0 T + psi1 T_dr + psi2 T_tp; flags on the first
// drop below the threshold. Normalized weights use the equivalent
// T + psi1 (T_dr - T) + psi2 (T_tp - T), which leaves T = T_dr = T_tp
// unchanged to the last bit.
TrustRecord update_trust(const TrustRecord& rec, const Weights& w, double threshold, Slot slot);

// Adds a report's counts to its subject's record. Components are re-evaluated
// at the next trust step.
void fold_report(TrustRecord& rec, const BehaviorReport& r);

// Full per-slot evaluation: components from counters, weights, new trust.
TrustRecord trust_step(const TrustRecord& rec, const TrustParams& params, Rng& rng, Slot slot);

// First slot whose trust is below thr. history[k] is the value at first_slot + k.
std::optional<Slot> detection_step(std::span<const double> history, double thr,
                                   Slot first_slot = 1);

struct TrustRow {
  NodeId node = 0;
  Slot slot = 0;
  double T = 0.0;
  double T_dr = 0.0;
  double T_tp = 0.0;
  bool flagged = false;
};

class TrustTable {
 public:
  TrustTable() = default;
  TrustTable(std::size_t n, const TrustParams& params);

  std::size_t size() const { return records_.size(); }
  const TrustRecord& at(NodeId i) const { return records_.at(i); }
  TrustRecord& at(NodeId i) { return records_.at(i); }
  const std::vector<TrustRecord>& records() const { return records_; }
  const TrustParams& params() const { return params_; }

  std::vector<double> values() const;
  bool flagged(NodeId i) const { return records_.at(i).flagged; }

  void fold(const BehaviorReport& r) { fold_report(records_.at(r.subject), r); }

  // Recompute every node; returns ids newly flagged in this step.
  std::vector<NodeId> step(Slot slot, Rng& rng);

  std::vector<TrustRow> rows(Slot slot) const;

 private:
  TrustParams params_;
  std::vector<TrustRecord> records_;
};

void write_trust_rows(std::ostream& os, std::span<const TrustRow> rows);

}  // namespace trustroute
