#include "trustroute/trust.hpp"

#include <algorithm>
#include <ostream>

#include "trustroute/format.hpp"

namespace trustroute {

std::string to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::Adaptive: return "adaptive";
    case WeightScheme::Average: return "average";
    case WeightScheme::Random: return "random";
  }
  return "unknown";
}

WeightScheme parse_weight_scheme(const std::string& s) {
  if (s == "adaptive") return WeightScheme::Adaptive;
  if (s == "average") return WeightScheme::Average;
  if (s == "random") return WeightScheme::Random;
  throw ValidationError("trust.scheme must be adaptive, average or random, got '" + s + "'");
}

void TrustParams::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("trust.threshold must lie in (0, 1]");
  if (!(initial > 0.0 && initial <= 1.0)) throw ValidationError("trust.initial must lie in (0, 1]");
  if (!(psi0_cap > 0.0 && psi0_cap < 1.0)) throw ValidationError("trust.psi0_cap must lie in (0, 1)");
}

double delivery_rate_eval(const TrustRecord& rec) {
  if (rec.cum_rx == 0) return rec.T_dr;
  return static_cast<double>(rec.cum_tx) / static_cast<double>(rec.cum_rx);
}

double path_eval(const TrustRecord& rec) {
  if (rec.cum_paths == 0) return rec.T_tp;
  return 1.0 - static_cast<double>(rec.cum_bad_paths) / static_cast<double>(rec.cum_paths);
}

Weights compute_weights(WeightScheme scheme, double T, double T_dr, double T_tp,
                        const TrustParams& params, Rng& rng) {
  if (!(T > 0.0)) throw DomainError("trust must be positive to derive weights");
  Weights w;
  w.psi0 = std::min(0.5 * params.threshold / T, params.psi0_cap);
  const double rest = 1.0 - w.psi0;
  switch (scheme) {
    case WeightScheme::Average:
      w.psi1 = rest / 2.0;
      w.psi2 = rest - w.psi1;
      break;
    case WeightScheme::Random:
      w.psi1 = rng.uniform(0.2 * rest, 0.8 * rest);
      w.psi2 = rest - w.psi1;
      break;
    case WeightScheme::Adaptive: {
      const double gap_dr = 1.0 - T_dr;
      const double gap_tp = 1.0 - T_tp;
      if (params.denominator == WeightDenominator::Printed) {
        const double denom = 2.0 - T_dr + T_tp;
        w.normalized = false;
        if (gap_dr + gap_tp <= 0.0) {
          w.psi1 = rest / 2.0;
          w.psi2 = rest - w.psi1;
        } else {
          w.psi1 = rest * gap_dr / denom;
          w.psi2 = rest * gap_tp / denom;
        }
        break;
      }
      const double denom = gap_dr + gap_tp;
      if (denom <= 0.0) {
        w.psi1 = rest / 2.0;
        w.psi2 = rest - w.psi1;
      } else {
        w.psi1 = rest * gap_dr / denom;
        w.psi2 = rest - w.psi1;
      }
      break;
    }
  }
  return w;
}

TrustRecord update_trust(const TrustRecord& rec, const Weights& w, double threshold, Slot slot) {
  TrustRecord out = rec;
  const double raw = w.normalized
                        ? rec.T + w.psi1 * (rec.T_dr - rec.T) + w.psi2 * (rec.T_tp - rec.T)
                        : w.psi0 * rec.T + w.psi1 * rec.T_dr + w.psi2 * rec.T_tp;
  out.T = std::clamp(raw, 0.0, 1.0);
  if (out.T < threshold && !out.flagged) {
    out.flagged = true;
    out.flag_slot = slot;
  }
  return out;
}

void fold_report(TrustRecord& rec, const BehaviorReport& r) {
  switch (r.kind) {
    case ReportKind::Delivery:
      if (r.second > r.first) throw InvariantBreach("delivery report with tx > rx");
      rec.cum_rx += r.first;
      rec.cum_tx += r.second;
      break;
    case ReportKind::PathCheck:
      if (r.second > r.first) throw InvariantBreach("path report with bad > total");
      rec.cum_paths += r.first;
      rec.cum_bad_paths += r.second;
      break;
  }
}

TrustRecord trust_step(const TrustRecord& rec, const TrustParams& params, Rng& rng, Slot slot) {
  TrustRecord cur = rec;
  cur.T_dr = delivery_rate_eval(rec);
  cur.T_tp = path_eval(rec);
  if (!(cur.T > 0.0)) return cur;
  const Weights w = compute_weights(params.scheme, cur.T, cur.T_dr, cur.T_tp, params, rng);
  return update_trust(cur, w, params.threshold, slot);
}

std::optional<Slot> detection_step(std::span<const double> history, double thr, Slot first_slot) {
  for (std::size_t k = 0; k < history.size(); ++k) {
    if (history[k] < thr) return first_slot + static_cast<Slot>(k);
  }
  return std::nullopt;
}

TrustTable::TrustTable(std::size_t n, const TrustParams& params) : params_(params) {
  records_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    records_[i].node = static_cast<NodeId>(i);
    records_[i].T = params.initial;
  }
}

std::vector<double> TrustTable::values() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.T);
  return out;
}

std::vector<NodeId> TrustTable::step(Slot slot, Rng& rng) {
  std::vector<NodeId> newly;
  for (auto& r : records_) {
    const bool was = r.flagged;
    r = trust_step(r, params_, rng, slot);
    if (r.flagged && !was) newly.push_back(r.node);
  }
  return newly;
}

std::vector<TrustRow> TrustTable::rows(Slot slot) const {
  std::vector<TrustRow> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back({r.node, slot, r.T, r.T_dr, r.T_tp, r.flagged});
  return out;
}

void write_trust_rows(std::ostream& os, std::span<const TrustRow> rows) {
  os << "node,slot,trust,delivery_rate,path_correctness,flagged\n";
  for (const auto& r : rows) {
    os << r.node << ',' << r.slot << ',' << format_double(r.T) << ',' << format_double(r.T_dr)
       << ',' << format_double(r.T_tp) << ',' << (r.flagged ? 1 : 0) << '\n';
  }
}

}  // namespace trustroute
