#include <sstream>

#include "doctest.h"
#include "trustroute/trust.hpp"

using namespace trustroute;

namespace {

TrustRecord record(double T, double dr, double tp) {
  TrustRecord r;
  r.T = T;
  r.T_dr = dr;
  r.T_tp = tp;
  return r;
}

}  // namespace

TEST_SUITE("trust") {

TEST_CASE("delivery and path components") {
  TrustRecord r;
  r.cum_rx = 10;
  r.cum_tx = 8;
  CHECK(delivery_rate_eval(r) == doctest::Approx(0.8));
  CHECK(delivery_rate_eval(TrustRecord{}) == 1.0);
  r.cum_rx = r.cum_tx = 5;
  CHECK(delivery_rate_eval(r) == 1.0);

  TrustRecord p;
  p.cum_paths = 10;
  p.cum_bad_paths = 2;
  CHECK(path_eval(p) == doctest::Approx(0.8));
  CHECK(path_eval(TrustRecord{}) == 1.0);
  p.cum_bad_paths = 10;
  CHECK(path_eval(p) == 0.0);

  // With no observations the last value is kept, not reset.
  TrustRecord kept = record(0.9, 0.6, 0.7);
  CHECK(delivery_rate_eval(kept) == 0.6);
  CHECK(path_eval(kept) == 0.7);
}

TEST_CASE("weight examples") {
  TrustParams tp;
  Rng rng(1);
  auto w = compute_weights(WeightScheme::Adaptive, 1.0, 1.0, 1.0, tp, rng);
  CHECK(w.psi0 == doctest::Approx(0.4));
  CHECK(w.psi1 == doctest::Approx(0.3));
  CHECK(w.psi2 == doctest::Approx(0.3));

  w = compute_weights(WeightScheme::Adaptive, 1.0, 0.5, 1.0, tp, rng);
  CHECK(w.psi0 == doctest::Approx(0.4));
  CHECK(w.psi1 == doctest::Approx(0.6));
  CHECK(w.psi2 == doctest::Approx(0.0));

  for (int k = 0; k < 10000; ++k) {
    w = compute_weights(WeightScheme::Random, 1.0, 0.7, 0.9, tp, rng);
    CHECK(w.psi1 >= 0.12);
    CHECK(w.psi1 <= 0.48);
  }

  CHECK_THROWS_AS(compute_weights(WeightScheme::Average, 0.0, 1, 1, tp, rng), DomainError);
}

TEST_CASE("psi0 is capped") {
  TrustParams tp;
  Rng rng(1);
  const auto w = compute_weights(WeightScheme::Average, 0.3, 0.5, 0.5, tp, rng);
  CHECK(w.psi0 == tp.psi0_cap);
  CHECK(w.psi1 >= 0.0);
}

TEST_CASE("printed denominator is available but not normalised") {
  TrustParams tp;
  tp.denominator = WeightDenominator::Printed;
  Rng rng(1);
  const auto w = compute_weights(WeightScheme::Adaptive, 1.0, 0.5, 0.8, tp, rng);
  CHECK(w.psi1 == doctest::Approx(0.6 * 0.5 / 2.3));
  CHECK(w.psi2 == doctest::Approx(0.6 * 0.2 / 2.3));
  CHECK(std::abs(w.sum() - 1.0) > 1e-3);
}

TEST_CASE("trust update examples") {
  auto honest = update_trust(record(1, 1, 1), {0.4, 0.3, 0.3}, 0.8, 3);
  CHECK(honest.T == 1.0);
  CHECK_FALSE(honest.flagged);

  auto bad = update_trust(record(1, 0.5, 1), {0.4, 0.6, 0.0}, 0.8, 3);
  CHECK(bad.T == doctest::Approx(0.7));
  CHECK(bad.flagged);
  CHECK(bad.flag_slot == Slot{3});

  // Flag slot is the first crossing only.
  auto again = update_trust(bad, {0.4, 0.6, 0.0}, 0.8, 9);
  CHECK(again.flag_slot == Slot{3});

  auto worst = update_trust(record(0.9, 0, 0), {0.5, 0.25, 0.25}, 0.8, 1);
  CHECK(worst.T == doctest::Approx(0.45));
  CHECK(worst.T < 0.9);
}

TEST_CASE("weights stay in the simplex") {
  Rng rng(2024);
  for (int k = 0; k < 20000; ++k) {
    TrustParams tp;
    tp.threshold = rng.uniform(0.05, 1.0);
    const double T = rng.uniform(1e-3, 1.0);
    const double dr = rng.uniform(), tpv = rng.uniform();
    for (auto s : {WeightScheme::Adaptive, WeightScheme::Average, WeightScheme::Random}) {
      const auto w = compute_weights(s, T, dr, tpv, tp, rng);
      CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
      CHECK(w.psi0 >= 0.0);
      CHECK(w.psi1 >= 0.0);
      CHECK(w.psi2 >= 0.0);
    }
  }
}

TEST_CASE("honest fixed point is exact") {
  TrustParams tp;
  Rng rng(3);
  for (auto s : {WeightScheme::Adaptive, WeightScheme::Average}) {
    tp.scheme = s;
    TrustRecord r;
    for (Slot t = 1; t <= 1000; ++t) r = trust_step(r, tp, rng, t);
    CHECK(r.T == 1.0);
    CHECK_FALSE(r.flagged);
  }
}

TEST_CASE("equal-weight trust is monotone in the delivery component") {
  TrustParams tp;
  Rng rng(4);
  for (int k = 0; k < 2000; ++k) {
    const double T = rng.uniform(0.5, 1.0), ttp = rng.uniform();
    double lo = rng.uniform(), hi = rng.uniform();
    if (lo > hi) std::swap(lo, hi);
    // Adaptive weights move mass towards the other component as T_dr rises,
    // so only the fixed split is monotone.
    const auto wl = compute_weights(WeightScheme::Average, T, lo, ttp, tp, rng);
    const auto wh = compute_weights(WeightScheme::Average, T, hi, ttp, tp, rng);
    const double tl = update_trust(record(T, lo, ttp), wl, tp.threshold, 1).T;
    const double th = update_trust(record(T, hi, ttp), wh, tp.threshold, 1).T;
    CHECK(tl <= th + 1e-12);
  }
}

TEST_CASE("one adaptive step never ends above one average step") {
  // Closed form of the gap: -(1 - psi0) (T_dr - T_tp)^2 / (2 (2 - T_dr - T_tp)).
  TrustParams tp;
  Rng rng(5);
  for (int k = 0; k < 20000; ++k) {
    const double T = rng.uniform(0.2, 1.0), dr = rng.uniform(), ttp = rng.uniform();
    if (dr + ttp >= 2.0) continue;
    const auto wa = compute_weights(WeightScheme::Adaptive, T, dr, ttp, tp, rng);
    const auto wv = compute_weights(WeightScheme::Average, T, dr, ttp, tp, rng);
    const double ta = wa.psi0 * T + wa.psi1 * dr + wa.psi2 * ttp;
    const double tv = wv.psi0 * T + wv.psi1 * dr + wv.psi2 * ttp;
    const double gap = -(1.0 - wa.psi0) * (dr - ttp) * (dr - ttp) / (2.0 * (2.0 - dr - ttp));
    CHECK(ta <= tv + 1e-12);
    CHECK(ta - tv == doctest::Approx(gap).epsilon(1e-9).scale(1.0));
    // The larger weight sits on the weaker component.
    if (dr < ttp) CHECK(wa.psi1 >= wa.psi2);
    if (ttp < dr) CHECK(wa.psi2 >= wa.psi1);
  }
}

TEST_CASE("detection step") {
  std::vector<double> h{1, 0.95, 0.9, 0.88, 0.85, 0.82, 0.79, 0.7};
  CHECK(detection_step(h, 0.8) == Slot{7});
  std::vector<double> never{1, 0.9, 0.85};
  CHECK_FALSE(detection_step(never, 0.8).has_value());
  std::vector<double> first{0.5};
  CHECK(detection_step(first, 0.8) == Slot{1});
}

TEST_CASE("reports fold into counters") {
  TrustTable table(3, TrustParams{});
  table.fold(BehaviorReport::delivery(0, 1, 1, 1, 1));
  table.fold(BehaviorReport::delivery(0, 1, 1, 1, 0));
  table.fold(BehaviorReport::path_check(2, 1, 1, 1, 1));
  CHECK(table.at(1).cum_rx == 2);
  CHECK(table.at(1).cum_tx == 1);
  CHECK(table.at(1).cum_paths == 1);
  CHECK(table.at(1).cum_bad_paths == 1);
  CHECK_THROWS_AS(table.fold(BehaviorReport::delivery(0, 1, 1, 1, 2)), InvariantBreach);

  Rng rng(1);
  const auto newly = table.step(1, rng);
  CHECK(newly == std::vector<NodeId>{1});
  CHECK(table.flagged(1));
  CHECK_FALSE(table.flagged(0));

  std::ostringstream os;
  const auto rows = table.rows(1);
  write_trust_rows(os, rows);
  CHECK(os.str().rfind("node,slot,trust,delivery_rate,path_correctness,flagged\n", 0) == 0);
}

TEST_CASE("scheme names round-trip") {
  for (auto s : {WeightScheme::Adaptive, WeightScheme::Average, WeightScheme::Random}) {
    CHECK(parse_weight_scheme(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_weight_scheme("median"), ValidationError);
}

}  // TEST_SUITE
