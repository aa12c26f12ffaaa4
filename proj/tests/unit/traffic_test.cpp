#include "doctest.h"
#include "trustroute/traffic.hpp"

using namespace trustroute;

namespace {

FlowTrace one_demand(NodeId src, NodeId dst, Slot last, std::vector<FlowEvent> events) {
  FlowTrace t;
  t.demands.push_back({0, src, dst, 0});
  t.events = std::move(events);
  t.last_slot = last;
  return t;
}

HopRecord hop(double q, double tx) {
  HopRecord h;
  h.queue_delay = q;
  h.tx_delay = tx;
  return h;
}

}  // namespace

TEST_SUITE("traffic") {

TEST_CASE("fifo queue capacity and order") {
  FifoQueue q(50);
  CHECK(q.enqueue(7) == EnqueueResult::Ok);
  CHECK(q.entries().front() == 7);
  for (DemandId d = 100; q.size() < 49; ++d) REQUIRE(q.enqueue(d) == EnqueueResult::Ok);
  CHECK(q.enqueue(1) == EnqueueResult::Ok);
  CHECK(q.size() == 50);
  CHECK(q.enqueue(2) == EnqueueResult::QueueFull);
  CHECK(q.size() == 50);
  CHECK(q.pop_front() == DemandId{7});
  CHECK(q.remove(1));
  CHECK_FALSE(q.contains(1));
  CHECK_FALSE(q.remove(1));
}

TEST_CASE("queue length identity") {
  CHECK(update_queue_length(5, 3, 2, 50) == 6);
  CHECK(update_queue_length(0, 0, 0, 50) == 0);
  CHECK_THROWS_AS(update_queue_length(2, 0, 3, 50), InvariantBreach);
  CHECK_THROWS_AS(update_queue_length(49, 2, 0, 50), InvariantBreach);
}

TEST_CASE("queue and transmission delay") {
  CHECK(queue_delay({}) == 0.0);
  const std::vector<QueuedTransmission> three(3, {5e5, 3.319e7});
  CHECK(queue_delay(three) == doctest::Approx(3 * 5e5 / 3.319e7).epsilon(1e-12));
  CHECK(queue_delay(three) == doctest::Approx(0.0452).epsilon(1e-3));
  const std::vector<QueuedTransmission> one{{4e5, 2e6}};
  CHECK(queue_delay(one) == doctest::Approx(0.2));
  const std::vector<QueuedTransmission> undecided{{4e5, 0.0}};
  CHECK_THROWS_AS(queue_delay(undecided), NoRoute);

  CHECK(transmission_delay(5e5, 2e6) == doctest::Approx(0.25));
  CHECK(transmission_delay(0.0, 2e6) == 0.0);
  CHECK(transmission_delay(5e5, 33.2e6) == doctest::Approx(0.01506).epsilon(1e-3));
  CHECK_THROWS_AS(transmission_delay(5e5, 0.0), DomainError);
}

TEST_CASE("hop delay clipping flag") {
  auto a = hop_delay(0.05, 0.25, 0.5);
  CHECK(a.delay == doctest::Approx(0.30));
  CHECK_FALSE(a.clipped);
  auto b = hop_delay(0.4, 0.3, 0.5);
  CHECK(b.delay == doctest::Approx(0.70));
  CHECK(b.clipped);
  auto c = hop_delay(0.0, 0.0, 0.5);
  CHECK(c.delay == 0.0);
  CHECK_FALSE(c.clipped);
}

TEST_CASE("end-to-end delay sums hop records") {
  Demand d;
  d.path = {hop(0.0, 0.1), hop(0.05, 0.15)};
  CHECK_THROWS_AS(end_to_end_delay(d), NotDelivered);
  d.status = DemandStatus::Delivered;
  CHECK(end_to_end_delay(d) == doctest::Approx(0.3));
  d.path = {hop(0.0, 0.25)};
  CHECK(end_to_end_delay(d) == 0.25);

  Demand lost;
  lost.status = DemandStatus::Dropped;
  lost.path = {hop(0.0, 0.1)};
  lost.unfinished_penalty = 1.0;
  CHECK(metric_delay(lost) == doctest::Approx(1.1));
}

TEST_CASE("flow validation examples") {
  using K = FlowEventKind;
  // Several hops inside one slot.
  auto ok = one_demand(0, 2, 1, {{0, 0, 0, 1, K::Forward}, {0, 0, 1, 2, K::Forward}});
  CHECK(validate_flow(ok).empty());

  auto dup = one_demand(0, 3, 0, {{0, 0, 0, 1, K::Forward}, {0, 0, 0, 2, K::Forward}});
  const auto v = validate_flow(dup);
  REQUIRE_FALSE(v.empty());
  CHECK(v.front().constraint == FlowConstraint::SourceEmitsOnce);

  // Relay 1 holds across a slot boundary, then forwards.
  auto held = one_demand(0, 2, 2,
                         {{0, 0, 0, 1, K::Forward}, {0, 0, 1, 1, K::Hold}, {0, 1, 1, 2, K::Forward}});
  CHECK(validate_flow(held).empty());

  // A relay that neither forwards nor holds what it received.
  auto stuck = one_demand(0, 2, 2, {{0, 0, 0, 1, K::Forward}, {0, 1, 1, 2, K::Forward}});
  const auto s = validate_flow(stuck);
  REQUIRE_FALSE(s.empty());
  CHECK(s.front().constraint == FlowConstraint::RelayConservation);
}

TEST_CASE("flow validation rejects broken traces") {
  using K = FlowEventKind;
  // Relay emits a demand it never received.
  auto ghost = one_demand(0, 3, 1, {{0, 0, 0, 1, K::Forward}, {0, 1, 2, 3, K::Forward}});
  CHECK_FALSE(validate_flow(ghost).empty());

  // Delivered twice.
  auto twice = one_demand(0, 1, 1, {{0, 0, 0, 1, K::Forward}, {0, 1, 1, 1, K::Hold}});
  const auto v = validate_flow(twice);
  REQUIRE_FALSE(v.empty());
  CHECK(v.front().constraint == FlowConstraint::DestinationReceivesOnce);

  // Idle while in flight before the horizon.
  auto idle = one_demand(0, 2, 3, {{0, 0, 0, 1, K::Forward}});
  CHECK_FALSE(validate_flow(idle).empty());

  // Horizon cut: in flight at the last slot with no action is fine.
  auto cut = one_demand(0, 2, 1, {{0, 0, 0, 1, K::Forward}, {0, 0, 1, 1, K::Hold}});
  CHECK(validate_flow(cut).empty());

  // Re-injection back to the previous holder, then delivery.
  auto back = one_demand(0, 3, 1,
                         {{0, 0, 0, 1, K::Forward}, {0, 0, 1, 0, K::Reinject}, {0, 0, 0, 3, K::Forward}});
  CHECK(validate_flow(back).empty());
}

}  // TEST_SUITE
