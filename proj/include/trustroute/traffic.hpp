#pragma once

// FIFO queueing, per-hop and end-to-end delay accounting, and flow-constraint
// validation for routed demands.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustroute/core.hpp"

namespace trustroute {

using DemandId = std::uint32_t;

struct HopRecord {
  NodeId from = 0;
  NodeId to = 0;  // == from for a hold into the next slot
  Slot slot = 0;
  double queue_delay = 0.0;
  double tx_delay = 0.0;
  bool clipped = false;
  bool followed_specified_path = true;

  bool is_hold() const { return from == to; }
  double delay() const { return queue_delay + tx_delay; }
};

enum class DemandStatus { InFlight, Delivered, Dropped };

struct Demand {
  DemandId id = 0;
  NodeId source = 0;
  NodeId destination = 0;
  double size_bits = 0.0;
  Slot birth_slot = 0;
  std::vector<HopRecord> path;
  DemandStatus status = DemandStatus::InFlight;
  NodeId holder = 0;
  std::optional<NodeId> upstream;  // node that handed the demand to its holder
  double accumulated_delay = 0.0;
  // Metric charge for hops never completed (dropped or cut off by the horizon).
  double unfinished_penalty = 0.0;

  bool delivered() const { return status == DemandStatus::Delivered; }
};

enum class EnqueueResult { Ok, QueueFull };

class FifoQueue {
 public:
  explicit FifoQueue(std::size_t capacity = 50) : capacity_(capacity) {}

  EnqueueResult enqueue(DemandId d);
  std::optional<DemandId> pop_front();
  bool remove(DemandId d);
  bool contains(DemandId d) const;
  void clear() { entries_.clear(); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<DemandId>& entries() const { return entries_; }

 private:
  std::deque<DemandId> entries_;
  std::size_t capacity_;
};

// C(t) = C(t-1) + rx - tx; InvariantBreach if the result leaves [0, c_max].
std::size_t update_queue_length(std::size_t previous, std::size_t received, std::size_t transmitted,
                                std::size_t c_max);

struct QueuedTransmission {
  double bits = 0.0;
  double rate_bps = 0.0;  // rate towards this demand's chosen next hop; <= 0 if undecided
};

// Sum over demands queued ahead of L / rate(next hop). NoRoute if one of them
// has no next hop this slot.
double queue_delay(std::span<const QueuedTransmission> ahead);

double transmission_delay(double bits, double rate_bps);

struct HopDelay {
  double delay = 0.0;
  bool clipped = false;
};

HopDelay hop_delay(double queue_d, double tx_d, double t_one_max);

// Sum of per-hop queue + transmission delays; NotDelivered otherwise.
double end_to_end_delay(const Demand& d);

// Delay charged in metrics: realised hops plus the unfinished-hop penalty.
double metric_delay(const Demand& d);

// --- flow validation -------------------------------------------------------

// Reinject moves a demand off a node that was just isolated, back to its
// previous holder; it is bookkeeping, not a routing action.
enum class FlowEventKind { Forward, Hold, Drop, Reinject };

struct FlowEvent {
  DemandId demand = 0;
  Slot slot = 0;
  NodeId from = 0;
  NodeId to = 0;
  FlowEventKind kind = FlowEventKind::Forward;
};

struct FlowDemand {
  DemandId id = 0;
  NodeId source = 0;
  NodeId destination = 0;
  Slot birth_slot = 0;
};

struct FlowTrace {
  std::vector<FlowDemand> demands;
  std::vector<FlowEvent> events;  // in execution order
  Slot last_slot = 0;
};

enum class FlowConstraint {
  SourceEmitsOnce,        // source hands the demand to exactly one receiver
  RelayConservation,      // in + held-in = out + held-out at relays
  SinglePath,             // exactly one forward or hold per slot while in flight
  DestinationReceivesOnce,
};

struct FlowViolation {
  FlowConstraint constraint;
  DemandId demand = 0;
  Slot slot = 0;
  NodeId node = 0;
  std::string detail;
};

std::vector<FlowViolation> validate_flow(const FlowTrace& trace);

std::string to_string(FlowConstraint c);

// Per-node, per-slot queue bookkeeping for the C(t) identity.
struct QueueSample {
  NodeId node = 0;
  Slot slot = 0;
  std::size_t length_before = 0;
  std::size_t arrivals = 0;
  std::size_t departures = 0;
  std::size_t length_after = 0;
};

}  // namespace trustroute
