#include "trustroute/traffic.hpp"

#include <algorithm>
#include <map>

namespace trustroute {

EnqueueResult FifoQueue::enqueue(DemandId d) {
  if (entries_.size() >= capacity_) return EnqueueResult::QueueFull;
  entries_.push_back(d);
  return EnqueueResult::Ok;
}

std::optional<DemandId> FifoQueue::pop_front() {
  if (entries_.empty()) return std::nullopt;
  const DemandId d = entries_.front();
  entries_.pop_front();
  return d;
}

bool FifoQueue::remove(DemandId d) {
  const auto it = std::find(entries_.begin(), entries_.end(), d);
  if (it == entries_.end()) return false;
  entries_.erase(it);
  return true;
}

bool FifoQueue::contains(DemandId d) const {
  return std::find(entries_.begin(), entries_.end(), d) != entries_.end();
}

std::size_t update_queue_length(std::size_t previous, std::size_t received, std::size_t transmitted,
                                std::size_t c_max) {
  const auto total_in = previous + received;
  if (transmitted > total_in) {
    throw InvariantBreach("queue would go negative: " + std::to_string(previous) + " + " +
                          std::to_string(received) + " - " + std::to_string(transmitted));
  }
  const auto next = total_in - transmitted;
  if (next > c_max) {
    throw InvariantBreach("queue length " + std::to_string(next) + " exceeds capacity " +
                          std::to_string(c_max));
  }
  return next;
}

double queue_delay(std::span<const QueuedTransmission> ahead) {
  double total = 0.0;
  for (const auto& q : ahead) {
    if (!(q.rate_bps > 0.0)) throw NoRoute("a queued demand has no next hop this slot");
    total += q.bits / q.rate_bps;
  }
  return total;
}

double transmission_delay(double bits, double rate_bps) {
  if (!(rate_bps > 0.0)) throw DomainError("transmission needs a positive rate");
  return bits / rate_bps;
}

HopDelay hop_delay(double queue_d, double tx_d, double t_one_max) {
  const double d = queue_d + tx_d;
  return {d, d > t_one_max};
}

double end_to_end_delay(const Demand& d) {
  if (!d.delivered()) throw NotDelivered("demand " + std::to_string(d.id) + " not delivered");
  double total = 0.0;
  for (const auto& h : d.path) total += h.delay();
  return total;
}

double metric_delay(const Demand& d) {
  double total = 0.0;
  for (const auto& h : d.path) total += h.delay();
  return total + d.unfinished_penalty;
}

std::string to_string(FlowConstraint c) {
  switch (c) {
    case FlowConstraint::SourceEmitsOnce: return "source-emits-once";
    case FlowConstraint::RelayConservation: return "relay-conservation";
    case FlowConstraint::SinglePath: return "single-path";
    case FlowConstraint::DestinationReceivesOnce: return "destination-receives-once";
  }
  return "unknown";
}

std::vector<FlowViolation> validate_flow(const FlowTrace& trace) {
  std::vector<FlowViolation> out;
  std::map<DemandId, std::vector<const FlowEvent*>> by_demand;
  for (const auto& e : trace.events) by_demand[e.demand].push_back(&e);

  for (const auto& fd : trace.demands) {
    const auto& events = by_demand[fd.id];
    NodeId loc = fd.source;
    DemandStatus status = DemandStatus::InFlight;
    std::size_t cursor = 0;
    Slot last = trace.last_slot;
    for (const auto* e : events) last = std::max(last, e->slot);

    for (Slot t = fd.birth_slot; t <= last; ++t) {
      const std::size_t begin = cursor;
      while (cursor < events.size() && events[cursor]->slot == t) ++cursor;
      if (cursor < events.size() && events[cursor]->slot < t) {
        // Unreachable given sorted input; guard against out-of-order traces.
        out.push_back({FlowConstraint::SinglePath, fd.id, t, loc, "events out of slot order"});
        break;
      }
      const bool any = cursor > begin;
      if (status != DemandStatus::InFlight) {
        if (any) {
          const auto c = status == DemandStatus::Delivered ? FlowConstraint::DestinationReceivesOnce
                                                           : FlowConstraint::SinglePath;
          out.push_back({c, fd.id, t, events[begin]->from, "demand moved after it left the network"});
        }
        continue;
      }
      if (!any) {
        if (t < trace.last_slot || (t == trace.last_slot && t == fd.birth_slot)) {
          const auto c = loc == fd.source ? FlowConstraint::SourceEmitsOnce : FlowConstraint::SinglePath;
          out.push_back({c, fd.id, t, loc, "no forward or hold while in flight"});
        }
        continue;
      }
      bool held = false;
      for (std::size_t k = begin; k < cursor; ++k) {
        const auto& e = *events[k];
        if (status != DemandStatus::InFlight) {
          out.push_back({FlowConstraint::DestinationReceivesOnce, fd.id, t, e.from,
                         "event after the demand left the network"});
          continue;
        }
        if (e.kind == FlowEventKind::Reinject) {
          if (e.from != loc) {
            out.push_back({FlowConstraint::RelayConservation, fd.id, t, e.from,
                           "re-injection from a node that does not hold the demand"});
          } else {
            loc = e.to;
          }
          continue;
        }
        if (held) {
          out.push_back({FlowConstraint::SinglePath, fd.id, t, e.from, "action after a hold"});
          continue;
        }
        if (e.from != loc) {
          const auto c = e.from == fd.source ? FlowConstraint::SourceEmitsOnce
                                             : FlowConstraint::RelayConservation;
          out.push_back({c, fd.id, t, e.from,
                         "node " + std::to_string(e.from) + " emitted a demand held by " +
                             std::to_string(loc)});
          continue;
        }
        switch (e.kind) {
          case FlowEventKind::Forward:
            if (e.to == e.from) {
              out.push_back({FlowConstraint::SinglePath, fd.id, t, e.from, "forward to self"});
              break;
            }
            loc = e.to;
            if (loc == fd.destination) status = DemandStatus::Delivered;
            break;
          case FlowEventKind::Hold:
            held = true;
            break;
          case FlowEventKind::Drop:
            status = DemandStatus::Dropped;
            break;
          case FlowEventKind::Reinject:
            break;
        }
      }
      if (status == DemandStatus::InFlight && !held && t < trace.last_slot) {
        out.push_back({FlowConstraint::RelayConservation, fd.id, t, loc,
                       "demand received but neither forwarded nor held"});
      }
    }
  }
  return out;
}

}  // namespace trustroute
