#include "trustroute/environment.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "trustroute/marl.hpp"
#include "trustroute/oracle.hpp"

namespace trustroute {

void TrafficParams::validate() const {
  if (!(size_min_bits > 0.0 && size_min_bits <= size_max_bits)) {
    throw ValidationError("traffic requires 0 < size_min_bits <= size_max_bits");
  }
  if (c_max < 1) throw ValidationError("traffic.c_max must be >= 1");
  if (!(t_one_max > 0.0)) throw ValidationError("traffic.t_one_max must be > 0");
}

void WorldConfig::validate() const {
  if (nodes < 2) throw ValidationError("nodes must be >= 2");
  slot.validate();
  traffic.validate();
  attack.validate();
  trust.validate();
  consensus.validate();
  if (attack.f > nodes) throw ValidationError("attack.f must not exceed nodes");
  if (!(demands_per_slot >= 0.0)) throw ValidationError("demands_per_slot must be >= 0");
  if (!fixed_positions.empty() && fixed_positions.size() != nodes) {
    throw ValidationError("fixed_positions must list one position per node");
  }
  for (const auto& d : fixed_demands) {
    if (d.source >= nodes || d.destination >= nodes || d.source == d.destination) {
      throw ValidationError("fixed demand endpoints must be distinct node ids");
    }
    if (!(d.bits > 0.0)) throw ValidationError("fixed demand size must be > 0");
  }
  if (btmm && nodes < consensus_size(consensus.n)) {
    throw ValidationError("consensus.n needs at least 3n+1 nodes");
  }
  // Removing a member needs 2f confirmations from the other 3n members.
  if (btmm && 3 * consensus.n < 2 * std::max<std::size_t>(attack.f, 1) + 1) {
    throw ValidationError("consensus.n too small for attack.f: membership rotation needs 3n >= 2f+1");
  }
}

std::size_t OraclePolicy::decide(const Decision& d) {
  try {
    const auto plan = oracle_shortest_delay(*d.snap, d.node, d.demand->destination,
                                            d.demand->size_bits, d.flagged);
    const auto& gamma = d.snap->gamma(d.node);
    for (std::size_t k = 0; k < gamma.size() && k < d.q; ++k) {
      if (gamma[k] == plan.path[1]) return k;
    }
  } catch (const Unreachable&) {
  }
  return d.q;
}

std::size_t RandomPolicy::decide(const Decision& d) {
  const auto mask = action_mask(d.node, *d.snap, d.q);
  std::vector<std::size_t> valid;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) valid.push_back(k);
  }
  return valid[rng_.below(valid.size())];
}

struct Simulator::SlotScratch {
  std::vector<BehaviorReport> reports;
  std::vector<std::size_t> arrivals;
  std::vector<std::size_t> departures;
  std::vector<double> comm_energy;
  std::vector<double> mobility_energy;
  std::size_t first_hop = 0;  // index into EpisodeResult::hops where this slot starts
};

Simulator::Simulator(WorldConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      seed_(seed),
      trust_(cfg_.nodes, cfg_.trust),
      compromised_(cfg_.nodes, false),
      isolated_(cfg_.nodes, false),
      trust_rng_(Rng::stream(seed, "trust-weights")) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg_.nodes; ++i) {
    attack_rngs_.push_back(Rng::stream(seed, "attack", i));
    detour_rngs_.push_back(Rng::stream(seed, "detour", i));
  }
  if (cfg_.btmm) {
    ledger_ = std::make_unique<TpbftLedger>(cfg_.nodes, cfg_.consensus, mix64(seed ^ 0xB7AA11ULL));
    ledger_->init_consensus_set(trust_.values());
  }
}

std::size_t Simulator::max_hops_per_slot() const {
  return cfg_.traffic.max_hops_per_slot > 0 ? cfg_.traffic.max_hops_per_slot : 2 * cfg_.nodes;
}

double Simulator::remaining_hop_penalty(NodeId holder, NodeId destination) const {
  const double d = distance(states_.at(holder).position, states_.at(destination).position);
  const double hops = std::max(1.0, std::ceil(d / cfg_.slot.d_max));
  return cfg_.traffic.t_one_max * hops;
}

std::vector<NodeId> Simulator::compromised_ids() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < compromised_.size(); ++i) {
    if (compromised_[i]) out.push_back(i);
  }
  return out;
}

std::optional<Slot> Simulator::detection_slot(NodeId i) const {
  const auto& r = trust_.at(i);
  if (!r.flagged || !r.flag_slot) return std::nullopt;
  return *r.flag_slot + 1;
}

std::optional<Slot> Simulator::all_detected_slot() const {
  std::optional<Slot> worst;
  bool any = false;
  for (NodeId i = 0; i < compromised_.size(); ++i) {
    if (!compromised_[i]) continue;
    any = true;
    const auto s = detection_slot(i);
    if (!s) return std::nullopt;
    worst = worst ? std::max(*worst, *s) : *s;
  }
  return any ? worst : std::nullopt;
}

std::vector<double> Simulator::link_trust() const {
  if (!cfg_.btmm) return std::vector<double>(cfg_.nodes, 1.0);
  return trust_.values();
}

void Simulator::reset_episode() {
  mobility_rng_ = Rng::stream(seed_, "mobility", episode_);
  demand_rng_ = Rng::stream(seed_, "demands", episode_);
  if (!cfg_.fixed_positions.empty()) {
    states_.assign(cfg_.nodes, NodeState{});
    for (NodeId i = 0; i < cfg_.nodes; ++i) {
      states_[i].id = i;
      states_[i].position = cfg_.fixed_positions[i];
    }
  } else {
    // Placement is common to every episode of a run; only motion varies.
    Rng place = Rng::stream(seed_, "placement");
    states_ = place_nodes(cfg_.nodes, cfg_.slot, place);
  }
  queues_.assign(cfg_.nodes, FifoQueue(cfg_.traffic.c_max));
  demands_.clear();
  prev_energy_.assign(cfg_.nodes, 0.0);
}

void Simulator::build_snapshot() {
  for (NodeId i = 0; i < cfg_.nodes; ++i) {
    states_[i].queue_length = queues_[i].size();
    states_[i].energy_used_slot = prev_energy_[i];
    states_[i].is_malicious = compromised_[i];
    states_[i].is_isolated = isolated_[i];
  }
  const auto trust = link_trust();
  const double thr = cfg_.btmm ? cfg_.trust.threshold : 0.0;
  snap_ = build_topology(global_slot_, states_, trust, thr, cfg_.slot, cfg_.channel);
}

void Simulator::maybe_trigger_attack() {
  if (attack_chosen_ || cfg_.attack.f == 0 || global_slot_ < cfg_.attack.trigger_slot) return;
  const auto scores = importance_scores(snap_);
  for (NodeId id : select_attack_targets(scores, cfg_.attack.f)) compromised_[id] = true;
  attack_chosen_ = true;
}

std::optional<DemandId> Simulator::spawn_demand(Slot t, std::optional<DemandSpec> spec,
                                                EpisodeResult& out, SlotScratch& s) {
  Demand d;
  if (spec) {
    d.source = spec->source;
    d.destination = spec->destination;
    d.size_bits = spec->bits;
  } else {
    std::vector<NodeId> sources;
    for (NodeId i = 0; i < cfg_.nodes; ++i) {
      if (!isolated_[i] && snap_.degree(i) > 0) sources.push_back(i);
    }
    if (sources.empty()) return std::nullopt;
    d.source = sources[demand_rng_.below(sources.size())];
    // Destinations reachable from the source on the current link graph.
    std::vector<bool> seen(cfg_.nodes, false);
    std::deque<NodeId> frontier{d.source};
    seen[d.source] = true;
    std::vector<NodeId> reachable;
    while (!frontier.empty()) {
      const NodeId u = frontier.front();
      frontier.pop_front();
      for (NodeId v : snap_.gamma(u)) {
        if (seen[v]) continue;
        seen[v] = true;
        reachable.push_back(v);
        frontier.push_back(v);
      }
    }
    std::sort(reachable.begin(), reachable.end());
    d.destination = reachable[demand_rng_.below(reachable.size())];
    d.size_bits = demand_rng_.uniform(cfg_.traffic.size_min_bits, cfg_.traffic.size_max_bits);
  }
  d.id = static_cast<DemandId>(demands_.size());
  d.birth_slot = t;
  d.holder = d.source;
  demands_.push_back(d);
  if (cfg_.record_traces) out.flow.demands.push_back({d.id, d.source, d.destination, t});
  if (queues_[d.source].enqueue(d.id) == EnqueueResult::QueueFull) {
    drop_demand(demands_.back(), d.source, t, out);
    return std::nullopt;
  }
  ++s.arrivals[d.source];
  return d.id;
}

void Simulator::drop_demand(Demand& d, NodeId at, Slot t, EpisodeResult& out) {
  d.status = DemandStatus::Dropped;
  d.holder = at;
  d.unfinished_penalty = remaining_hop_penalty(at, d.destination);
  if (cfg_.traffic.drop_charge == DropCharge::Horizon) {
    d.unfinished_penalty += static_cast<double>(cfg_.slot.horizon - t) * cfg_.slot.tau;
  }
  if (cfg_.record_traces) out.flow.events.push_back({d.id, t, at, at, FlowEventKind::Drop});
}

void Simulator::route_slot(Slot t, RoutingPolicy& policy, EpisodeResult& out, SlotScratch& s) {
  const std::size_t n = cfg_.nodes;
  const std::size_t q = cfg_.slot.q;
  const auto trust = link_trust();
  std::vector<bool> flagged(n, false);
  for (NodeId i = 0; i < n; ++i) flagged[i] = cfg_.btmm && trust_.flagged(i);
  std::vector<bool> flagged_view(flagged);
  std::vector<double> tx_time(n, 0.0);
  std::vector<double> link_bits(n * n, 0.0);
  std::vector<std::size_t> arrival_round(demands_.size(), 0);
  std::vector<std::size_t> hops_in_slot(demands_.size(), 0);
  std::vector<bool> done_for_slot(demands_.size(), false);
  const std::size_t hop_cap = max_hops_per_slot();
  // std::vector<bool> has no contiguous storage; policies get a plain copy.
  std::unique_ptr<bool[]> flagged_arr(new bool[n]);
  for (NodeId i = 0; i < n; ++i) flagged_arr[i] = flagged[i];

  auto record_hold = [&](Demand& d, NodeId i) {
    HopRecord h{i, i, t, cfg_.slot.tau, 0.0, false, true};
    h.clipped = h.delay() > cfg_.traffic.t_one_max;
    d.path.push_back(h);
    d.accumulated_delay += h.delay();
    out.hops.push_back(h);
    done_for_slot[d.id] = true;
    if (cfg_.record_traces) out.flow.events.push_back({d.id, t, i, i, FlowEventKind::Hold});
  };

  for (std::size_t round = 1;; ++round) {
    bool progressed = false;
    for (NodeId i = 0; i < n; ++i) {
      if (isolated_[i] || queues_[i].empty()) continue;
      const std::vector<DemandId> pending(queues_[i].entries().begin(), queues_[i].entries().end());
      for (DemandId id : pending) {
        if (done_for_slot[id] || arrival_round[id] >= round) continue;
        Demand& d = demands_[id];
        progressed = true;

        if (hops_in_slot[id] >= hop_cap) {
          record_hold(d, i);
          continue;
        }

        Decision dec;
        dec.node = i;
        dec.demand = &d;
        dec.snap = &snap_;
        dec.trust = trust;
        dec.flagged = std::span<const bool>(flagged_arr.get(), n);
        dec.q = q;
        std::size_t action = policy.decide(dec);
        const auto& gamma = snap_.gamma(i);
        if (action >= std::min(gamma.size(), q)) action = q;
        if (action == q) {
          record_hold(d, i);
          continue;
        }
        const NodeId specified = gamma[action];
        NodeId actual = specified;

        if (compromised_[i]) {
          switch (malicious_forward_decision(cfg_.attack, attack_rngs_[i])) {
            case ForwardDecision::Drop: {
              queues_[i].remove(id);
              ++s.departures[i];
              if (cfg_.btmm && d.upstream) {
                s.reports.push_back(BehaviorReport::delivery(*d.upstream, i, global_slot_, 1, 0));
              }
              drop_demand(d, i, t, out);
              continue;
            }
            case ForwardDecision::WrongPath: {
              std::vector<NodeId> others;
              for (std::size_t k = 0; k < gamma.size() && k < q; ++k) {
                if (gamma[k] != specified) others.push_back(gamma[k]);
              }
              if (!others.empty()) actual = others[detour_rngs_[i].below(others.size())];
              break;
            }
            case ForwardDecision::Correct:
              break;
          }
        }

        const double rate = snap_.rate(i, actual);
        const double dist = snap_.distance(i, actual);
        const double tx_energy = channel::transmit_energy(d.size_bits, dist, cfg_.energy);
        const double spent = s.mobility_energy[i] + s.comm_energy[i];
        const bool fits_link = link_bits[i * n + actual] + d.size_bits <= cfg_.slot.tau * rate;
        const bool fits_energy = channel::check_energy_budget(spent + tx_energy, cfg_.energy);
        if (!fits_link || !fits_energy) {
          record_hold(d, i);
          continue;
        }

        HopRecord h;
        h.from = i;
        h.to = actual;
        h.slot = t;
        h.queue_delay = tx_time[i];
        h.tx_delay = transmission_delay(d.size_bits, rate);
        h.clipped = h.delay() > cfg_.traffic.t_one_max;
        h.followed_specified_path = actual == specified;
        tx_time[i] += h.tx_delay;
        link_bits[i * n + actual] += d.size_bits;
        s.comm_energy[i] += tx_energy;
        s.comm_energy[actual] += channel::receive_energy(d.size_bits, cfg_.energy);

        queues_[i].remove(id);
        ++s.departures[i];
        d.path.push_back(h);
        d.accumulated_delay += h.delay();
        out.hops.push_back(h);
        ++hops_in_slot[id];
        if (cfg_.record_traces) out.flow.events.push_back({id, t, i, actual, FlowEventKind::Forward});

        if (cfg_.btmm) {
          if (d.upstream) s.reports.push_back(BehaviorReport::delivery(*d.upstream, i, global_slot_, 1, 1));
          s.reports.push_back(BehaviorReport::path_check(actual, i, global_slot_, 1,
                                                         h.followed_specified_path ? 0 : 1));
        }

        d.upstream = i;
        d.holder = actual;
        if (actual == d.destination) {
          d.status = DemandStatus::Delivered;
          out.delivered_bits += d.size_bits;
          continue;
        }
        if (queues_[actual].enqueue(id) == EnqueueResult::QueueFull) {
          if (cfg_.btmm) s.reports.push_back(BehaviorReport::delivery(i, actual, global_slot_, 1, 0));
          drop_demand(d, actual, t, out);
          continue;
        }
        ++s.arrivals[actual];
        arrival_round[id] = round;
      }
    }
    if (!progressed) break;
  }
}

void Simulator::trust_tick(Slot t, EpisodeResult& out, SlotScratch& s) {
  if (!cfg_.btmm) return;
  const std::size_t n = cfg_.nodes;
  for (NodeId i = 0; i < n; ++i) states_[i].is_isolated = isolated_[i];
  const auto labels = range_components(states_, cfg_.slot.d_max);
  const bool range_limited = cfg_.consensus.range_limited;
  const Reach reach = [&](NodeId a, NodeId b) {
    return !isolated_[a] && !isolated_[b] && (!range_limited || labels[a] == labels[b]);
  };

  std::vector<BehaviorReport> reports;
  reports.swap(outbox_);
  reports.insert(reports.end(), s.reports.begin(), s.reports.end());
  std::vector<std::vector<BehaviorReport>> by_reporter(n);
  for (const auto& r : reports) by_reporter[r.reporter].push_back(r);
  std::vector<Vec3> positions(n);
  for (NodeId i = 0; i < n; ++i) positions[i] = states_[i].position;
  for (NodeId i = 0; i < n; ++i) {
    if (by_reporter[i].empty() || isolated_[i]) continue;
    auto tx = ledger_->make_transaction(i, by_reporter[i]);
    try {
      ledger_->submit(tx, positions, reach);
    } catch (const NoConsensusReachable&) {
      outbox_.insert(outbox_.end(), by_reporter[i].begin(), by_reporter[i].end());
    }
  }
  const std::size_t before = ledger_->messages_sent();
  const auto round = ledger_->run_round(reach);
  if (round.committed) ++out.commits;
  ledger_->apply_committed_reports(trust_);
  const auto newly = trust_.step(global_slot_, trust_rng_);

  for (NodeId i : newly) {
    isolated_[i] = true;
    const std::vector<DemandId> stranded(queues_[i].entries().begin(), queues_[i].entries().end());
    queues_[i].clear();
    for (DemandId id : stranded) {
      Demand& d = demands_[id];
      ++s.departures[i];
      const bool can_return = cfg_.traffic.reinject_on_isolation && d.upstream &&
                              !isolated_[*d.upstream] && *d.upstream != i;
      if (can_return && queues_[*d.upstream].enqueue(id) == EnqueueResult::Ok) {
        const NodeId back = *d.upstream;
        ++s.arrivals[back];
        d.holder = back;
        d.upstream.reset();
        if (cfg_.record_traces) out.flow.events.push_back({id, t, i, back, FlowEventKind::Reinject});
      } else {
        drop_demand(d, i, t, out);
      }
    }
  }

  // An isolated member stalls rounds, so it forces a rotation instead of
  // waiting for the period.
  bool member_isolated = false;
  for (NodeId id : ledger_->membership().members) member_isolated = member_isolated || isolated_[id];
  if (ledger_->rotation_due() || member_isolated) {
    std::unique_ptr<bool[]> eligible(new bool[n]);
    for (NodeId i = 0; i < n; ++i) eligible[i] = !isolated_[i] && !trust_.flagged(i);
    const auto events = ledger_->rotate_membership(trust_.values(), cfg_.trust.threshold,
                                                   cfg_.attack.f, reach,
                                                   std::span<const bool>(eligible.get(), n));
    for (const auto& e : events) rotations_.push_back({global_slot_, e});
    out.rotations += events.size();
  }
  out.consensus_messages += ledger_->messages_sent() - before;
}

EpisodeResult Simulator::run_episode(RoutingPolicy& policy) {
  reset_episode();
  EpisodeResult out;
  out.episode = episode_;
  policy.begin_episode(episode_);
  const std::size_t n = cfg_.nodes;
  double queue_sum = 0.0;
  std::size_t queue_count = 0;
  const bool static_world = !cfg_.fixed_positions.empty() || cfg_.slot.speed == 0.0;

  Slot t = 0;
  for (; t < cfg_.slot.horizon; ++t) {
    SlotScratch s;
    s.arrivals.assign(n, 0);
    s.departures.assign(n, 0);
    s.comm_energy.assign(n, 0.0);
    s.mobility_energy.assign(n, 0.0);
    s.first_hop = out.hops.size();

    std::vector<double> z_before(n);
    for (NodeId i = 0; i < n; ++i) z_before[i] = states_[i].position.z;
    if (t > 0 && !static_world) states_ = step_mobility(states_, cfg_.slot, mobility_rng_);
    const double speed = static_world ? 0.0 : cfg_.slot.speed;
    for (NodeId i = 0; i < n; ++i) {
      const double dz = t > 0 ? states_[i].position.z - z_before[i] : 0.0;
      s.mobility_energy[i] =
          channel::mobility_energy(speed, speed, dz, cfg_.slot.tau, cfg_.energy).total();
    }

    build_snapshot();
    maybe_trigger_attack();

    std::vector<std::size_t> length_before(n);
    for (NodeId i = 0; i < n; ++i) length_before[i] = queues_[i].size();

    if (cfg_.demand_mode == DemandMode::Batch && t == 0) {
      if (!cfg_.fixed_demands.empty()) {
        for (const auto& spec : cfg_.fixed_demands) spawn_demand(t, spec, out, s);
      } else {
        for (std::size_t k = 0; k < cfg_.demands; ++k) spawn_demand(t, std::nullopt, out, s);
      }
    } else if (cfg_.demand_mode == DemandMode::Stream) {
      const double whole = std::floor(cfg_.demands_per_slot);
      std::size_t count = static_cast<std::size_t>(whole);
      if (demand_rng_.bernoulli(cfg_.demands_per_slot - whole)) ++count;
      for (std::size_t k = 0; k < count; ++k) spawn_demand(t, std::nullopt, out, s);
    }

    const auto trust_now = link_trust();
    SlotView view{t, global_slot_, &snap_, trust_now, &demands_};
    policy.begin_slot(view);

    route_slot(t, policy, out, s);
    trust_tick(t, out, s);

    for (NodeId i = 0; i < n; ++i) {
      const std::size_t after = queues_[i].size();
      if (cfg_.record_traces) {
        out.queue_samples.push_back({i, t, length_before[i], s.arrivals[i], s.departures[i], after});
      }
      queue_sum += static_cast<double>(after);
      ++queue_count;
      const double e = s.mobility_energy[i] + s.comm_energy[i];
      prev_energy_[i] = e;
      out.energy_j += e;
    }

    const std::span<const HopRecord> slot_hops(out.hops.data() + s.first_hop,
                                               out.hops.size() - s.first_hop);
    const double r = reward(slot_hops, cfg_.traffic.t_one_max);
    out.slot_rewards.push_back(r);

    const bool all_resolved = std::all_of(demands_.begin(), demands_.end(), [](const Demand& d) {
      return d.status != DemandStatus::InFlight;
    });
    const bool over = t + 1 == cfg_.slot.horizon ||
                      (cfg_.demand_mode == DemandMode::Batch && all_resolved);
    SlotOutcome outcome{t, r, slot_hops, &demands_, over};
    policy.end_slot(outcome);
    ++global_slot_;
    if (over) {
      ++t;
      break;
    }
  }

  out.slots = t;
  out.flow.last_slot = t > 0 ? t - 1 : 0;
  out.reward = reward(out.hops, cfg_.traffic.t_one_max);
  double delay_sum = 0.0;
  double e2e_sum = 0.0;
  for (auto& d : demands_) {
    if (d.status == DemandStatus::InFlight) {
      d.unfinished_penalty = remaining_hop_penalty(d.holder, d.destination);
      ++out.undelivered;
    } else if (d.status == DemandStatus::Delivered) {
      ++out.delivered;
      e2e_sum += end_to_end_delay(d);
    } else {
      ++out.dropped;
    }
    delay_sum += metric_delay(d);
  }
  out.mean_delay = demands_.empty() ? 0.0 : delay_sum / static_cast<double>(demands_.size());
  out.mean_e2e_delay = out.delivered ? e2e_sum / static_cast<double>(out.delivered) : 0.0;
  out.mean_queue = queue_count ? queue_sum / static_cast<double>(queue_count) : 0.0;
  out.throughput_bps = out.slots ? out.delivered_bits / (out.slots * cfg_.slot.tau) : 0.0;
  for (NodeId i = 0; i < n; ++i) out.flagged_total += trust_.flagged(i) ? 1 : 0;
  out.demands = demands_;
  ++episode_;
  return out;
}

}  // namespace trustroute
