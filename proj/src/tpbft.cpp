#include "trustroute/tpbft.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <ostream>
#include <string>

namespace trustroute {

namespace {

std::uint64_t mix_in(std::uint64_t h, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) {
    h ^= (v >> (8 * k)) & 0xFF;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

std::uint64_t report_hash(std::uint64_t h, const BehaviorReport& r) {
  h = mix_in(h, r.reporter);
  h = mix_in(h, r.subject);
  h = mix_in(h, r.slot);
  h = mix_in(h, static_cast<std::uint64_t>(r.kind));
  h = mix_in(h, r.first);
  return mix_in(h, r.second);
}

}  // namespace

std::uint64_t KeyRing::secret(NodeId n) const { return mix64(master_ ^ mix64(n + 0x7F4A7C15ULL)); }

std::uint64_t KeyRing::sign(NodeId signer, std::uint64_t message_hash) const {
  return mix64(secret(signer) ^ message_hash);
}

bool KeyRing::verify(NodeId signer, std::uint64_t message_hash, std::uint64_t token) const {
  return sign(signer, message_hash) == token;
}

std::uint64_t transaction_hash(const Transaction& tx) {
  std::uint64_t h = mix_in(kFnvBasis, tx.id);
  h = mix_in(h, tx.submitter);
  for (const auto& r : tx.reports) h = report_hash(h, r);
  return h;
}

std::size_t Block::report_count() const {
  std::size_t c = 0;
  for (const auto& tx : txs) c += tx.reports.size();
  return c;
}

std::uint64_t block_digest(const Block& b) {
  std::uint64_t h = mix_in(kFnvBasis, b.seq);
  h = mix_in(h, b.prev_digest);
  h = mix_in(h, b.proposer);
  h = mix_in(h, b.txs.size());
  for (const auto& tx : b.txs) {
    h = mix_in(h, transaction_hash(tx));
    h = mix_in(h, tx.auth_token);
  }
  return h;
}

Block make_block(std::uint64_t seq, std::uint64_t view, std::uint64_t prev_digest, NodeId proposer,
                 std::vector<Transaction> txs) {
  Block b;
  b.seq = seq;
  b.view = view;
  b.prev_digest = prev_digest;
  b.proposer = proposer;
  b.txs = std::move(txs);
  b.digest = block_digest(b);
  return b;
}

const char* to_string(MsgKind k) {
  switch (k) {
    case MsgKind::PrePrepare: return "pre-prepare";
    case MsgKind::Prepare: return "prepare";
    case MsgKind::Commit: return "commit";
    case MsgKind::RemoveReq: return "remove";
    case MsgKind::RemoveConfirm: return "remove-confirm";
    case MsgKind::Invite: return "invite";
    case MsgKind::Reply: return "reply";
    case MsgKind::Update: return "update";
  }
  return "unknown";
}

std::uint64_t message_hash(const Message& m) {
  std::uint64_t h = mix_in(kFnvBasis, static_cast<std::uint64_t>(m.kind));
  h = mix_in(h, m.sender);
  h = mix_in(h, m.receiver);
  h = mix_in(h, m.view);
  h = mix_in(h, m.seq);
  h = mix_in(h, m.digest);
  return mix_in(h, m.subject);
}

Message signed_message(Message m, const KeyRing& keys) {
  m.signature = keys.sign(m.sender, message_hash(m));
  return m;
}

bool Membership::contains(NodeId id) const {
  return std::find(members.begin(), members.end(), id) != members.end();
}

// --- replica -----------------------------------------------------------------

std::vector<Message> Replica::broadcast(MsgKind kind, std::uint64_t view, std::uint64_t seq,
                                        std::uint64_t digest, const Membership& m) const {
  std::vector<Message> out;
  for (NodeId r : m.members) {
    if (r == id_) continue;
    Message msg;
    msg.kind = kind;
    msg.sender = id_;
    msg.receiver = r;
    msg.view = view;
    msg.seq = seq;
    msg.digest = digest;
    out.push_back(signed_message(std::move(msg), *keys_));
  }
  return out;
}

std::vector<Message> Replica::propose(const Block& b, const Membership& m) {
  if (m.leader != id_) throw InvariantBreach("only the leader proposes");
  std::vector<Message> out;
  if (b.seq != last_seq() + 1 || b.prev_digest != head_digest()) return out;
  auto& log = log_[b.seq];
  if (log.accepted && log.accepted->digest != b.digest) {
    throw InvariantBreach("leader proposing a second digest at one sequence number");
  }
  log.accepted = b;
  auto payload = std::make_shared<const Block>(b);
  for (NodeId r : m.members) {
    if (r == id_) continue;
    Message msg;
    msg.kind = MsgKind::PrePrepare;
    msg.sender = id_;
    msg.receiver = r;
    msg.view = m.view;
    msg.seq = b.seq;
    msg.digest = b.digest;
    msg.block = payload;
    out.push_back(signed_message(std::move(msg), *keys_));
  }
  if (log.sent_commit) {
    auto again = broadcast(MsgKind::Commit, m.view, b.seq, b.digest, m);
    out.insert(out.end(), again.begin(), again.end());
  }
  progress(b.seq, m, out);
  return out;
}

bool Replica::accept_preprepare(const Message& msg, const Membership& m, std::vector<Message>& out) {
  if (msg.sender != m.leader || !msg.block) {
    ++stats_.stale;
    return false;
  }
  const Block& b = *msg.block;
  if (block_digest(b) != b.digest || msg.digest != b.digest || b.seq != msg.seq) {
    ++stats_.digest_mismatch;
    return false;
  }
  if (b.seq <= last_seq()) {
    // Help a lagging quorum: re-vote for what we committed.
    if (chain_[b.seq - 1].digest == b.digest) {
      if (id_ != m.leader) {
        auto p = broadcast(MsgKind::Prepare, m.view, b.seq, b.digest, m);
        out.insert(out.end(), p.begin(), p.end());
      }
      auto c = broadcast(MsgKind::Commit, m.view, b.seq, b.digest, m);
      out.insert(out.end(), c.begin(), c.end());
    } else {
      ++stats_.stale;
    }
    return false;
  }
  if (b.seq > last_seq() + 1) {
    deferred_.push_back(msg);
    return false;
  }
  if (b.prev_digest != head_digest()) {
    ++stats_.digest_mismatch;
    return false;
  }
  auto& log = log_[b.seq];
  if (log.accepted && log.accepted->digest != b.digest) {
    ++stats_.stale;  // equivocation: keep the first
    return false;
  }
  const bool fresh = !log.accepted;
  log.accepted = b;
  if (id_ != m.leader) {
    log.prepares[b.digest].insert(id_);
    auto p = broadcast(MsgKind::Prepare, m.view, b.seq, b.digest, m);
    out.insert(out.end(), p.begin(), p.end());
  }
  if (!fresh && log.sent_commit) {
    auto c = broadcast(MsgKind::Commit, m.view, b.seq, b.digest, m);
    out.insert(out.end(), c.begin(), c.end());
  }
  return true;
}

void Replica::progress(std::uint64_t seq, const Membership& m, std::vector<Message>& out) {
  for (;;) {
    auto it = log_.find(seq);
    if (it == log_.end() || !it->second.accepted) return;
    auto& log = it->second;
    const std::uint64_t d = log.accepted->digest;
    if (!log.sent_commit) {
      std::size_t prepared = 0;
      for (NodeId s : log.prepares[d]) prepared += (s != m.leader && m.contains(s)) ? 1 : 0;
      if (prepared < prepare_quorum(m.n)) return;
      log.sent_commit = true;
      log.commits[d].insert(id_);
      auto c = broadcast(MsgKind::Commit, m.view, seq, d, m);
      out.insert(out.end(), c.begin(), c.end());
    }
    std::size_t committed = 0;
    for (NodeId s : log.commits[d]) committed += m.contains(s) ? 1 : 0;
    if (committed < commit_quorum(m.n)) return;
    if (seq != last_seq() + 1 || log.accepted->prev_digest != head_digest()) return;
    chain_.push_back(*log.accepted);
    log_.erase(log_.begin(), log_.upper_bound(seq));

    // A PrePrepare for the next sequence number may have arrived early.
    std::vector<Message> waiting;
    waiting.swap(deferred_);
    for (auto& w : waiting) {
      if (w.seq == last_seq() + 1) {
        accept_preprepare(w, m, out);
      } else if (w.seq > last_seq() + 1) {
        deferred_.push_back(std::move(w));
      }
    }
    ++seq;
  }
}

std::vector<Message> Replica::handle(const Message& msg, const Membership& m) {
  std::vector<Message> out;
  if (msg.receiver != id_) return out;
  if (!keys_->verify(msg.sender, message_hash(msg), msg.signature)) {
    ++stats_.bad_auth;
    return out;
  }
  if (!m.contains(msg.sender) || !m.contains(id_)) {
    ++stats_.not_member;
    return out;
  }
  if (msg.view != m.view) {
    ++stats_.stale;
    return out;
  }
  switch (msg.kind) {
    case MsgKind::PrePrepare:
      if (accept_preprepare(msg, m, out)) progress(msg.seq, m, out);
      break;
    case MsgKind::Prepare:
      if (msg.seq <= last_seq()) {
        ++stats_.stale;
        break;
      }
      if (msg.sender == m.leader) break;  // the leader's vote is its PrePrepare
      log_[msg.seq].prepares[msg.digest].insert(msg.sender);
      progress(msg.seq, m, out);
      break;
    case MsgKind::Commit:
      if (msg.seq <= last_seq()) {
        ++stats_.stale;
        break;
      }
      log_[msg.seq].commits[msg.digest].insert(msg.sender);
      progress(msg.seq, m, out);
      break;
    default:
      break;  // membership traffic is handled by the ledger
  }
  return out;
}

void Replica::adopt_chain(const std::vector<Block>& chain) {
  if (chain.size() <= chain_.size()) return;
  for (std::size_t k = 0; k < chain_.size(); ++k) {
    if (chain_[k].digest != chain[k].digest) {
      throw InvariantBreach("state transfer would rewrite a committed block");
    }
  }
  chain_ = chain;
  log_.erase(log_.begin(), log_.upper_bound(last_seq()));
  std::erase_if(deferred_, [&](const Message& w) { return w.seq <= last_seq(); });
}

void Replica::clear_pending() {
  log_.clear();
  deferred_.clear();
}

// --- bus ---------------------------------------------------------------------

void MessageBus::post(Message m) {
  ++sent_;
  ++per_kind_[m.kind];
  if (reach_ && !reach_(m.sender, m.receiver)) {
    ++dropped_;
    return;
  }
  if (drop_probability_ > 0.0 && rng_.bernoulli(drop_probability_)) {
    ++dropped_;
    return;
  }
  queue_.push_back(std::move(m));
}

void MessageBus::post(std::vector<Message> ms) {
  for (auto& m : ms) post(std::move(m));
}

std::optional<Message> MessageBus::next() {
  if (queue_.empty()) return std::nullopt;
  if (!shuffle_) {
    Message m = std::move(queue_.front());
    queue_.erase(queue_.begin());
    return m;
  }
  const auto k = static_cast<std::size_t>(rng_.below(queue_.size()));
  Message m = std::move(queue_[k]);
  queue_[k] = std::move(queue_.back());
  queue_.pop_back();
  return m;
}

std::size_t MessageBus::count(MsgKind k) const {
  const auto it = per_kind_.find(k);
  return it == per_kind_.end() ? 0 : it->second;
}

void pump(MessageBus& bus, std::map<NodeId, Replica*>& replicas, const Membership& m,
          const std::set<NodeId>& crashed, std::size_t max_steps) {
  for (std::size_t step = 0; step < max_steps; ++step) {
    auto msg = bus.next();
    if (!msg) return;
    if (crashed.count(msg->receiver)) continue;
    auto it = replicas.find(msg->receiver);
    if (it == replicas.end()) continue;
    bus.post(it->second->handle(*msg, m));
  }
}

// --- randomized trials -------------------------------------------------------

namespace {

Transaction trial_tx(std::uint64_t id, NodeId submitter, const KeyRing& keys) {
  Transaction tx;
  tx.id = id;
  tx.submitter = submitter;
  tx.reports.push_back(BehaviorReport::delivery(submitter, (submitter + 1) % 64, 0, 1, 1));
  tx.auth_token = keys.sign(submitter, transaction_hash(tx));
  return tx;
}

// A Byzantine backup signs a Prepare and a Commit for every (seq, digest) it
// hears about, whatever the leader proposed.
struct Voter {
  NodeId id;
  std::set<std::pair<std::uint64_t, std::uint64_t>> voted;

  std::vector<Message> react(const Message& msg, const Membership& m, const KeyRing& keys) {
    std::vector<Message> out;
    if (msg.kind != MsgKind::PrePrepare && msg.kind != MsgKind::Prepare &&
        msg.kind != MsgKind::Commit) {
      return out;
    }
    if (!voted.insert({msg.seq, msg.digest}).second) return out;
    for (MsgKind k : {MsgKind::Prepare, MsgKind::Commit}) {
      for (NodeId r : m.members) {
        if (r == id) continue;
        Message v;
        v.kind = k;
        v.sender = id;
        v.receiver = r;
        v.view = m.view;
        v.seq = msg.seq;
        v.digest = msg.digest;
        out.push_back(signed_message(std::move(v), keys));
      }
    }
    return out;
  }
};

}  // namespace

ConsensusTrialResult run_consensus_trial(const ConsensusTrialConfig& cfg, std::uint64_t seed) {
  const KeyRing keys(mix64(seed ^ 0xC0FFEEULL));
  Rng rng = Rng::stream(seed, "consensus-trial");
  Membership m;
  m.n = cfg.n;
  for (NodeId i = 0; i < consensus_size(cfg.n); ++i) m.members.push_back(i);
  m.leader = 0;

  // Roles among backups 1..3n, in a random order.
  std::vector<NodeId> backups(m.members.begin() + 1, m.members.end());
  for (std::size_t k = backups.size(); k > 1; --k) {
    std::swap(backups[k - 1], backups[rng.below(k)]);
  }
  std::set<NodeId> byzantine;
  std::set<NodeId> crashed;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < cfg.byzantine_backups && cursor < backups.size(); ++k) {
    byzantine.insert(backups[cursor++]);
  }
  for (std::size_t k = 0; k < cfg.crashed_backups && cursor < backups.size(); ++k) {
    crashed.insert(backups[cursor++]);
  }

  std::vector<Replica> honest_store;
  honest_store.reserve(m.members.size());
  std::map<NodeId, Replica*> honest;
  for (NodeId id : m.members) {
    const bool leader_faulty = id == m.leader && cfg.equivocating_leader;
    if (byzantine.count(id) || crashed.count(id) || leader_faulty) continue;
    honest_store.emplace_back(id, &keys);
  }
  for (auto& r : honest_store) honest[r.id()] = &r;
  std::map<NodeId, Voter> voters;
  for (NodeId id : byzantine) voters[id] = Voter{id, {}};

  MessageBus bus(Rng::stream(seed, "consensus-bus"), cfg.drop_probability, true);
  std::uint64_t tx_id = 1;
  std::optional<Block> in_flight;
  ConsensusTrialResult result;

  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    if (!cfg.equivocating_leader) {
      Replica& leader = *honest.at(m.leader);
      if (!in_flight || in_flight->seq <= leader.last_seq()) {
        std::vector<Transaction> txs;
        for (std::size_t k = 0; k < cfg.txs_per_round; ++k) {
          txs.push_back(trial_tx(tx_id++, static_cast<NodeId>(1 + k % 3), keys));
        }
        in_flight = make_block(leader.last_seq() + 1, m.view, leader.head_digest(), m.leader,
                               std::move(txs));
      }
      bus.post(leader.propose(*in_flight, m));
    } else {
      // Equivocating leader: two blocks at one seq, each backup gets A, B or
      // nothing, and the leader commits to a random subset of both.
      std::uint64_t base_seq = 0;
      std::uint64_t base_head = 0;
      std::map<std::uint64_t, std::size_t> heights;
      for (auto& [id, r] : honest) ++heights[r->last_seq()];
      if (!heights.empty()) {
        base_seq = std::max_element(heights.begin(), heights.end(), [](auto& a, auto& b) {
                     return a.second < b.second;
                   })->first;
        for (auto& [id, r] : honest) {
          if (r->last_seq() == base_seq) {
            base_head = r->head_digest();
            break;
          }
        }
      }
      std::array<std::shared_ptr<const Block>, 2> forks;
      for (auto& f : forks) {
        std::vector<Transaction> txs{trial_tx(tx_id++, 1, keys)};
        f = std::make_shared<const Block>(
            make_block(base_seq + 1, m.view, base_head, m.leader, std::move(txs)));
      }
      for (NodeId r : m.members) {
        if (r == m.leader) continue;
        const auto pick = rng.below(3);
        if (pick == 2) continue;
        Message msg;
        msg.kind = MsgKind::PrePrepare;
        msg.sender = m.leader;
        msg.receiver = r;
        msg.view = m.view;
        msg.seq = forks[pick]->seq;
        msg.digest = forks[pick]->digest;
        msg.block = forks[pick];
        bus.post(signed_message(std::move(msg), keys));
      }
      for (const auto& fork : forks) {
        for (NodeId r : m.members) {
          if (r == m.leader || !rng.bernoulli(0.5)) continue;
          Message c;
          c.kind = MsgKind::Commit;
          c.sender = m.leader;
          c.receiver = r;
          c.view = m.view;
          c.seq = fork->seq;
          c.digest = fork->digest;
          bus.post(signed_message(std::move(c), keys));
        }
      }
    }

    for (std::size_t step = 0; step < 1'000'000; ++step) {
      auto msg = bus.next();
      if (!msg) break;
      if (crashed.count(msg->receiver)) continue;
      if (auto v = voters.find(msg->receiver); v != voters.end()) {
        bus.post(v->second.react(*msg, m, keys));
        continue;
      }
      if (auto h = honest.find(msg->receiver); h != honest.end()) {
        bus.post(h->second->handle(*msg, m));
      }
    }

    const std::uint64_t target = round + 1;
    bool all = !honest.empty();
    for (auto& [id, r] : honest) all = all && r->last_seq() >= target;
    if (all) ++result.rounds_committed;
  }

  std::map<std::uint64_t, std::uint64_t> seen;
  for (auto& [id, r] : honest) {
    const auto& chain = r->chain();
    result.max_honest_height = std::max<std::size_t>(result.max_honest_height, chain.size());
    std::uint64_t prev = 0;
    for (const auto& b : chain) {
      if (b.prev_digest != prev || block_digest(b) != b.digest) result.chains_linked = false;
      prev = b.digest;
      const auto [it, inserted] = seen.emplace(b.seq, b.digest);
      if (!inserted && it->second != b.digest) result.safe = false;
    }
  }
  result.messages = bus.sent();
  return result;
}

// --- ledger ------------------------------------------------------------------

void ConsensusParams::validate() const {
  if (n < 1) throw ValidationError("consensus.n must be >= 1");
  if (rotation_period < 1) throw ValidationError("consensus.rotation_period must be >= 1");
  if (!(drop_probability >= 0.0 && drop_probability < 1.0)) {
    throw ValidationError("consensus.drop_probability must lie in [0, 1)");
  }
  if (max_txs_per_block < 1) throw ValidationError("consensus.max_txs_per_block must be >= 1");
}

TpbftLedger::TpbftLedger(std::size_t num_nodes, ConsensusParams params, std::uint64_t seed)
    : params_(params),
      keys_(std::make_shared<const KeyRing>(mix64(seed ^ 0x5EC2E7ULL))),
      bus_rng_(Rng::stream(seed, "consensus-bus")) {
  replicas_.reserve(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    replicas_.emplace_back(static_cast<NodeId>(i), keys_.get());
  }
  membership_.n = params.n;
}

namespace {

std::vector<NodeId> rank_by_trust(std::span<const double> trust) {
  std::vector<NodeId> ids(trust.size());
  for (NodeId i = 0; i < ids.size(); ++i) ids[i] = i;
  std::stable_sort(ids.begin(), ids.end(),
                   [&](NodeId a, NodeId b) { return trust[a] != trust[b] ? trust[a] > trust[b] : a < b; });
  return ids;
}

}  // namespace

void TpbftLedger::init_consensus_set(std::span<const double> trust) {
  const std::size_t size = consensus_size(params_.n);
  if (trust.size() < size || trust.size() > replicas_.size()) {
    throw TooFewNodes("need " + std::to_string(size) + " nodes for n=" + std::to_string(params_.n) +
                      ", have " + std::to_string(trust.size()));
  }
  const auto ranked = rank_by_trust(trust);
  membership_.members.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(size));
  membership_.leader = membership_.members.front();
  membership_.n = params_.n;
  membership_.view = 0;
  sync_members();
}

Transaction TpbftLedger::make_transaction(NodeId submitter, std::vector<BehaviorReport> reports) {
  Transaction tx;
  tx.id = next_tx_id_++;
  tx.submitter = submitter;
  tx.reports = std::move(reports);
  tx.auth_token = keys_->sign(submitter, transaction_hash(tx));
  return tx;
}

NodeId TpbftLedger::submit(const Transaction& tx, std::span<const Vec3> positions, const Reach& reach) {
  if (tx.reports.empty() || !keys_->verify(tx.submitter, transaction_hash(tx), tx.auth_token)) {
    ++invalid_submissions_;
    throw InvalidAuth("transaction " + std::to_string(tx.id) + " from node " +
                      std::to_string(tx.submitter) + " failed authentication");
  }
  std::optional<NodeId> entry;
  if (membership_.contains(tx.submitter) && !crashed_.count(tx.submitter)) {
    entry = tx.submitter;
  } else {
    double best = 0.0;
    for (NodeId c : membership_.members) {
      if (crashed_.count(c) || !reach(tx.submitter, c)) continue;
      const double d = (positions[c] - positions[tx.submitter]).norm();
      if (!entry || d < best) {
        entry = c;
        best = d;
      }
    }
  }
  if (!entry) throw NoConsensusReachable("no consensus member in range of node " + std::to_string(tx.submitter));
  if (*entry != membership_.leader && !reach(*entry, membership_.leader)) {
    throw NoConsensusReachable("leader not reachable from member " + std::to_string(*entry));
  }
  pool_.push_back(tx);
  return *entry;
}

void TpbftLedger::sync_members() {
  for (NodeId id : membership_.members) replicas_[id].adopt_chain(chain_);
}

RoundResult TpbftLedger::run_round(const Reach& reach) {
  RoundResult res;
  if (membership_.members.empty() || crashed_.count(membership_.leader)) return res;
  sync_members();
  Replica& leader = replica(membership_.leader);
  if (in_flight_ && in_flight_->seq != chain_.size() + 1) in_flight_.reset();
  if (!in_flight_) {
    if (pool_.empty()) return res;
    const std::size_t take = std::min(pool_.size(), params_.max_txs_per_block);
    std::vector<Transaction> txs(pool_.begin(), pool_.begin() + static_cast<std::ptrdiff_t>(take));
    in_flight_ = make_block(chain_.size() + 1, membership_.view, leader.head_digest(),
                            membership_.leader, std::move(txs));
  }
  res.proposed = true;
  res.seq = in_flight_->seq;

  MessageBus bus(Rng(bus_rng_.next_u64()), params_.drop_probability, true);
  bus.set_reach(reach);
  std::map<NodeId, Replica*> live;
  for (NodeId id : membership_.members) {
    if (!crashed_.count(id)) live[id] = &replicas_[id];
  }
  bus.post(leader.propose(*in_flight_, membership_));
  pump(bus, live, membership_, crashed_);
  res.messages = bus.sent();
  messages_sent_ += bus.sent();

  for (auto& [id, r] : live) {
    if (r->last_seq() >= in_flight_->seq) {
      const Block& b = r->chain()[in_flight_->seq - 1];
      chain_.push_back(b);
      std::set<std::uint64_t> done;
      for (const auto& tx : b.txs) done.insert(tx.id);
      std::erase_if(pool_, [&](const Transaction& tx) { return done.count(tx.id) > 0; });
      in_flight_.reset();
      ++rounds_since_rotation_;
      res.committed = true;
      break;
    }
  }
  return res;
}

void TpbftLedger::elect_leader(std::span<const double> trust) {
  NodeId best = membership_.members.front();
  for (NodeId id : membership_.members) {
    if (trust[id] > trust[best] || (trust[id] == trust[best] && id < best)) best = id;
  }
  if (best != membership_.leader) {
    membership_.leader = best;
  }
}

std::vector<RotationEvent> TpbftLedger::rotate_membership(std::span<const double> trust,
                                                          double threshold, std::size_t f,
                                                          const Reach& reach,
                                                          std::span<const bool> eligible) {
  std::vector<RotationEvent> events;
  if (membership_.members.empty()) return events;
  const std::size_t fq = std::max<std::size_t>(f, 1);

  std::vector<NodeId> subjects;
  for (NodeId id : membership_.members) {
    if (trust[id] < threshold) subjects.push_back(id);
  }
  std::sort(subjects.begin(), subjects.end(),
            [&](NodeId a, NodeId b) { return trust[a] != trust[b] ? trust[a] < trust[b] : a < b; });
  if (subjects.empty()) {
    NodeId lowest = membership_.members.front();
    for (NodeId id : membership_.members) {
      if (trust[id] < trust[lowest] || (trust[id] == trust[lowest] && id < lowest)) lowest = id;
    }
    subjects.push_back(lowest);
  }

  for (NodeId subject : subjects) {
    RotationEvent ev;
    ev.f = fq;
    ev.removed_trust = trust[subject];
    ev.removed_below_threshold = trust[subject] < threshold;
    ev.min_member_trust = trust[membership_.members.front()];
    for (NodeId id : membership_.members) ev.min_member_trust = std::min(ev.min_member_trust, trust[id]);

    std::vector<NodeId> remaining;
    for (NodeId id : membership_.members) {
      if (id != subject) remaining.push_back(id);
    }
    std::vector<NodeId> up;
    for (NodeId id : remaining) {
      if (!crashed_.count(id)) up.push_back(id);
    }
    if (up.empty()) {
      ev.aborted = true;
      events.push_back(ev);
      continue;
    }
    NodeId launcher = up.front();
    for (NodeId id : up) {
      if (trust[id] > trust[launcher] || (trust[id] == trust[launcher] && id < launcher)) launcher = id;
    }
    // Members the launcher cannot reach (isolated ones) take no part; they
    // are removed on their own turn.
    std::vector<NodeId> live;
    for (NodeId id : up) {
      if (id == launcher || reach(launcher, id)) live.push_back(id);
    }

    // Removal: the launcher's request counts as its own confirmation.
    MessageBus bus(Rng(bus_rng_.next_u64()), params_.drop_probability, true);
    bus.set_reach(reach);
    auto send = [&](MsgKind k, NodeId from, NodeId to, NodeId about) {
      Message msg;
      msg.kind = k;
      msg.sender = from;
      msg.receiver = to;
      msg.view = membership_.view;
      msg.subject = about;
      bus.post(signed_message(std::move(msg), *keys_));
    };
    std::map<NodeId, std::set<NodeId>> confirms;
    for (NodeId id : live) {
      if (id != launcher) send(MsgKind::RemoveReq, launcher, id, subject);
    }
    std::set<NodeId> confirmed_senders;
    while (auto msg = bus.next()) {
      if (!keys_->verify(msg->sender, message_hash(*msg), msg->signature)) continue;
      if (crashed_.count(msg->receiver)) continue;
      if (msg->kind == MsgKind::RemoveReq) {
        confirms[msg->receiver].insert(msg->sender);
        if (confirmed_senders.insert(msg->receiver).second) {
          for (NodeId id : live) {
            if (id != msg->receiver) send(MsgKind::RemoveConfirm, msg->receiver, id, subject);
          }
        }
      } else if (msg->kind == MsgKind::RemoveConfirm) {
        confirms[msg->receiver].insert(msg->sender);
      }
    }
    bool removal_ok = true;
    for (NodeId id : live) {
      ev.removal_confirmations[id] = confirms[id].size();
      if (confirms[id].size() < removal_quorum(fq)) removal_ok = false;
    }
    messages_sent_ += bus.sent();
    if (!removal_ok) {
      ev.aborted = true;
      ev.members_after = membership_.members.size();
      ev.n_after = membership_.n;
      ev.leader_after = membership_.leader;
      events.push_back(ev);
      continue;
    }
    ev.removed = subject;
    membership_.members = remaining;

    // Invitation of the best eligible candidate that can gather the quorums.
    std::vector<NodeId> candidates;
    for (NodeId id = 0; id < trust.size(); ++id) {
      if (membership_.contains(id) || id == subject || crashed_.count(id)) continue;
      if (id < eligible.size() && !eligible[id]) continue;
      if (trust[id] < threshold) continue;
      candidates.push_back(id);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](NodeId a, NodeId b) { return trust[a] != trust[b] ? trust[a] > trust[b] : a < b; });
    for (NodeId c : candidates) {
      MessageBus ib(Rng(bus_rng_.next_u64()), params_.drop_probability, true);
      ib.set_reach(reach);
      auto post = [&](MsgKind k, NodeId from, NodeId to) {
        Message msg;
        msg.kind = k;
        msg.sender = from;
        msg.receiver = to;
        msg.view = membership_.view;
        msg.subject = c;
        ib.post(signed_message(std::move(msg), *keys_));
      };
      for (NodeId id : live) post(MsgKind::Invite, id, c);
      std::set<NodeId> invites;
      std::set<NodeId> updates;
      std::set<NodeId> replied_to;
      bool replied = false;
      while (auto msg = ib.next()) {
        if (!keys_->verify(msg->sender, message_hash(*msg), msg->signature)) continue;
        switch (msg->kind) {
          case MsgKind::Invite:
            invites.insert(msg->sender);
            if (!replied && invites.size() >= join_quorum(fq)) {
              replied = true;
              for (NodeId id : live) post(MsgKind::Reply, c, id);
            }
            break;
          case MsgKind::Reply:
            if (replied_to.insert(msg->receiver).second) {
              post(MsgKind::Update, msg->receiver, c);
              for (NodeId id : live) {
                if (id != msg->receiver) post(MsgKind::Update, msg->receiver, id);
              }
            }
            break;
          case MsgKind::Update:
            if (msg->receiver == c) updates.insert(msg->sender);
            break;
          default:
            break;
        }
      }
      messages_sent_ += ib.sent();
      if (invites.size() >= join_quorum(fq) && updates.size() >= join_quorum(fq)) {
        ev.joined = c;
        ev.invites_received = invites.size();
        ev.updates_received = updates.size();
        membership_.members.push_back(c);
        break;
      }
    }
    if (!ev.joined) {
      ev.no_candidate = true;
      const std::size_t size = membership_.members.size();
      membership_.n = size >= 4 ? (size - 1) / 3 : 1;
    }
    elect_leader(trust);
    ++membership_.view;
    for (NodeId id : membership_.members) replicas_[id].clear_pending();
    in_flight_.reset();
    sync_members();
    ev.members_after = membership_.members.size();
    ev.n_after = membership_.n;
    ev.leader_after = membership_.leader;
    events.push_back(ev);
  }
  rounds_since_rotation_ = 0;
  return events;
}

std::size_t TpbftLedger::apply_block(const Block& b, TrustTable& table) {
  if (b.seq <= applied_seq_) return 0;
  std::size_t folded = 0;
  for (const auto& tx : b.txs) {
    for (const auto& r : tx.reports) {
      table.fold(r);
      ++folded;
    }
  }
  applied_seq_ = b.seq;
  return folded;
}

std::size_t TpbftLedger::apply_committed_reports(TrustTable& table) {
  std::size_t folded = 0;
  for (const auto& b : chain_) folded += apply_block(b, table);
  return folded;
}

void TpbftLedger::dump(std::ostream& os) const {
  char line[160];
  for (const auto& b : chain_) {
    std::snprintf(line, sizeof line, "seq=%llu view=%llu digest=%016llx prev=%016llx proposer=%u txs=%zu reports=%zu\n",
                  static_cast<unsigned long long>(b.seq), static_cast<unsigned long long>(b.view),
                  static_cast<unsigned long long>(b.digest),
                  static_cast<unsigned long long>(b.prev_digest), b.proposer, b.txs.size(),
                  b.report_count());
    os << line;
  }
}

}  // namespace trustroute
