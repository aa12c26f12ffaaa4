#pragma once

// Trust-ranked PBFT over a simulated message layer: three-phase commit of
// behaviour-report blocks, and remove/invite/update membership rotation.
//
// Authentication is modelled: tokens are keyed hashes under per-node secrets
// held by a KeyRing, not real signatures.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "trustroute/core.hpp"
#include "trustroute/trust.hpp"

namespace trustroute {

// Quorum arithmetic.
constexpr std::size_t prepare_quorum(std::size_t n) { return 2 * n; }
constexpr std::size_t commit_quorum(std::size_t n) { return 2 * n + 1; }
constexpr std::size_t removal_quorum(std::size_t f) { return 2 * f; }
constexpr std::size_t join_quorum(std::size_t f) { return 2 * f + 1; }
constexpr std::size_t consensus_size(std::size_t n) { return 3 * n + 1; }

class KeyRing {
 public:
  explicit KeyRing(std::uint64_t master = 0) : master_(master) {}
  std::uint64_t sign(NodeId signer, std::uint64_t message_hash) const;
  bool verify(NodeId signer, std::uint64_t message_hash, std::uint64_t token) const;

 private:
  std::uint64_t secret(NodeId n) const;
  std::uint64_t master_;
};

struct Transaction {
  std::uint64_t id = 0;
  NodeId submitter = 0;
  std::vector<BehaviorReport> reports;
  std::uint64_t auth_token = 0;
};

std::uint64_t transaction_hash(const Transaction& tx);

struct Block {
  std::uint64_t seq = 0;
  std::uint64_t view = 0;
  std::uint64_t digest = 0;
  std::uint64_t prev_digest = 0;
  NodeId proposer = 0;
  std::vector<Transaction> txs;

  std::size_t report_count() const;
};

// Digest over (seq, prev digest, proposer, transactions).
std::uint64_t block_digest(const Block& b);
Block make_block(std::uint64_t seq, std::uint64_t view, std::uint64_t prev_digest, NodeId proposer,
                 std::vector<Transaction> txs);

enum class MsgKind { PrePrepare, Prepare, Commit, RemoveReq, RemoveConfirm, Invite, Reply, Update };

const char* to_string(MsgKind k);

struct Message {
  MsgKind kind = MsgKind::Prepare;
  NodeId sender = 0;
  NodeId receiver = 0;
  std::uint64_t view = 0;
  std::uint64_t seq = 0;
  std::uint64_t digest = 0;
  NodeId subject = 0;  // removal subject or invited candidate
  std::shared_ptr<const Block> block;  // PrePrepare payload
  std::uint64_t signature = 0;
};

std::uint64_t message_hash(const Message& m);
Message signed_message(Message m, const KeyRing& keys);

struct Membership {
  std::vector<NodeId> members;
  NodeId leader = 0;
  std::size_t n = 1;
  std::uint64_t view = 0;

  bool contains(NodeId id) const;
};

struct ReplicaStats {
  std::size_t bad_auth = 0;
  std::size_t digest_mismatch = 0;
  std::size_t stale = 0;
  std::size_t not_member = 0;
};

class Replica {
 public:
  Replica(NodeId id, const KeyRing* keys) : id_(id), keys_(keys) {}

  NodeId id() const { return id_; }

  // Leader entry point: accepts its own proposal and emits PrePrepares.
  std::vector<Message> propose(const Block& b, const Membership& m);

  std::vector<Message> handle(const Message& msg, const Membership& m);

  const std::vector<Block>& chain() const { return chain_; }
  std::uint64_t last_seq() const { return chain_.empty() ? 0 : chain_.back().seq; }
  std::uint64_t head_digest() const { return chain_.empty() ? 0 : chain_.back().digest; }
  const ReplicaStats& stats() const { return stats_; }

  // State transfer for lagging or newly joined members.
  void adopt_chain(const std::vector<Block>& chain);
  // Forget uncommitted proposals (leader change).
  void clear_pending();

 private:
  struct SeqLog {
    std::optional<Block> accepted;
    std::map<std::uint64_t, std::set<NodeId>> prepares;
    std::map<std::uint64_t, std::set<NodeId>> commits;
    bool sent_commit = false;
  };

  std::vector<Message> broadcast(MsgKind kind, std::uint64_t view, std::uint64_t seq,
                                 std::uint64_t digest, const Membership& m) const;
  void progress(std::uint64_t seq, const Membership& m, std::vector<Message>& out);
  bool accept_preprepare(const Message& msg, const Membership& m, std::vector<Message>& out);

  NodeId id_;
  const KeyRing* keys_;
  std::vector<Block> chain_;
  std::map<std::uint64_t, SeqLog> log_;
  std::vector<Message> deferred_;  // PrePrepares for future sequence numbers
  ReplicaStats stats_;
};

using Reach = std::function<bool(NodeId, NodeId)>;

class MessageBus {
 public:
  explicit MessageBus(Rng rng, double drop_probability = 0.0, bool shuffle = true)
      : rng_(std::move(rng)), drop_probability_(drop_probability), shuffle_(shuffle) {}

  void set_reach(Reach reach) { reach_ = std::move(reach); }
  void post(Message m);
  void post(std::vector<Message> ms);
  std::optional<Message> next();
  bool empty() const { return queue_.empty(); }

  std::size_t sent() const { return sent_; }
  std::size_t dropped() const { return dropped_; }
  std::size_t count(MsgKind k) const;

 private:
  Rng rng_;
  double drop_probability_;
  bool shuffle_;
  Reach reach_;
  std::vector<Message> queue_;
  std::size_t sent_ = 0;
  std::size_t dropped_ = 0;
  std::map<MsgKind, std::size_t> per_kind_;
};

// Deliver until the bus drains (or max_steps). Messages to crashed or unknown
// receivers vanish.
void pump(MessageBus& bus, std::map<NodeId, Replica*>& replicas, const Membership& m,
          const std::set<NodeId>& crashed, std::size_t max_steps = 1'000'000);

// --- randomized fault trials -------------------------------------------------

struct ConsensusTrialConfig {
  std::size_t n = 1;
  std::size_t rounds = 3;
  double drop_probability = 0.0;
  bool equivocating_leader = false;
  std::size_t byzantine_backups = 0;  // vote for every digest they see
  std::size_t crashed_backups = 0;
  std::size_t txs_per_round = 2;
};

struct ConsensusTrialResult {
  bool safe = true;         // no seq with two different committed digests among honest replicas
  bool chains_linked = true;
  std::size_t rounds_committed = 0;  // rounds whose block every live honest member committed
  std::size_t max_honest_height = 0;
  std::size_t messages = 0;
};

ConsensusTrialResult run_consensus_trial(const ConsensusTrialConfig& cfg, std::uint64_t seed);

// --- orchestrated ledger -----------------------------------------------------

struct ConsensusParams {
  std::size_t n = 2;
  std::size_t rotation_period = 5;
  double drop_probability = 0.0;
  std::size_t max_txs_per_block = 512;
  // Consensus traffic limited to the in-range component (otherwise any two
  // non-isolated nodes can exchange control messages).
  bool range_limited = false;

  void validate() const;
};

struct RoundResult {
  bool proposed = false;
  bool committed = false;
  std::uint64_t seq = 0;
  std::size_t messages = 0;
};

struct RotationEvent {
  std::optional<NodeId> removed;
  double removed_trust = 0.0;
  bool removed_below_threshold = false;
  double min_member_trust = 0.0;  // over members before removal
  std::map<NodeId, std::size_t> removal_confirmations;  // per remaining member
  std::optional<NodeId> joined;
  std::size_t invites_received = 0;
  std::size_t updates_received = 0;
  std::size_t members_after = 0;
  std::size_t n_after = 0;
  NodeId leader_after = 0;
  bool no_candidate = false;
  bool aborted = false;  // removal quorum not reached
  std::size_t f = 0;
};

class TpbftLedger {
 public:
  TpbftLedger(std::size_t num_nodes, ConsensusParams params, std::uint64_t seed);

  // Top 3n+1 by trust become members; TooFewNodes otherwise.
  void init_consensus_set(std::span<const double> trust);

  const Membership& membership() const { return membership_; }
  const ConsensusParams& params() const { return params_; }
  const KeyRing& keys() const { return *keys_; }

  Transaction make_transaction(NodeId submitter, std::vector<BehaviorReport> reports);

  // Routes a transaction to the nearest reachable member and on to the leader's
  // pool. Returns the entry member. Throws InvalidAuth or NoConsensusReachable.
  NodeId submit(const Transaction& tx, std::span<const Vec3> positions, const Reach& reach);

  // One consensus instance: the leader proposes pending transactions.
  RoundResult run_round(const Reach& reach);

  bool rotation_due() const { return rounds_since_rotation_ >= params_.rotation_period; }
  std::size_t rounds_since_rotation() const { return rounds_since_rotation_; }

  // eligible[i]: node may be invited (not flagged, not isolated).
  std::vector<RotationEvent> rotate_membership(std::span<const double> trust, double threshold,
                                               std::size_t f, const Reach& reach,
                                               std::span<const bool> eligible);

  // Folds reports of blocks not yet applied; idempotent by block seq.
  std::size_t apply_committed_reports(TrustTable& table);
  // Applies one block if its seq is new; returns reports folded.
  std::size_t apply_block(const Block& b, TrustTable& table);

  const std::vector<Block>& chain() const { return chain_; }
  std::size_t pending() const { return pool_.size(); }
  std::size_t invalid_submissions() const { return invalid_submissions_; }
  std::size_t messages_sent() const { return messages_sent_; }
  std::size_t commits() const { return chain_.size(); }

  void set_crashed(std::set<NodeId> crashed) { crashed_ = std::move(crashed); }

  void dump(std::ostream& os) const;

 private:
  void sync_members();
  void elect_leader(std::span<const double> trust);
  Replica& replica(NodeId id) { return replicas_.at(id); }

  ConsensusParams params_;
  std::shared_ptr<const KeyRing> keys_;  // replicas hold a stable pointer into it
  Rng bus_rng_;
  std::vector<Replica> replicas_;
  Membership membership_;
  std::vector<Block> chain_;
  std::vector<Transaction> pool_;
  std::optional<Block> in_flight_;
  std::set<NodeId> crashed_;
  std::uint64_t next_tx_id_ = 1;
  std::uint64_t applied_seq_ = 0;
  std::size_t rounds_since_rotation_ = 0;
  std::size_t invalid_submissions_ = 0;
  std::size_t messages_sent_ = 0;
};

}  // namespace trustroute
