#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trustbench/digest.hpp"
#include "trustbench/surrogate.hpp"

namespace trustbench {

enum class TxKind : std::uint8_t {
  model_registered = 1,
  task_submitted = 2,
  result_reported = 3,
  endorsement_recorded = 4,
  verdict = 5,
  invalid_flagged = 6,
};

std::string_view tx_kind_name(TxKind k);

// Event payloads. Each encodes to a canonical byte string (little-endian,
// fixed field order) so identical events always hash identically.
struct ModelRegisteredEvent {
  std::string surface_id;
  std::uint32_t d = 1;
  std::vector<double> params;
  std::string registrar;  // role tag of the peer that stored the model
};

struct TaskSubmittedEvent {
  TaskId task_id = 0;
  Policy policy;
  Digest32 payload_hash{};
};

struct ResultReportedEvent {
  TaskId task_id = 0;
  std::uint32_t attempt = 0;
  SourceId reporter = 0;
  std::vector<double> reward;
};

struct EndorsementRecordedEvent {
  TaskId task_id = 0;
  std::uint32_t attempt = 0;
  SourceId reporter = 0;
  double delta = 0.0;
  std::uint32_t bits_sent = 0;
  std::uint32_t recomputes = 0;
};

struct VerdictEvent {
  TaskId task_id = 0;
  std::uint32_t attempt = 0;
  SourceId reporter = 0;
  bool valid = false;
  double delta = 0.0;
};

struct InvalidFlaggedEvent {
  TaskId task_id = 0;
  std::uint32_t attempts = 0;
};

using TxEvent = std::variant<ModelRegisteredEvent, TaskSubmittedEvent, ResultReportedEvent,
                             EndorsementRecordedEvent, VerdictEvent, InvalidFlaggedEvent>;

struct Transaction {
  std::uint64_t tx_id = 0;  // assigned by the ledger on acceptance
  TxKind kind = TxKind::model_registered;
  std::uint64_t logical_time = 0;
  std::vector<SourceId> endorsements;
  std::vector<std::uint8_t> payload;

  // Canonical bytes of the whole transaction (header + payload).
  std::vector<std::uint8_t> encode() const;
  static Transaction decode(std::span<const std::uint8_t> bytes);

  // Decodes the payload back into its event struct. Throws ParseError if the
  // payload does not match the kind's schema.
  TxEvent event() const;

  // True if source appears in this transaction as reporter or endorser.
  bool mentions(SourceId source) const;
};

Transaction make_tx(const TxEvent& event, std::vector<SourceId> endorsements,
                    std::uint64_t logical_time);

struct Block {
  std::uint64_t height = 0;
  Digest32 prev_hash{};
  std::vector<Transaction> txs;
  Digest32 block_hash{};

  // Canonical body (height, prev_hash, tx list); block_hash = sha256(body).
  std::vector<std::uint8_t> body() const;
};

using Chain = std::vector<Block>;

struct VerifyResult {
  bool ok = true;
  std::uint64_t broken_height = 0;
  std::string reason;
};

// m-of-m gate: endorsement-bearing transactions (EndorsementRecorded,
// Verdict) need at least required_endorsers endorsements to be accepted;
// other kinds are exempt.
struct EndorsementPolicy {
  std::uint32_t required_endorsers = 1;
};

struct SubmitResult {
  bool accepted = false;
  std::uint64_t tx_id = 0;
  std::string reason;
};

// Append-only hash chain with a single serialized committer. A genesis block
// (height 0, all-zero prev_hash, no transactions) is created on construction.
class Ledger {
 public:
  explicit Ledger(EndorsementPolicy policy, std::uint32_t block_size = 32);

  // Gate + queue. Rejected transactions never reach a block.
  SubmitResult submit(Transaction tx);

  // Drains up to block_size queued transactions, ordered by logical_time
  // (ties by tx_id), into a new block. Throws ProtocolError on empty queue.
  const Block& cut_block();

  // Cuts blocks until the queue is empty (forced cut at run end).
  void flush();

  std::size_t queued() const;
  const Chain& chain() const { return chain_; }
  Digest32 head_hash() const { return chain_.back().block_hash; }

  VerifyResult verify() const;

  // All transactions mentioning source, in block order. Requires a chain
  // that verifies ok; otherwise throws ProtocolError ("verify first").
  std::vector<Transaction> audit_source(SourceId source) const;

  void save(const std::filesystem::path& file) const;

 private:
  EndorsementPolicy policy_;
  std::uint32_t block_size_;
  Chain chain_;
  std::vector<Transaction> pending_;
  std::uint64_t next_tx_id_ = 1;
  mutable std::mutex mu_;
};

// Chain (de)serialization: per block, u32 byte length of the block record,
// then the record = body || block_hash, all little-endian.
std::vector<std::uint8_t> serialize_chain(const Chain& chain);
Chain deserialize_chain(std::span<const std::uint8_t> bytes);  // throws ParseError

VerifyResult verify_chain(const Chain& chain);
// Parses and verifies raw chain bytes; parse failures come back as broken_at.
VerifyResult verify_chain_bytes(std::span<const std::uint8_t> bytes);
VerifyResult verify_chain_file(const std::filesystem::path& file);

Chain load_chain(const std::filesystem::path& file);
std::vector<Transaction> audit_source(const Chain& chain, SourceId source);

}  // namespace trustbench
