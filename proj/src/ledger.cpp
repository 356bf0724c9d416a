#include "trustbench/ledger.hpp"

#include <algorithm>
#include <fstream>

#include "trustbench/bytes.hpp"
#include "trustbench/errors.hpp"

namespace trustbench {
namespace {

void encode_event(ByteWriter& w, const TxEvent& ev) {
  std::visit(
      [&w](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, ModelRegisteredEvent>) {
          w.str(e.surface_id);
          w.u32(e.d);
          w.u32(static_cast<std::uint32_t>(e.params.size()));
          for (double q : e.params) w.f64(q);
          w.str(e.registrar);
        } else if constexpr (std::is_same_v<E, TaskSubmittedEvent>) {
          w.u64(e.task_id);
          w.f64(e.policy.itn);
          w.f64(e.policy.irs);
          w.bytes(e.payload_hash);
        } else if constexpr (std::is_same_v<E, ResultReportedEvent>) {
          w.u64(e.task_id);
          w.u32(e.attempt);
          w.u32(e.reporter);
          w.u32(static_cast<std::uint32_t>(e.reward.size()));
          for (double v : e.reward) w.f64(v);
        } else if constexpr (std::is_same_v<E, EndorsementRecordedEvent>) {
          w.u64(e.task_id);
          w.u32(e.attempt);
          w.u32(e.reporter);
          w.f64(e.delta);
          w.u32(e.bits_sent);
          w.u32(e.recomputes);
        } else if constexpr (std::is_same_v<E, VerdictEvent>) {
          w.u64(e.task_id);
          w.u32(e.attempt);
          w.u32(e.reporter);
          w.u8(e.valid ? 1 : 0);
          w.f64(e.delta);
        } else if constexpr (std::is_same_v<E, InvalidFlaggedEvent>) {
          w.u64(e.task_id);
          w.u32(e.attempts);
        }
      },
      ev);
}

TxKind event_kind(const TxEvent& ev) {
  switch (ev.index()) {
    case 0: return TxKind::model_registered;
    case 1: return TxKind::task_submitted;
    case 2: return TxKind::result_reported;
    case 3: return TxKind::endorsement_recorded;
    case 4: return TxKind::verdict;
    default: return TxKind::invalid_flagged;
  }
}

TxEvent decode_event(TxKind kind, std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  TxEvent ev;
  switch (kind) {
    case TxKind::model_registered: {
      ModelRegisteredEvent e;
      e.surface_id = r.str();
      e.d = r.u32();
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) e.params.push_back(r.f64());
      e.registrar = r.str();
      ev = e;
      break;
    }
    case TxKind::task_submitted: {
      TaskSubmittedEvent e;
      e.task_id = r.u64();
      e.policy.itn = r.f64();
      e.policy.irs = r.f64();
      auto h = r.raw(32);
      std::copy(h.begin(), h.end(), e.payload_hash.begin());
      ev = e;
      break;
    }
    case TxKind::result_reported: {
      ResultReportedEvent e;
      e.task_id = r.u64();
      e.attempt = r.u32();
      e.reporter = r.u32();
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) e.reward.push_back(r.f64());
      ev = e;
      break;
    }
    case TxKind::endorsement_recorded: {
      EndorsementRecordedEvent e;
      e.task_id = r.u64();
      e.attempt = r.u32();
      e.reporter = r.u32();
      e.delta = r.f64();
      e.bits_sent = r.u32();
      e.recomputes = r.u32();
      ev = e;
      break;
    }
    case TxKind::verdict: {
      VerdictEvent e;
      e.task_id = r.u64();
      e.attempt = r.u32();
      e.reporter = r.u32();
      e.valid = r.u8() != 0;
      e.delta = r.f64();
      ev = e;
      break;
    }
    case TxKind::invalid_flagged: {
      InvalidFlaggedEvent e;
      e.task_id = r.u64();
      e.attempts = r.u32();
      ev = e;
      break;
    }
    default:
      throw ParseError("unknown transaction kind");
  }
  if (!r.done()) throw ParseError("trailing bytes in transaction payload");
  return ev;
}

std::optional<SourceId> event_reporter(const TxEvent& ev) {
  if (const auto* e = std::get_if<ResultReportedEvent>(&ev)) return e->reporter;
  if (const auto* e = std::get_if<EndorsementRecordedEvent>(&ev)) return e->reporter;
  if (const auto* e = std::get_if<VerdictEvent>(&ev)) return e->reporter;
  return std::nullopt;
}

bool kind_requires_endorsements(TxKind k) {
  return k == TxKind::endorsement_recorded || k == TxKind::verdict;
}

}  // namespace

std::string_view tx_kind_name(TxKind k) {
  switch (k) {
    case TxKind::model_registered: return "ModelRegistered";
    case TxKind::task_submitted: return "TaskSubmitted";
    case TxKind::result_reported: return "ResultReported";
    case TxKind::endorsement_recorded: return "EndorsementRecorded";
    case TxKind::verdict: return "Verdict";
    case TxKind::invalid_flagged: return "InvalidFlagged";
  }
  return "Unknown";
}

std::vector<std::uint8_t> Transaction::encode() const {
  ByteWriter w;
  w.u64(tx_id);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(logical_time);
  w.u32(static_cast<std::uint32_t>(endorsements.size()));
  for (SourceId id : endorsements) w.u32(id);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  return w.take();
}

Transaction Transaction::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Transaction tx;
  tx.tx_id = r.u64();
  const std::uint8_t k = r.u8();
  if (k < 1 || k > 6) throw ParseError("bad transaction kind byte");
  tx.kind = static_cast<TxKind>(k);
  tx.logical_time = r.u64();
  const std::uint32_t ne = r.u32();
  for (std::uint32_t i = 0; i < ne; ++i) tx.endorsements.push_back(r.u32());
  const std::uint32_t np = r.u32();
  auto p = r.raw(np);
  tx.payload.assign(p.begin(), p.end());
  if (!r.done()) throw ParseError("trailing bytes in transaction");
  return tx;
}

TxEvent Transaction::event() const { return decode_event(kind, payload); }

bool Transaction::mentions(SourceId source) const {
  for (SourceId id : endorsements) {
    if (id == source) return true;
  }
  const auto reporter = event_reporter(event());
  return reporter && *reporter == source;
}

Transaction make_tx(const TxEvent& event, std::vector<SourceId> endorsements,
                    std::uint64_t logical_time) {
  Transaction tx;
  tx.kind = event_kind(event);
  tx.logical_time = logical_time;
  tx.endorsements = std::move(endorsements);
  ByteWriter w;
  encode_event(w, event);
  tx.payload = w.take();
  return tx;
}

std::vector<std::uint8_t> Block::body() const {
  ByteWriter w;
  w.u64(height);
  w.bytes(prev_hash);
  w.u32(static_cast<std::uint32_t>(txs.size()));
  for (const Transaction& tx : txs) {
    const auto bytes = tx.encode();
    w.u32(static_cast<std::uint32_t>(bytes.size()));
    w.bytes(bytes);
  }
  return w.take();
}

Ledger::Ledger(EndorsementPolicy policy, std::uint32_t block_size)
    : policy_(policy), block_size_(block_size) {
  if (policy_.required_endorsers < 1) throw ConfigError("required_endorsers must be >= 1");
  if (block_size_ < 1) throw ConfigError("block_size must be >= 1");
  Block genesis;
  genesis.height = 0;
  genesis.prev_hash.fill(0);
  genesis.block_hash = sha256(genesis.body());
  chain_.push_back(std::move(genesis));
}

SubmitResult Ledger::submit(Transaction tx) {
  std::lock_guard lock(mu_);
  try {
    (void)tx.event();  // schema check
  } catch (const ParseError& e) {
    return {false, 0, std::string("malformed payload: ") + e.what()};
  }
  if (kind_requires_endorsements(tx.kind) &&
      tx.endorsements.size() < policy_.required_endorsers) {
    return {false, 0,
            "insufficient endorsements: " + std::to_string(tx.endorsements.size()) + " < " +
                std::to_string(policy_.required_endorsers)};
  }
  tx.tx_id = next_tx_id_++;
  const std::uint64_t id = tx.tx_id;
  pending_.push_back(std::move(tx));
  return {true, id, ""};
}

const Block& Ledger::cut_block() {
  std::lock_guard lock(mu_);
  if (pending_.empty()) throw ProtocolError("cut_block on empty queue");
  std::stable_sort(pending_.begin(), pending_.end(),
                   [](const Transaction& a, const Transaction& b) {
                     if (a.logical_time != b.logical_time) return a.logical_time < b.logical_time;
                     return a.tx_id < b.tx_id;
                   });
  const std::size_t take = std::min<std::size_t>(block_size_, pending_.size());
  Block block;
  block.height = chain_.back().height + 1;
  block.prev_hash = chain_.back().block_hash;
  block.txs.assign(std::make_move_iterator(pending_.begin()),
                   std::make_move_iterator(pending_.begin() + take));
  pending_.erase(pending_.begin(), pending_.begin() + take);
  block.block_hash = sha256(block.body());
  chain_.push_back(std::move(block));
  return chain_.back();
}

void Ledger::flush() {
  while (queued() > 0) cut_block();
}

std::size_t Ledger::queued() const {
  std::lock_guard lock(mu_);
  return pending_.size();
}

VerifyResult Ledger::verify() const {
  std::lock_guard lock(mu_);
  return verify_chain(chain_);
}

std::vector<Transaction> Ledger::audit_source(SourceId source) const {
  std::lock_guard lock(mu_);
  const auto v = verify_chain(chain_);
  if (!v.ok) {
    throw ProtocolError("audit refused: chain broken at height " +
                        std::to_string(v.broken_height) + " (" + v.reason + "); verify first");
  }
  return trustbench::audit_source(chain_, source);
}

void Ledger::save(const std::filesystem::path& file) const {
  Chain snapshot;
  {
    std::lock_guard lock(mu_);
    snapshot = chain_;
  }
  const auto bytes = serialize_chain(snapshot);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open chain file for writing: " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> serialize_chain(const Chain& chain) {
  ByteWriter w;
  for (const Block& b : chain) {
    ByteWriter rec;
    rec.bytes(b.body());
    rec.bytes(b.block_hash);
    const auto& bytes = rec.data();
    w.u32(static_cast<std::uint32_t>(bytes.size()));
    w.bytes(bytes);
  }
  return w.take();
}

Chain deserialize_chain(std::span<const std::uint8_t> bytes) {
  ByteReader file(bytes);
  Chain chain;
  while (!file.done()) {
    const std::uint32_t len = file.u32();
    auto record = file.raw(len);
    if (record.size() < 32) throw ParseError("block record shorter than a digest");

    Block b;
    const auto body = record.subspan(0, record.size() - 32);
    auto stored = record.subspan(record.size() - 32);
    std::copy(stored.begin(), stored.end(), b.block_hash.begin());

    ByteReader r(body);
    b.height = r.u64();
    auto prev = r.raw(32);
    std::copy(prev.begin(), prev.end(), b.prev_hash.begin());
    const std::uint32_t n_txs = r.u32();
    for (std::uint32_t i = 0; i < n_txs; ++i) {
      const std::uint32_t txlen = r.u32();
      b.txs.push_back(Transaction::decode(r.raw(txlen)));
    }
    if (!r.done()) throw ParseError("trailing bytes in block body");
    chain.push_back(std::move(b));
  }
  return chain;
}

VerifyResult verify_chain(const Chain& chain) {
  if (chain.empty()) return {false, 0, "empty chain"};
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const Block& b = chain[i];
    if (b.height != i) return {false, i, "height_gap"};
    if (i == 0) {
      Digest32 zero{};
      if (b.prev_hash != zero) return {false, 0, "genesis_prev_hash_nonzero"};
    } else if (b.prev_hash != chain[i - 1].block_hash) {
      return {false, i, "prev_hash_mismatch"};
    }
    if (sha256(b.body()) != b.block_hash) return {false, i, "hash_mismatch"};
  }
  return {true, 0, ""};
}

VerifyResult verify_chain_bytes(std::span<const std::uint8_t> bytes) {
  Chain chain;
  try {
    chain = deserialize_chain(bytes);
  } catch (const ParseError& e) {
    return {false, 0, std::string("parse_error: ") + e.what()};
  }
  return verify_chain(chain);
}

VerifyResult verify_chain_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return {false, 0, "cannot open file: " + file.string()};
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return verify_chain_bytes(bytes);
}

Chain load_chain(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open chain file: " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_chain(bytes);
}

std::vector<Transaction> audit_source(const Chain& chain, SourceId source) {
  std::vector<Transaction> out;
  for (const Block& b : chain) {
    for (const Transaction& tx : b.txs) {
      if (tx.mentions(source)) out.push_back(tx);
    }
  }
  return out;
}

}  // namespace trustbench
