#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trustbench/digest.hpp"
#include "trustbench/ledger.hpp"
#include "trustbench/surrogate.hpp"

namespace trustbench {

// Monotonic logical time shared by the fabric, the validation engine, and the
// ledger committer. Wall clocks are never consulted, so replays are exact.
class LogicalClock {
 public:
  std::uint64_t tick() { return next_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> next_{1};
};

// Every ledger-bound event flows through this sink; the owner decides how to
// wrap it into a transaction and when to cut blocks.
using TxSink = std::function<void(const TxEvent& event, const std::vector<SourceId>& endorsements,
                                  std::uint64_t logical_time)>;

enum class TaskStatus : std::uint8_t {
  queued,
  running,
  awaiting_validation,
  committed,
  invalid_flagged,
};

std::string_view task_status_name(TaskStatus s);

struct Task {
  TaskId task_id = 0;
  Policy policy;
  Digest32 payload_hash{};
  TaskStatus status = TaskStatus::queued;
  std::uint32_t attempt = 0;
  std::optional<SourceId> claimed_by;  // bound worker while running/awaiting_validation
  std::optional<SourceId> excluded;    // reporter barred from the next claim after re-dispatch
};

struct ResultRecord {
  TaskId task_id = 0;
  std::uint32_t attempt = 0;
  SourceId reporter = 0;
  RewardVector reward;
  std::vector<std::uint8_t> report_bits;  // encoded quantized report as first transmitted
  std::uint64_t timestamp = 0;            // logical
};

struct DedupeResult {
  bool is_new = true;
  TaskId duplicate_of = 0;
};

struct FabricCounts {
  std::size_t submitted = 0;
  std::size_t queued = 0;
  std::size_t running = 0;
  std::size_t awaiting_validation = 0;
  std::size_t committed = 0;
  std::size_t invalid_flagged = 0;
};

// Task clerk, FIFO queue, and result store in one linearizable service.
// All mutating operations are atomic under one lock; claim_task delivers each
// (task, attempt) to exactly one worker no matter how many race for it.
class TaskFabric {
 public:
  TaskFabric(LogicalClock& clock, TxSink sink, std::uint32_t max_attempts = 5);

  void register_worker(SourceId worker);
  bool worker_registered(SourceId worker) const;

  // Pure query: duplicate iff some non-flagged task already carries the same
  // payload hash (canonical fixed-precision policy encoding).
  DedupeResult dedupe_check(const Policy& p) const;

  // Enqueues a fresh task and emits a TaskSubmitted event. A duplicate
  // payload returns the existing non-flagged task instead of enqueuing.
  Task submit_task(const Policy& p);

  // FIFO claim of one queued task, skipping tasks whose excluded reporter is
  // this worker. Returns nullopt when nothing is claimable.
  std::optional<Task> claim_task(SourceId worker);

  // Stores the (task, attempt) result, moves the task to awaiting_validation,
  // and emits a ResultReported event. Wrong worker or wrong status throws
  // ProtocolError and leaves all state untouched.
  ResultRecord post_result(SourceId worker, TaskId task_id, RewardVector reward,
                           std::vector<std::uint8_t> report_bits = {});

  // Valid verdict: awaiting_validation -> committed.
  void commit(TaskId task_id);

  // Invalid verdict: re-queue with attempt+1 and the previous reporter
  // excluded from the next claim, or flag the task once the attempt cap is
  // reached (emits InvalidFlagged plus an operator event, and frees the
  // payload hash for future submissions).
  Task redispatch(TaskId task_id);

  Task task(TaskId id) const;
  std::size_t queue_length() const;
  FabricCounts counts() const;
  std::uint32_t max_attempts() const { return max_attempts_; }

  std::vector<Task> snapshot_tasks() const;
  std::vector<ResultRecord> snapshot_results() const;

  // Operator event log (task flags, validation aborts).
  void log_event(std::string message);
  std::vector<std::string> snapshot_events() const;

  // Result store as newline-delimited JSON, one record per line.
  void write_results_ndjson(const std::filesystem::path& file) const;
  // Task-state snapshot: task_id, itn, irs, status, attempt.
  void write_task_csv(const std::filesystem::path& file) const;

 private:
  Task& task_ref(TaskId id);
  const Task& task_ref(TaskId id) const;

  LogicalClock& clock_;
  TxSink sink_;
  std::uint32_t max_attempts_;

  std::vector<Task> tasks_;  // task_id = index + 1
  std::deque<TaskId> queue_;
  std::unordered_map<Digest32, TaskId, Digest32Hash> live_payloads_;
  std::unordered_set<SourceId> workers_;
  std::vector<ResultRecord> results_;
  std::unordered_map<std::uint64_t, std::size_t> result_index_;  // (task_id<<32|attempt) -> idx
  std::vector<std::string> events_;
  mutable std::mutex mu_;
};

}  // namespace trustbench
